"""StyleSeg objective and the winner-take-all baseline, on probabilistic mask stacks.

Layout follows torch convention: predictions are ``(B, M, H, W)``, ground
truth ``(B, H, W)``, style probabilities ``(B, M)``. Every function also
accepts a single unbatched instance (``(M, H, W)``, ``(H, W)``, ``(M,)``) and
then returns a scalar. Style indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

EPS_LOG = 1e-12


def _batch(gt, preds=None, p=None):
    single = gt.dim() == 2
    if single:
        gt = gt.unsqueeze(0)
        preds = preds.unsqueeze(0) if preds is not None else None
        p = p.unsqueeze(0) if p is not None else None
    if preds is not None and preds.shape[-2:] != gt.shape[-2:]:
        raise ValueError(f"prediction size {tuple(preds.shape[-2:])} != mask size {tuple(gt.shape[-2:])}")
    return single, gt, preds, p


def _unbatch(value, single):
    return value[0] if single else value


def channel_soft_dice(preds, gt, smooth: float = 1.0):
    """Soft Dice of every channel against its ground truth, shape ``(B, M)``."""
    gt = gt.to(preds.dtype).unsqueeze(1)
    inter = (preds * gt).sum(dim=(-2, -1))
    denom = preds.sum(dim=(-2, -1)) + gt.sum(dim=(-2, -1))
    return (2.0 * inter + smooth) / (denom + smooth)


def best_style_index(gt, preds, smooth: float = 1.0, hard: bool = False):
    """Index of the channel closest to ``gt`` by Dice; lowest index wins ties.

    With ``hard=True`` channels are thresholded at 0.5 before scoring.
    """
    single, gt, preds, _ = _batch(gt, preds)
    with torch.no_grad():
        scored = (preds >= 0.5).to(preds.dtype) if hard else preds
        m_star = channel_soft_dice(scored, gt, smooth).argmax(dim=1)
    return _unbatch(m_star, single)


def loss_l1(gt, preds, smooth: float = 1.0, m_star=None):
    """Dice loss of the best-matching channel only."""
    single, gt, preds, _ = _batch(gt, preds)
    if m_star is None:
        m_star = best_style_index(gt, preds, smooth)
    elif single:
        m_star = torch.as_tensor(m_star).reshape(1)
    chosen = preds[torch.arange(preds.shape[0]), m_star]
    value = 1.0 - channel_soft_dice(chosen.unsqueeze(1), gt, smooth)[:, 0]
    return _unbatch(value, single)


def loss_l2(gt, preds, p, smooth: float = 1.0):
    """Dice loss of the probability-weighted mixture of all channels."""
    single, gt, preds, p = _batch(gt, preds, p)
    mixture = (p.to(preds.dtype)[:, :, None, None] * preds).sum(dim=1).clamp(0.0, 1.0)
    value = 1.0 - channel_soft_dice(mixture.unsqueeze(1), gt, smooth)[:, 0]
    return _unbatch(value, single)


def loss_l3(p, m_star):
    """Cross-entropy of the style probabilities against the selected style."""
    single = p.dim() == 1
    if single:
        p = p.unsqueeze(0)
        m_star = torch.as_tensor(m_star).reshape(1)
    picked = p[torch.arange(p.shape[0]), m_star]
    # p = 1 would give -log(1 + eps) < 0
    return _unbatch((-torch.log(picked + EPS_LOG)).clamp_min(0.0), single)


@dataclass
class LossBreakdown:
    l1: torch.Tensor
    l2: torch.Tensor
    l3: torch.Tensor
    total: torch.Tensor
    m_star: torch.Tensor


def total_loss(gt, preds, p, smooth: float = 1.0, weights=(1.0, 1.0, 1.0), hard_selection=False):
    """``w1*L1 + w2*L2 + w3*L3`` with a single shared selection; batch-mean reduced."""
    single, gt, preds, p = _batch(gt, preds, p)
    m_star = best_style_index(gt, preds, smooth, hard=hard_selection)
    l1 = loss_l1(gt, preds, smooth, m_star=m_star).mean()
    l2 = loss_l2(gt, preds, p, smooth).mean()
    l3 = loss_l3(p, m_star).mean()
    w1, w2, w3 = weights
    total = w1 * l1 + w2 * l2 + w3 * l3
    return LossBreakdown(l1, l2, l3, total, _unbatch(m_star, single))


def mhp_loss(gt, preds, eps: float = 0.05, smooth: float = 1.0):
    """Relaxed winner-take-all: weight ``1 - eps`` on the best channel, ``eps/(M-1)`` elsewhere."""
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must be in [0, 1)")
    single, gt, preds, _ = _batch(gt, preds)
    m = preds.shape[1]
    if m < 2:
        raise ValueError("mhp_loss needs at least 2 channels")
    per_channel = 1.0 - channel_soft_dice(preds, gt, smooth)
    m_star = best_style_index(gt, preds, smooth)
    weights = torch.full_like(per_channel, eps / (m - 1))
    weights[torch.arange(preds.shape[0]), m_star] = 1.0 - eps
    return _unbatch((weights * per_channel).sum(dim=1), single)


def naive_loss(gt, preds, smooth: float = 1.0):
    """Plain Dice loss of a single-channel prediction."""
    single, gt, preds, _ = _batch(gt, preds)
    if preds.shape[1] != 1:
        raise ValueError("naive_loss expects exactly one channel")
    return _unbatch(1.0 - channel_soft_dice(preds, gt, smooth)[:, 0], single)
