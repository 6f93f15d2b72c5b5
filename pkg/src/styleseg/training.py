"""Joint optimisation of the segmentation model and style classifier.

Checkpoints live under ``checkpoint_dir`` as ``epoch_<n>/`` directories, each
holding ``model.pt`` (torch archive: weights, optimiser state, config, run
history) and a plain-JSON sidecar ``checkpoint.json``. ``best.txt`` names the
epoch with the lowest validation loss and ``runlog.csv`` holds per-epoch
losses.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .data import AnnotatedSample, ConfigError
from .losses import loss_l1, mhp_loss, naive_loss, total_loss
from .models import ClsModelConfig, SegModelConfig, SegmentationNet, StyleClassifier

logger = logging.getLogger(__name__)

MODES = ("styleseg", "mhp", "naive")
RUNLOG_FIELDS = ("epoch", "l1", "l2", "l3", "total", "val_total")
# fields that must agree between a checkpoint and the config resuming it
_RESUME_LOCKED = ("m", "resolution", "mode", "base_width", "n_stages", "head_bias_spread", "cls_width", "cls_depth")


class TrainingError(RuntimeError):
    """Raised when optimisation cannot continue (e.g. a non-finite loss)."""


@dataclass
class TrainConfig:
    mode: str = "styleseg"
    m: int | None = None
    epochs: int = 30
    batch_size: int = 8
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    mhp_eps: float = 0.05
    smooth: float = 1.0
    selection: str = "soft"
    resolution: int = 64
    base_width: int = 8
    n_stages: int = 4
    head_bias_spread: float = 1.0
    cls_width: int = 8
    cls_depth: int = 4
    threads: int = 1
    checkpoint_dir: str = "checkpoints"

    def __post_init__(self):
        if self.m is None:
            self.m = 1 if self.mode == "naive" else 2
        self.loss_weights = tuple(float(w) for w in self.loss_weights)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode: must be one of {MODES}, got {self.mode!r}")
        if self.mode == "naive" and self.m != 1:
            raise ConfigError(f"m: mode=naive requires m=1, got {self.m}")
        if self.mode != "naive" and self.m < 2:
            raise ConfigError(f"m: mode={self.mode} requires m>=2, got {self.m}")
        if self.epochs < 1:
            raise ConfigError("epochs: must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size: must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate: must be positive")
        if self.optimizer != "adam":
            raise ConfigError("optimizer: only 'adam' is supported")
        if len(self.loss_weights) != 3:
            raise ConfigError("loss_weights: need three weights")
        if not 0.0 <= self.mhp_eps < 1.0:
            raise ConfigError("mhp_eps: must be in [0, 1)")
        if self.smooth < 0:
            raise ConfigError("smooth: must be non-negative")
        if self.selection not in ("soft", "hard"):
            raise ConfigError("selection: must be 'soft' or 'hard'")
        try:
            self.seg_config().validate()
            if self.mode == "styleseg":
                self.cls_config().validate()
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from None

    def seg_config(self) -> SegModelConfig:
        return SegModelConfig(
            m=self.m,
            base_width=self.base_width,
            n_stages=self.n_stages,
            resolution=self.resolution,
            head_bias_spread=self.head_bias_spread,
        )

    def cls_config(self) -> ClsModelConfig:
        return ClsModelConfig(m=self.m, width=self.cls_width, depth=self.cls_depth, resolution=self.resolution)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown training key")
        return cls(**values)


@dataclass
class EpochStats:
    epoch: int
    l1: float
    l2: float
    l3: float
    total: float
    val_total: float
    val_entropy: float = float("nan")


@dataclass
class RunLog:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    wall_time: float = 0.0
    threads: int = 1

    @property
    def val_totals(self) -> list[float]:
        return [e.val_total for e in self.epochs]

    def to_csv(self) -> str:
        lines = [",".join(RUNLOG_FIELDS)]
        for e in self.epochs:
            lines.append(",".join([str(e.epoch)] + [repr(float(getattr(e, k))) for k in RUNLOG_FIELDS[1:]]))
        return "\n".join(lines) + "\n"


@dataclass
class Models:
    seg: SegmentationNet
    cls: StyleClassifier | None
    config: TrainConfig

    def parameters(self):
        params = list(self.seg.parameters())
        if self.cls is not None:
            params += list(self.cls.parameters())
        return params

    def train(self, flag: bool = True) -> None:
        self.seg.train(flag)
        if self.cls is not None:
            self.cls.train(flag)


def build_models(cfg: TrainConfig) -> Models:
    torch.manual_seed(cfg.seed)
    seg = SegmentationNet(cfg.seg_config())
    cls = StyleClassifier(cfg.cls_config()) if cfg.mode == "styleseg" else None
    return Models(seg, cls, cfg)


def parameter_digest(models: Models) -> str:
    h = hashlib.sha256()
    for p in models.parameters():
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()


class PairSet:
    """All (image, mask) pairs of a split; an image with K masks yields K pairs."""

    def __init__(self, samples: list[AnnotatedSample]):
        self.images = torch.stack(
            [torch.as_tensor(s.image.pixels, dtype=torch.float32).permute(2, 0, 1) for s in samples]
        ) if samples else torch.empty(0)
        masks, owner, meta = [], [], []
        for i, s in enumerate(samples):
            for k, m in enumerate(s.masks):
                masks.append(torch.as_tensor(m.grid, dtype=torch.float32))
                owner.append(i)
                meta.append((s.image.id, k))
        self.masks = torch.stack(masks) if masks else torch.empty(0)
        self.owner = torch.as_tensor(owner, dtype=torch.long)
        self.meta = meta

    def __len__(self) -> int:
        return len(self.meta)

    def batch(self, idx):
        idx = torch.as_tensor(idx, dtype=torch.long)
        return self.images[self.owner[idx]], self.masks[idx]


def compute_loss(models: Models, images, masks):
    """Mode-specific loss for one batch; returns ``(total, (l1, l2, l3), p)``."""
    cfg = models.config
    preds = models.seg(images)
    if cfg.mode == "styleseg":
        p = models.cls(images, masks)
        br = total_loss(masks, preds, p, cfg.smooth, cfg.loss_weights, hard_selection=cfg.selection == "hard")
        return br.total, (br.l1, br.l2, br.l3), p
    if cfg.mode == "mhp":
        total = mhp_loss(masks, preds, cfg.mhp_eps, cfg.smooth).mean()
        l1 = loss_l1(masks, preds, cfg.smooth).mean().detach()
    else:
        total = naive_loss(masks, preds, cfg.smooth).mean()
        l1 = total.detach()
    zero = torch.zeros((), dtype=total.dtype)
    return total, (l1, zero, zero), None


def style_entropy(p: torch.Tensor) -> torch.Tensor:
    return -(p * torch.log(p + 1e-12)).sum(dim=-1)


@torch.no_grad()
def evaluate_loss(models: Models, pairs: PairSet, batch_size: int) -> tuple[float, float]:
    """Mean validation loss and mean entropy of the style probabilities."""
    models.train(False)
    total, entropy, n = 0.0, 0.0, len(pairs)
    for start in range(0, n, batch_size):
        idx = list(range(start, min(start + batch_size, n)))
        images, masks = pairs.batch(idx)
        loss, _, p = compute_loss(models, images, masks)
        total += float(loss) * len(idx)
        if p is not None:
            entropy += float(style_entropy(p).sum())
    ent = entropy / n if models.config.mode == "styleseg" else float("nan")
    return total / n, ent


def _split(corpus: list[AnnotatedSample], name: str) -> list[AnnotatedSample]:
    return [s for s in corpus if s.split == name]


def save_checkpoint(models: Models, optimizer, epoch: int, log: RunLog, directory: Path) -> Path:
    directory = Path(directory)
    path = directory / f"epoch_{epoch}"
    path.mkdir(parents=True, exist_ok=True)
    cfg = asdict(models.config)
    history = [asdict(e) for e in log.epochs]
    torch.save(
        {
            "config": cfg,
            "seg": models.seg.state_dict(),
            "cls": models.cls.state_dict() if models.cls is not None else None,
            "optimizer": optimizer.state_dict(),
            "epoch": epoch,
            "val_total": log.epochs[-1].val_total,
            "history": history,
        },
        path / "model.pt",
    )
    sidecar = {
        "version": __version__,
        "epoch": epoch,
        "val_total": log.epochs[-1].val_total,
        "config": cfg,
        "metrics": history[-1],
        "history": history,
    }
    (path / "checkpoint.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(path) -> tuple[Models, dict]:
    """Load ``epoch_<n>`` (or a checkpoint root, following ``best.txt``)."""
    path = Path(path)
    if (path / "best.txt").exists():
        path = path / (path / "best.txt").read_text().strip()
    blob = torch.load(path / "model.pt", map_location="cpu", weights_only=False)
    cfg = TrainConfig.from_dict({**blob["config"], "loss_weights": tuple(blob["config"]["loss_weights"])})
    models = build_models(cfg)
    models.seg.load_state_dict(blob["seg"])
    if models.cls is not None and blob["cls"] is not None:
        models.cls.load_state_dict(blob["cls"])
    models.train(False)
    return models, blob


def latest_checkpoint(directory) -> Path | None:
    directory = Path(directory)
    found = []
    for p in directory.glob("epoch_*"):
        suffix = p.name.split("_", 1)[1]
        if suffix.isdigit() and (p / "model.pt").exists():
            found.append((int(suffix), p))
    return max(found)[1] if found else None


def check_resume_compatible(saved: dict, cfg: TrainConfig) -> None:
    mismatched = [k for k in _RESUME_LOCKED if saved.get(k) != getattr(cfg, k)]
    if mismatched:
        detail = ", ".join(f"{k}: checkpoint={saved.get(k)!r} config={getattr(cfg, k)!r}" for k in mismatched)
        raise ConfigError(f"checkpoint incompatible with config ({detail})")
    if saved.get("learning_rate") != cfg.learning_rate:
        logger.warning(
            "resuming with learning_rate %s (checkpoint used %s)", cfg.learning_rate, saved.get("learning_rate")
        )


def train(corpus: list[AnnotatedSample], cfg: TrainConfig, resume_from=None) -> tuple[Path, RunLog]:
    """Train on the ``train`` split, select by ``val`` loss.

    Returns the best checkpoint directory and the run log. ``resume_from``
    names an ``epoch_<n>`` directory to continue from.
    """
    cfg.validate()
    torch.set_num_threads(cfg.threads)
    train_pairs = PairSet(_split(corpus, "train"))
    val_pairs = PairSet(_split(corpus, "val"))
    if len(train_pairs) == 0 or len(val_pairs) == 0:
        raise ConfigError("corpus: train and val splits must both be non-empty")
    out = Path(cfg.checkpoint_dir)
    out.mkdir(parents=True, exist_ok=True)

    models = build_models(cfg)
    optimizer = torch.optim.Adam(models.parameters(), lr=cfg.learning_rate)
    log = RunLog(threads=cfg.threads)
    start_epoch = 1
    if resume_from is not None:
        blob = torch.load(Path(resume_from) / "model.pt", map_location="cpu", weights_only=False)
        check_resume_compatible(blob["config"], cfg)
        models.seg.load_state_dict(blob["seg"])
        if models.cls is not None:
            models.cls.load_state_dict(blob["cls"])
        optimizer.load_state_dict(blob["optimizer"])
        for group in optimizer.param_groups:
            group["lr"] = cfg.learning_rate
        log.epochs = [EpochStats(**e) for e in blob["history"]]
        start_epoch = blob["epoch"] + 1

    t0 = time.perf_counter()
    for epoch in range(start_epoch, cfg.epochs + 1):
        models.train(True)
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_pairs))
        sums = np.zeros(4)
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            images, masks = train_pairs.batch(idx)
            loss, (l1, l2, l3), _ = compute_loss(models, images, masks)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss.item()} at epoch {epoch}, batch {b}")
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            sums += len(idx) * np.array([l1.item(), l2.item(), l3.item(), loss.item()])
        means = sums / len(order)
        val_total, val_entropy = evaluate_loss(models, val_pairs, cfg.batch_size)
        log.epochs.append(EpochStats(epoch, *map(float, means), val_total, val_entropy))
        save_checkpoint(models, optimizer, epoch, log, out)
        logger.info("epoch %d train %.4f val %.4f", epoch, means[3], val_total)

    log.wall_time = time.perf_counter() - t0
    best = min(log.epochs, key=lambda e: (e.val_total, e.epoch))
    log.best_epoch = best.epoch
    (out / "runlog.csv").write_text(log.to_csv())
    (out / "best.txt").write_text(f"epoch_{best.epoch}\n")
    return out / f"epoch_{best.epoch}", log


def resume(checkpoint, corpus: list[AnnotatedSample], cfg: TrainConfig) -> tuple[Path, RunLog]:
    """Continue training from ``checkpoint`` (an ``epoch_<n>`` dir or a checkpoint root)."""
    checkpoint = Path(checkpoint)
    if not (checkpoint / "model.pt").exists():
        latest = latest_checkpoint(checkpoint)
        if latest is None:
            raise ConfigError(f"checkpoint: nothing to resume in {checkpoint}")
        checkpoint = latest
    return train(corpus, cfg, resume_from=checkpoint)


def overfit_single(sample: AnnotatedSample, cfg: TrainConfig, steps: int = 200) -> list[float]:
    """Train repeatedly on one sample's pairs and return the per-step loss."""
    cfg.validate()
    torch.set_num_threads(cfg.threads)
    pairs = PairSet([sample])
    models = build_models(cfg)
    optimizer = torch.optim.Adam(models.parameters(), lr=cfg.learning_rate)
    models.train(True)
    images, masks = pairs.batch(list(range(len(pairs))))
    history = []
    for _ in range(steps):
        loss, _, _ = compute_loss(models, images, masks)
        if not math.isfinite(float(loss.detach())):
            raise TrainingError("non-finite loss while overfitting")
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        history.append(loss.item())
    return history

