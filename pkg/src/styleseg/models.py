"""The M-headed segmentation network and the style classifier."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn


@dataclass
class SegModelConfig:
    m: int = 2
    in_channels: int = 3
    base_width: int = 16
    n_stages: int = 4
    resolution: int = 64
    fusion_mode: str = "bilinear"
    head_bias_spread: float = 1.0

    def validate(self) -> None:
        if self.m < 1:
            raise ValueError("segmentation model needs M >= 1")
        if self.n_stages < 2:
            raise ValueError("n_stages must be >= 2")
        if self.resolution % (2 ** (self.n_stages - 1)):
            raise ValueError("resolution must be divisible by 2**(n_stages - 1)")


@dataclass
class ClsModelConfig:
    m: int = 2
    in_channels: int = 4
    width: int = 16
    depth: int = 4
    resolution: int = 64

    def validate(self) -> None:
        if self.m < 2:
            raise ValueError("style classifier needs M >= 2")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")


def _block(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1),
        nn.GroupNorm(min(4, cout), cout),
        nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1),
        nn.GroupNorm(min(4, cout), cout),
        nn.ReLU(inplace=True),
    )


class SegmentationNet(nn.Module):
    """Conv encoder whose stage outputs are upsampled, concatenated and fused.

    A 1x1 convolution maps the fused features to M sigmoid channels. With
    ``m=1`` this is the single-output baseline.
    """

    def __init__(self, config: SegModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        widths = [config.base_width * 2**s for s in range(config.n_stages)]
        stages, cin = [], config.in_channels
        for w in widths:
            stages.append(_block(cin, w))
            cin = w
        self.stages = nn.ModuleList(stages)
        self.head = nn.Conv2d(sum(widths), config.m, kernel_size=1)
        if config.m > 1:
            # channels start at staggered thresholds so the winner-take-all
            # selection can tell them apart from the first step
            with torch.no_grad():
                self.head.bias.copy_(torch.linspace(-config.head_bias_spread, config.head_bias_spread, config.m))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        size = self.config.resolution
        if x.shape[-2:] != (size, size):
            raise ValueError(f"expected {size}x{size} input, got {tuple(x.shape[-2:])}")
        feats = []
        for i, stage in enumerate(self.stages):
            if i:
                x = F.max_pool2d(x, 2)
            x = stage(x)
            feats.append(x)
        align = False if self.config.fusion_mode in ("bilinear", "bicubic") else None
        fused = torch.cat(
            [f if f.shape[-1] == size else F.interpolate(f, size=(size, size), mode=self.config.fusion_mode, align_corners=align)
             for f in feats],
            dim=1,
        )
        return torch.sigmoid(self.head(fused))


class StyleClassifier(nn.Module):
    """Image + mask (4 channels) -> softmax over M styles."""

    def __init__(self, config: ClsModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        layers, cin = [], config.in_channels
        for d in range(config.depth):
            cout = config.width * 2 ** min(d, 3)
            layers += [
                nn.Conv2d(cin, cout, 3, padding=1, stride=1 if d == 0 else 2),
                nn.GroupNorm(min(4, cout), cout),
                nn.ReLU(inplace=True),
            ]
            cin = cout
        self.features = nn.Sequential(*layers)
        self.fc = nn.Linear(cin, config.m)
        # uniform style distribution at initialisation
        nn.init.zeros_(self.fc.weight)
        nn.init.zeros_(self.fc.bias)

    def logits(self, image: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        if mask.dim() == image.dim() - 1:
            mask = mask.unsqueeze(-3)
        if image.shape[-2:] != mask.shape[-2:]:
            raise ValueError(f"image {tuple(image.shape[-2:])} and mask {tuple(mask.shape[-2:])} differ")
        x = torch.cat([image, mask.to(image.dtype)], dim=-3)
        x = self.features(x)
        return self.fc(x.mean(dim=(-2, -1)))

    def forward(self, image: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.logits(image, mask), dim=-1)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def to_tensor_image(pixels) -> torch.Tensor:
    """(H, W, 3) array in [0, 1] -> (3, H, W) float tensor."""
    return torch.as_tensor(pixels, dtype=torch.float32).permute(2, 0, 1).contiguous()


@torch.no_grad()
def forward_segmentation(model: SegmentationNet, pixels) -> torch.Tensor:
    """Inference on one (H, W, 3) image; returns the (H, W, M) probability stack."""
    model.eval()
    out = model(to_tensor_image(pixels).unsqueeze(0))[0]
    return out.permute(1, 2, 0)


@torch.no_grad()
def forward_classifier(model: StyleClassifier, pixels, mask) -> torch.Tensor:
    """Inference on one (image, mask) pair; returns the length-M style distribution."""
    model.eval()
    grid = torch.as_tensor(getattr(mask, "grid", mask), dtype=torch.float32)
    return model(to_tensor_image(pixels).unsqueeze(0), grid.unsqueeze(0))[0]
