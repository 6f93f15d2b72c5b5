"""Image/mask types, corpus ingestion, and the synthetic multi-style generator.

On-disk corpus layout::

    <root>/images/<image_id>.png        8-bit RGB
    <root>/masks/<image_id>__<k>.png    8-bit grayscale, {0, 255}
    <root>/manifest.csv                 image_id,mask_file,preference_label,planted_style,split
"""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

logger = logging.getLogger(__name__)

MANIFEST_FIELDS = ("image_id", "mask_file", "preference_label", "planted_style", "split")
SPLITS = ("train", "val", "test")
_ID_RE = re.compile(r"^[A-Za-z0-9_-]+$")


class CorpusError(Exception):
    """Malformed corpus directory or manifest."""


class ConfigError(ValueError):
    """Invalid generator or ingestion configuration."""


@dataclass
class ImageSample:
    id: str
    pixels: np.ndarray  # (H, W, 3) float32 in [0, 1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class BinaryMask:
    grid: np.ndarray  # (H, W) uint8 in {0, 1}
    source_label: str | None = None
    planted_style: int | None = None


@dataclass
class AnnotatedSample:
    image: ImageSample
    masks: list[BinaryMask]
    split: str | None = None

    @property
    def k(self) -> int:
        return len(self.masks)


@dataclass(frozen=True)
class ManifestRow:
    image_id: str
    mask_file: str
    preference_label: str | None = None
    planted_style: int | None = None
    split: str = "train"


@dataclass
class CorpusManifest:
    rows: list[ManifestRow] = field(default_factory=list)

    @property
    def splits(self) -> dict[str, str]:
        return {row.image_id: row.split for row in self.rows}

    def image_ids(self, split: str | None = None) -> list[str]:
        seen = dict.fromkeys(r.image_id for r in self.rows if split is None or r.split == split)
        return list(seen)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for r in self.rows:
            writer.writerow(
                [
                    r.image_id,
                    r.mask_file,
                    r.preference_label or "",
                    "" if r.planted_style is None else r.planted_style,
                    r.split,
                ]
            )
        return buf.getvalue()

    @classmethod
    def read(cls, path: Path) -> "CorpusManifest":
        path = Path(path)
        if not path.exists():
            raise CorpusError(f"manifest not found: {path}")
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != MANIFEST_FIELDS:
                raise CorpusError(f"{path}: header must be {','.join(MANIFEST_FIELDS)}")
            rows = []
            split_of: dict[str, str] = {}
            for lineno, rec in enumerate(reader, start=2):
                where = f"{path.name} line {lineno} ({rec['image_id']},{rec['mask_file']})"
                if not _ID_RE.match(rec["image_id"] or ""):
                    raise CorpusError(f"{where}: bad image_id")
                if rec["split"] not in SPLITS:
                    raise CorpusError(f"{where}: split must be one of {SPLITS}")
                if split_of.setdefault(rec["image_id"], rec["split"]) != rec["split"]:
                    raise CorpusError(f"{where}: image assigned to two splits")
                try:
                    style = int(rec["planted_style"]) if rec["planted_style"] else None
                except ValueError:
                    raise CorpusError(f"{where}: planted_style is not an integer") from None
                rows.append(
                    ManifestRow(
                        image_id=rec["image_id"],
                        mask_file=rec["mask_file"],
                        preference_label=rec["preference_label"] or None,
                        planted_style=style,
                        split=rec["split"],
                    )
                )
        return cls(rows)


@dataclass
class IngestConfig:
    resolution: int = 64


def _read_image(path: Path, resolution: int) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        if im.size != (resolution, resolution):
            im = im.resize((resolution, resolution), Image.BILINEAR)
        return np.asarray(im, dtype=np.float32) / 255.0


def _read_mask(path: Path, resolution: int) -> np.ndarray:
    with Image.open(path) as im:
        raw = np.asarray(im.convert("L"))
    peak = int(raw.max())
    binary = (raw >= 0.5 * peak).astype(np.uint8) if peak > 0 else np.zeros_like(raw, np.uint8)
    if binary.shape != (resolution, resolution):
        resized = Image.fromarray(binary * 255).resize((resolution, resolution), Image.NEAREST)
        binary = (np.asarray(resized) > 127).astype(np.uint8)
    return binary


def load_corpus(root, config: IngestConfig | None = None):
    """Read a corpus directory into ``(samples, manifest)``.

    Images are resized bilinearly and masks by nearest neighbour to
    ``config.resolution``. Masks are binarised at half their maximum value.
    Identical masks of one image are dropped; empty masks are kept with a
    warning.
    """
    config = config or IngestConfig()
    root = Path(root)
    manifest = CorpusManifest.read(root / "manifest.csv")
    by_image: dict[str, AnnotatedSample] = {}
    for lineno, row in enumerate(manifest.rows, start=2):
        where = f"manifest.csv line {lineno} ({row.image_id},{row.mask_file})"
        mask_path = root / row.mask_file
        if not mask_path.is_file():
            raise CorpusError(f"{where}: missing mask file {mask_path}")
        sample = by_image.get(row.image_id)
        if sample is None:
            image_path = root / "images" / f"{row.image_id}.png"
            if not image_path.is_file():
                raise CorpusError(f"{where}: missing image file {image_path}")
            pixels = _read_image(image_path, config.resolution)
            sample = AnnotatedSample(ImageSample(row.image_id, pixels), [], row.split)
            by_image[row.image_id] = sample
        grid = _read_mask(mask_path, config.resolution)
        if not grid.any():
            logger.warning("%s: empty mask kept", where)
        if any(np.array_equal(grid, m.grid) for m in sample.masks):
            logger.warning("%s: duplicate mask dropped", where)
            continue
        sample.masks.append(BinaryMask(grid, row.preference_label, row.planted_style))
    return list(by_image.values()), manifest


# ---------------------------------------------------------------------------
# synthetic generation


@dataclass(frozen=True)
class StyleParams:
    margin: int = 0
    jaggedness_amplitude: float = 0.0
    jaggedness_frequency: int = 8
    smoothing_radius: int = 0
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.jaggedness_amplitude < 0:
            raise ConfigError("jaggedness_amplitude must be non-negative")
        if self.jaggedness_frequency < 1:
            raise ConfigError("jaggedness_frequency must be positive")
        if self.smoothing_radius < 0:
            raise ConfigError("smoothing_radius must be non-negative")


@dataclass
class SynthConfig:
    n_images: int = 200
    resolution: int = 64
    styles: list[StyleParams] = field(default_factory=list)
    coverage_p: float = 1.0
    seed: int = 0
    area_range: tuple[float, float] = (0.15, 0.35)
    noise_sigma: float = 0.05
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)

    def validate(self) -> None:
        if self.n_images < 1:
            raise ConfigError("n_images must be at least 1")
        if len(self.styles) < 2:
            raise ConfigError("at least 2 styles are required")
        if len(set(self.styles)) != len(self.styles):
            raise ConfigError("styles must be distinct")
        if self.resolution < 32:
            raise ConfigError("resolution must be at least 32")
        if not 0.0 < self.coverage_p <= 1.0:
            raise ConfigError("coverage_p must be in (0, 1]")
        lo, hi = self.area_range
        if not 0.05 <= lo <= hi <= 0.40:
            raise ConfigError("area_range must lie within [0.05, 0.40]")
        for s in self.styles:
            if abs(s.margin) >= self.resolution / 4:
                raise ConfigError(f"style {s.name or s}: |margin| must be < resolution/4")
        fr = self.split_fractions
        if len(fr) != 3 or min(fr) < 0 or not math.isclose(sum(fr), 1.0, abs_tol=1e-6):
            raise ConfigError("split_fractions must be three non-negative numbers summing to 1")


def _disk(radius: int) -> np.ndarray:
    y, x = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    return x * x + y * y <= radius * radius


def _largest_component(grid: np.ndarray) -> np.ndarray:
    labels, count = ndimage.label(grid, structure=np.ones((3, 3)))
    if count <= 1:
        return grid
    sizes = ndimage.sum(grid, labels, index=np.arange(1, count + 1))
    return labels == (1 + int(np.argmax(sizes)))


def generate_base_shape(seed: int, resolution: int, area_range=(0.05, 0.40)) -> BinaryMask:
    """A filled star-convex blob covering 5-40% of the frame, centred in its middle half."""
    resolution = max(32, int(resolution))
    lo, hi = max(0.05, area_range[0]), min(0.40, area_range[1])
    rng = np.random.default_rng(seed)
    target = rng.uniform(lo, hi)
    harmonics = np.arange(2, 5)
    amps = rng.uniform(0.0, 0.12, size=harmonics.size)
    phases = rng.uniform(0.0, 2 * np.pi, size=harmonics.size)
    n = resolution
    total = float(n * n)

    scale = math.sqrt(target * total / (math.pi * (1.0 + 0.5 * float((amps**2).sum()))))
    r_max = scale * (1.0 + amps.sum())
    lo_c, hi_c = 0.25 * n, 0.75 * n
    # keep the blob inside the frame where the middle half allows it
    lo_fit, hi_fit = max(lo_c, r_max + 1), min(hi_c, n - 1 - r_max - 1)
    if lo_fit > hi_fit:
        lo_fit = hi_fit = (n - 1) / 2.0
    cy, cx = rng.uniform(lo_fit, hi_fit, size=2)
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    dist = np.hypot(yy - cy, xx - cx)
    theta = np.arctan2(yy - cy, xx - cx).ravel()
    wob = 1.0 + (amps[:, None] * np.cos(harmonics[:, None] * theta + phases[:, None])).sum(0)
    wob = wob.reshape(n, n)
    grid = np.zeros((n, n), dtype=bool)
    for _ in range(50):
        grid = dist <= scale * wob
        grid = ndimage.binary_fill_holes(_largest_component(grid))
        frac = grid.sum() / total
        if frac < 0.05:
            scale *= 1.05
        elif frac > 0.40:
            scale *= 0.97
        else:
            break
    return BinaryMask(grid.astype(np.uint8))


def _signed_distance(grid: np.ndarray) -> np.ndarray:
    """Negative inside, positive outside; |value| >= 1 everywhere."""
    inside = ndimage.distance_transform_edt(grid)
    outside = ndimage.distance_transform_edt(~grid)
    return np.where(grid, -inside, outside)


def _apply_style(grid: np.ndarray, style: StyleParams, margin: int) -> np.ndarray:
    out = grid
    if margin > 0:
        out = ndimage.binary_dilation(out, structure=_disk(margin))
    elif margin < 0:
        out = ndimage.binary_erosion(out, structure=_disk(-margin))
    if style.jaggedness_amplitude > 0 and out.any():
        cy, cx = ndimage.center_of_mass(out)
        yy, xx = np.mgrid[0 : out.shape[0], 0 : out.shape[1]]
        theta = np.arctan2(yy - cy, xx - cx)
        phase = np.random.default_rng(style.seed).uniform(0.0, 2 * np.pi)
        level = style.jaggedness_amplitude * np.sin(style.jaggedness_frequency * theta + phase)
        sd = _signed_distance(out)
        out = (sd < level) | ((sd == level) & (level >= 0))
    if style.smoothing_radius > 0 and out.any():
        kernel = _disk(style.smoothing_radius).astype(np.float64)
        kernel /= kernel.sum()
        out = ndimage.convolve(out.astype(np.float64), kernel, mode="constant") >= 0.5
    return out


def render_style(base: BinaryMask, style: StyleParams) -> BinaryMask:
    """Redraw ``base`` under an annotation style.

    Dilates (margin > 0) or erodes (margin < 0) with a disk, perturbs the
    boundary radially by ``amplitude * sin(frequency * angle + phase)``, then
    applies a disk majority filter. If the result would be empty the margin is
    moved towards zero until it is not.
    """
    grid = np.asarray(base.grid).astype(bool)
    if not grid.any():
        raise ValueError("render_style needs a non-empty base mask")
    if abs(style.margin) >= min(grid.shape) / 4:
        raise ValueError("|margin| must be below a quarter of the frame size")
    margin = style.margin
    out = _apply_style(grid, style, margin)
    while not out.any():
        margin += 1 if margin < 0 else -1
        logger.warning("style %s empties the mask; margin reduced to %d", style.name, margin)
        out = _apply_style(grid, style, margin)
        if margin == 0 and not out.any():
            out = grid
            break
    return BinaryMask(out.astype(np.uint8), source_label=style.name or None)


def render_image(base: BinaryMask, seed: int, noise_sigma: float = 0.05) -> np.ndarray:
    """Skin-like background with a darker textured lesion occupying ``base``."""
    rng = np.random.default_rng(seed)
    grid = np.asarray(base.grid).astype(bool)
    h, w = grid.shape
    skin = np.array([0.86, 0.68, 0.58]) + rng.uniform(-0.05, 0.05, size=3)
    lesion = np.array([0.45, 0.30, 0.22]) + rng.uniform(-0.05, 0.05, size=3)
    texture = ndimage.gaussian_filter(rng.normal(0.0, 1.0, size=(h, w)), sigma=2.0)
    texture = texture / (np.abs(texture).max() + 1e-12)
    soft = ndimage.gaussian_filter(grid.astype(np.float64), sigma=0.7)[..., None]
    img = (1.0 - soft) * skin + soft * (lesion + 0.08 * texture[..., None])
    img = img + rng.normal(0.0, noise_sigma, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def _image_seeds(master_seed: int, index: int, n_styles: int) -> list[int]:
    ss = np.random.SeedSequence([master_seed, index])
    return [int(s.generate_state(1)[0]) for s in ss.spawn(3 + n_styles)]


def generate_synthetic_corpus(config: SynthConfig, root) -> CorpusManifest:
    """Write a synthetic corpus with planted styles under ``root``."""
    config.validate()
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    n = config.n_images
    order = np.random.default_rng([config.seed, 0x5EED]).permutation(n)
    n_train = int(round(config.split_fractions[0] * n))
    n_val = int(round(config.split_fractions[1] * n))
    split_of = {}
    for rank, idx in enumerate(order):
        split_of[int(idx)] = "train" if rank < n_train else ("val" if rank < n_train + n_val else "test")

    rows = []
    for i in range(n):
        image_id = f"img_{i:04d}"
        seeds = _image_seeds(config.seed, i, len(config.styles))
        base = generate_base_shape(seeds[0], config.resolution, config.area_range)
        pixels = render_image(base, seeds[1], config.noise_sigma)
        Image.fromarray(np.round(pixels * 255).astype(np.uint8), "RGB").save(
            root / "images" / f"{image_id}.png"
        )
        cover_rng = np.random.default_rng(seeds[2])
        chosen = []
        while not chosen:
            chosen = [s for s in range(len(config.styles)) if cover_rng.random() < config.coverage_p]
        for k, s in enumerate(chosen):
            style = config.styles[s]
            per_image = StyleParams(
                margin=style.margin,
                jaggedness_amplitude=style.jaggedness_amplitude,
                jaggedness_frequency=style.jaggedness_frequency,
                smoothing_radius=style.smoothing_radius,
                seed=seeds[3 + s] ^ style.seed,
                name=style.name,
            )
            mask = render_style(base, per_image)
            mask_file = f"masks/{image_id}__{k}.png"
            Image.fromarray(mask.grid * 255, "L").save(root / mask_file)
            rows.append(
                ManifestRow(image_id, mask_file, style.name or f"S{s}", s, split_of[i])
            )
    manifest = CorpusManifest(rows)
    (root / "manifest.csv").write_text(manifest.to_csv(), encoding="utf-8")
    return manifest
