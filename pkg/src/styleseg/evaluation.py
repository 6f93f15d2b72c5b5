"""Evaluation protocols: per-style Dice statistics, IASS/ASSS, AS2 and shape consistency.

Style indices are 0-based in memory. CSV files number styles from 1
(``d_1..d_M``, ``m_best``, ``J``, ``modal_style``, ``style``).
"""

from __future__ import annotations

import csv
import io
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

from .data import AnnotatedSample
from .metrics import ShapeFeatures, as2, normalized_style_shapes, shape_features
from .models import SegmentationNet

GROUP_KEYS = ("preference", "tool", "annotator", "planted_style")


@dataclass
class EvalRecord:
    image_id: str
    k: int
    dice_per_style: np.ndarray
    m_best: int
    preference_label: str | None = None
    planted_style: int | None = None

    @property
    def m(self) -> int:
        return len(self.dice_per_style)


def _hard_dice_rows(binary: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Dice of every (M, H, W) channel against one (H, W) mask; empty-vs-empty is 1."""
    gt = gt.astype(bool)
    inter = np.logical_and(binary, gt).reshape(binary.shape[0], -1).sum(1)
    total = binary.reshape(binary.shape[0], -1).sum(1) + gt.sum()
    out = np.ones(binary.shape[0])
    nz = total > 0
    out[nz] = 2.0 * inter[nz] / total[nz]
    return out


@torch.no_grad()
def predict_stacks(model: SegmentationNet, samples: Sequence[AnnotatedSample], batch_size: int = 16) -> dict:
    """Map image id -> (M, H, W) probability stack, computed in inference mode."""
    size = model.config.resolution
    model.eval()
    out = {}
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        for s in chunk:
            if s.image.pixels.shape[:2] != (size, size):
                raise ValueError(
                    f"{s.image.id}: image is {s.image.pixels.shape[0]}x{s.image.pixels.shape[1]}, model expects {size}x{size}"
                )
        x = torch.stack([torch.as_tensor(s.image.pixels, dtype=torch.float32).permute(2, 0, 1) for s in chunk])
        for s, stack in zip(chunk, model(x).numpy()):
            out[s.image.id] = stack
    return out


def evaluate_corpus(model: SegmentationNet, samples: Sequence[AnnotatedSample], threshold: float = 0.5) -> list[EvalRecord]:
    """One record per (image, ground-truth mask) with hard Dice of every style."""
    return records_from_stacks(predict_stacks(model, samples), samples, threshold)


def records_from_stacks(stacks: dict, samples: Sequence[AnnotatedSample], threshold: float = 0.5) -> list[EvalRecord]:
    """Score precomputed ``(M, H, W)`` stacks, keyed by image id, against every mask."""
    records = []
    for s in samples:
        binary = stacks[s.image.id] >= threshold
        for k, mask in enumerate(s.masks):
            d = _hard_dice_rows(binary, mask.grid)
            records.append(
                EvalRecord(s.image.id, k, d, int(np.argmax(d)), mask.source_label, mask.planted_style)
            )
    return records


def _mean_std(values) -> tuple[float, float]:
    arr = np.asarray(list(values), dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def style_statistics(records: Sequence[EvalRecord]) -> dict[str, tuple[float, float]]:
    """Mean and std across records of each record's max/mean/median/min style Dice."""
    if not records:
        raise ValueError("no records")
    per = {
        "mean": [float(np.mean(r.dice_per_style)) for r in records],
        "median": [float(np.median(r.dice_per_style)) for r in records],
        "min": [float(np.min(r.dice_per_style)) for r in records],
        "max": [float(np.max(r.dice_per_style)) for r in records],
    }
    return {k: _mean_std(v) for k, v in per.items()}


def dice_iass(records: Sequence[EvalRecord]) -> tuple[float, float]:
    """Image-adaptive selection: best style per record, aggregated."""
    if not records:
        raise ValueError("no records")
    return _mean_std(float(np.max(r.dice_per_style)) for r in records)


def dice_asss(records: Sequence[EvalRecord]) -> tuple[int, float, float]:
    """Annotator-specific selection: the single style maximising summed Dice.

    Returns ``(J, mean, std)`` with ``J`` 0-based; ties go to the lowest index.
    """
    if not records:
        raise ValueError("dice_asss of an empty group")
    table = np.stack([r.dice_per_style for r in records])
    j = int(np.argmax(table.sum(axis=0)))
    mean, std = _mean_std(table[:, j])
    return j, mean, std


def assignment_fractions(records: Sequence[EvalRecord], m: int | None = None) -> np.ndarray:
    if not records:
        raise ValueError("empty group")
    m = m or records[0].m
    counts = np.bincount([r.m_best for r in records], minlength=m).astype(np.float64)
    return counts / counts.sum()


def style_assignment(records: Sequence[EvalRecord], m: int | None = None) -> tuple[np.ndarray, float]:
    """Fractions of records whose best style is each j, and their AS2."""
    q = assignment_fractions(records, m)
    if q.size < 2:
        raise ValueError("AS2 undefined for a single style")
    return q, as2(q)


def group_of(record: EvalRecord, key: str):
    if key not in GROUP_KEYS:
        raise ValueError(f"group key must be one of {GROUP_KEYS}")
    if key == "planted_style":
        if record.planted_style is None:
            raise KeyError(f"record {record.image_id}/{record.k} has no planted_style")
        return record.planted_style
    label = record.preference_label
    if not label:
        raise KeyError(f"record {record.image_id}/{record.k} has no preference label for key {key!r}")
    if key == "preference":
        return label
    parts = label.split("+")
    index = 0 if key == "annotator" else 1
    if len(parts) <= index:
        raise KeyError(f"preference label {label!r} has no {key} component")
    return parts[index]


@dataclass
class GroupAssignment:
    group: object
    count: int
    q: np.ndarray
    as2: float
    modal_style: int


@dataclass
class GroupTable:
    key: str
    rows: list[GroupAssignment] = field(default_factory=list)

    @property
    def modal_styles_distinct(self) -> bool:
        modes = [r.modal_style for r in self.rows]
        return len(set(modes)) == len(modes)

    def as2_summary(self) -> tuple[float, float]:
        return _mean_std(r.as2 for r in self.rows)


def _partition(records: Iterable[EvalRecord], key: str) -> dict:
    groups = defaultdict(list)
    for r in records:
        groups[group_of(r, key)].append(r)
    return dict(sorted(groups.items(), key=lambda kv: str(kv[0])))


def group_style_assignment(records: Sequence[EvalRecord], key: str = "preference") -> GroupTable:
    """Per-group assignment fractions, AS2 and modal (most often best) style."""
    table = GroupTable(key)
    for group, recs in _partition(records, key).items():
        q, value = style_assignment(recs)
        table.rows.append(GroupAssignment(group, len(recs), q, value, int(np.argmax(q))))
    return table


@dataclass
class PreferenceReport:
    preference_label: str
    count: int
    dice_iass: tuple[float, float]
    dice_asss: tuple[float, float]
    chosen_style: int


def preference_reports(records: Sequence[EvalRecord]) -> list[PreferenceReport]:
    reports = []
    for label, recs in _partition(records, "preference").items():
        j, mean, std = dice_asss(recs)
        reports.append(PreferenceReport(label, len(recs), dice_iass(recs), (mean, std), j))
    return reports


@dataclass
class ConsistencyResult:
    rows: list[tuple[str, int, float, float]]
    centroids: dict[int, tuple[float, float]]
    missing: list[tuple[str, int]]


def consistency_analysis(model: SegmentationNet, samples: Sequence[AnnotatedSample], threshold: float = 0.5) -> ConsistencyResult:
    """Shape features of each thresholded style, normalised per image by style 1."""
    stacks = predict_stacks(model, samples)
    per_image: dict[str, list[ShapeFeatures | None]] = {}
    missing = []
    for s in samples:
        feats = []
        for j, channel in enumerate(stacks[s.image.id]):
            binary = channel >= threshold
            if not binary.any():
                feats.append(None)
                missing.append((s.image.id, j))
            else:
                feats.append(shape_features(binary))
        per_image[s.image.id] = feats
    rows = normalized_style_shapes(per_image)
    by_style = defaultdict(list)
    for _, j, a, p in rows:
        by_style[j].append((a, p))
    centroids = {j: tuple(np.mean(v, axis=0).tolist()) for j, v in sorted(by_style.items())}
    return ConsistencyResult(rows, centroids, missing)


# ---------------------------------------------------------------------------
# CSV


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _num(x: float) -> str:
    return repr(float(x))


def records_csv(records: Sequence[EvalRecord]) -> str:
    m = records[0].m if records else 0
    header = ["image_id", "k", "preference_label"] + [f"d_{j + 1}" for j in range(m)] + ["m_best"]
    rows = (
        [r.image_id, r.k, r.preference_label or ""] + [_num(d) for d in r.dice_per_style] + [r.m_best + 1]
        for r in records
    )
    return _csv_text(header, rows)


def read_records_csv(path) -> list[EvalRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = [c for c in reader.fieldnames or [] if c.startswith("d_")]
        missing = {"image_id", "k", "preference_label", "m_best"} - set(reader.fieldnames or [])
        if missing or not cols:
            raise ValueError(f"{path}: not a records.csv (missing {sorted(missing) or 'd_* columns'})")
        records = []
        for row in reader:
            d = np.array([float(row[c]) for c in cols])
            records.append(EvalRecord(row["image_id"], int(row["k"]), d, int(row["m_best"]) - 1, row["preference_label"] or None))
    return records


def preferences_csv(reports: Sequence[PreferenceReport]) -> str:
    header = ["preference_label", "count", "dice_iass_mean", "dice_iass_std", "dice_asss_mean", "dice_asss_std", "J"]
    rows = (
        [r.preference_label, r.count, _num(r.dice_iass[0]), _num(r.dice_iass[1]), _num(r.dice_asss[0]), _num(r.dice_asss[1]), r.chosen_style + 1]
        for r in reports
    )
    return _csv_text(header, rows)


def assignment_csv(table: GroupTable) -> str:
    m = len(table.rows[0].q) if table.rows else 0
    header = ["group"] + [f"q_{j + 1}" for j in range(m)] + ["as2", "modal_style"]
    rows = ([r.group] + [_num(x) for x in r.q] + [_num(r.as2), r.modal_style + 1] for r in table.rows)
    return _csv_text(header, rows)


def shapes_csv(result: ConsistencyResult) -> str:
    header = ["image_id", "style", "area_ratio", "perimeter_ratio"]
    rows = ([i, j + 1, _num(a), _num(p)] for i, j, a, p in result.rows)
    return _csv_text(header, rows)


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path


def modal_counts(records: Sequence[EvalRecord]) -> Counter:
    return Counter(r.m_best for r in records)
