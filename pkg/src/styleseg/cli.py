"""Command-line entry point: ``styleseg generate|train|eval|as2``.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from . import evaluation as ev
from .config import SEED_ENV, file_sha256, load_synth_config, load_train_config
from .data import ConfigError, CorpusError, IngestConfig, generate_synthetic_corpus, load_corpus
from .metrics import as2
from .training import TrainingError, latest_checkpoint, load_checkpoint, resume, train

logger = logging.getLogger("styleseg")

RUN_MANIFEST = "run_manifest.json"
EVAL_SPLIT = "test"


class UsageError(Exception):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunManifest:
    """JSON record of one command run, written before work starts and finalised after."""

    def __init__(self, command: str, out_dir: Path, config_path=None, seed=None, outputs=()):
        self.path = Path(out_dir) / RUN_MANIFEST
        self.data = {
            "command": command,
            "config_path": str(config_path) if config_path else None,
            "config_sha256": file_sha256(config_path) if config_path else None,
            "version": __version__,
            "seed": seed,
            "seed_source": "env" if _seed_from_env() else "config",
            "started": _now(),
            "finished": None,
            "status": "running",
            "outputs": [str(o) for o in outputs],
        }
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._write()

    def _write(self) -> None:
        self.path.write_text(json.dumps(self.data, indent=2) + "\n", encoding="utf-8")

    def finish(self, status: str = "ok", **extra) -> None:
        self.data.update(extra, finished=_now(), status=status)
        self._write()


def _seed_from_env() -> bool:
    return bool(os.environ.get(SEED_ENV))


def _non_empty(path: Path) -> bool:
    return path.exists() and any(path.iterdir())


def cmd_generate(args) -> int:
    cfg = load_synth_config(args.config)
    out = Path(args.out)
    if _non_empty(out) and not args.force:
        raise UsageError(f"{out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    run = RunManifest("generate", out, args.config, cfg.seed, [out / "manifest.csv"])
    manifest = generate_synthetic_corpus(cfg, out)
    run.finish(n_images=len(manifest.image_ids()), n_masks=len(manifest.rows))
    print(f"wrote {len(manifest.image_ids())} images, {len(manifest.rows)} masks to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_train_config(args.config)
    out = Path(args.out)
    cfg.checkpoint_dir = str(out)
    corpus, _ = load_corpus(args.corpus, IngestConfig(resolution=cfg.resolution))
    start = latest_checkpoint(out) if args.resume else None
    if args.resume and start is None:
        raise UsageError(f"--resume: no checkpoint in {out}")
    if not args.resume and _non_empty(out) and latest_checkpoint(out) is not None and not args.force:
        raise UsageError(f"{out} already holds checkpoints; pass --resume or --force")
    run = RunManifest("train", out, args.config, cfg.seed, [out / "runlog.csv", out / "best.txt"])
    try:
        best, log = resume(start, corpus, cfg) if start else train(corpus, cfg)
    except KeyboardInterrupt:
        run.finish(status="interrupted")
        print("interrupted; continue with --resume", file=sys.stderr)
        return 1
    best_stats = log.epochs[log.best_epoch - 1] if log.epochs else None
    run.finish(best=str(best), best_epoch=log.best_epoch, config=asdict(cfg))
    print("best_epoch,val_total")
    print(f"{log.best_epoch},{best_stats.val_total:.6f}")
    return 0


def _write_assignment(records, out: Path) -> Path:
    table = ev.group_style_assignment(records, "preference")
    return ev.write_text(out / "assignment.csv", ev.assignment_csv(table))


def cmd_eval(args) -> int:
    out = Path(args.out)
    if args.as2_only:
        if not args.records:
            raise UsageError("--as2-only needs --records")
        records = ev.read_records_csv(args.records)
        out.mkdir(parents=True, exist_ok=True)
        run = RunManifest("eval --as2-only", out, outputs=[out / "assignment.csv"])
        _write_assignment(records, out)
        run.finish()
        return 0
    if not args.checkpoint or not args.corpus:
        raise UsageError("eval needs --checkpoint and --corpus (or --as2-only --records)")
    if not 0.0 < args.threshold < 1.0:
        raise UsageError("--threshold must be in (0, 1)")
    models, meta = load_checkpoint(args.checkpoint)
    corpus, _ = load_corpus(args.corpus, IngestConfig(resolution=models.seg.config.resolution))
    samples = [s for s in corpus if s.split == EVAL_SPLIT]
    if not samples:
        raise CorpusError(f"corpus has no {EVAL_SPLIT!r} split")
    names = ["records.csv", "preferences.csv", "assignment.csv", "shapes.csv"]
    out.mkdir(parents=True, exist_ok=True)
    run = RunManifest("eval", out, outputs=[out / n for n in names], seed=meta.get("config", {}).get("seed"))
    run.data["checkpoint"] = str(args.checkpoint)
    run.data["threshold"] = args.threshold
    records = ev.evaluate_corpus(models.seg, samples, args.threshold)
    ev.write_text(out / "records.csv", ev.records_csv(records))
    ev.write_text(out / "preferences.csv", ev.preferences_csv(ev.preference_reports(records)))
    if models.seg.config.m > 1:
        _write_assignment(records, out)
    else:
        ev.write_text(out / "assignment.csv", "group,q_1,as2,modal_style\n")
    ev.write_text(out / "shapes.csv", ev.shapes_csv(ev.consistency_analysis(models.seg, samples, args.threshold)))
    run.finish()
    mean, std = ev.dice_iass(records)
    print(f"records={len(records)} dice_iass={mean:.4f}+-{std:.4f}")
    return 0


def parse_distribution(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"not a comma-separated list of numbers: {text!r}") from None
    if len(values) < 2:
        raise UsageError("need at least two values")
    if any(v < 0 for v in values):
        raise UsageError("values must be non-negative")
    total = sum(values)
    if abs(total - 1.0) > 1e-3:
        raise UsageError(f"values sum to {total:.6f}, not 1")
    return [v / total for v in values]


def cmd_as2(args) -> int:
    print(f"{as2(parse_distribution(args.q)):.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="styleseg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic multi-style corpus")
    g.add_argument("config")
    g.add_argument("--out", required=True, help="corpus directory")
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a model on a corpus")
    t.add_argument("config")
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", required=True, help="checkpoint directory")
    t.add_argument("--resume", action="store_true")
    t.add_argument("--force", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on the test split")
    e.add_argument("--checkpoint")
    e.add_argument("--corpus")
    e.add_argument("--out", required=True, help="directory for the CSV outputs")
    e.add_argument("--threshold", type=float, default=0.5)
    e.add_argument("--as2-only", action="store_true", help="recompute assignment.csv from --records")
    e.add_argument("--records", help="existing records.csv (with --as2-only)")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("as2", help="print AS2 of a comma-separated distribution")
    a.add_argument("q")
    a.set_defaults(func=cmd_as2)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CorpusError, TrainingError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
