import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from styleseg import evaluation as ev  # noqa: E402
from styleseg.config import load_synth_config, load_train_config  # noqa: E402
from styleseg.data import IngestConfig, StyleParams, SynthConfig, generate_synthetic_corpus, load_corpus  # noqa: E402
from styleseg.training import TrainConfig, load_checkpoint, train  # noqa: E402

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def tiny_synth(n_images=16, seed=0):
    return SynthConfig(
        n_images=n_images,
        resolution=32,
        seed=seed,
        styles=[StyleParams(margin=2, name="loose"), StyleParams(margin=-2, name="tight")],
    )


def tiny_train(tmp, **kw):
    values = dict(
        epochs=3, batch_size=4, resolution=32, base_width=4, n_stages=3, cls_width=4, cls_depth=3,
        checkpoint_dir=str(tmp),
    )
    values.update(kw)
    return TrainConfig(**values)


@pytest.fixture(scope="session")
def tiny_corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_corpus")
    generate_synthetic_corpus(tiny_synth(), root)
    return root


@pytest.fixture(scope="session")
def tiny_corpus(tiny_corpus_dir):
    samples, _ = load_corpus(tiny_corpus_dir, IngestConfig(resolution=32))
    return samples


class DeskRuns:
    """The shipped two-style synthetic corpus and lazily trained desk-scale runs."""

    def __init__(self, root: Path):
        self.root = root
        self.synth = load_synth_config(CONFIGS / "synth_desk.ini")
        generate_synthetic_corpus(self.synth, root / "corpus")
        self.corpus, _ = load_corpus(root / "corpus", IngestConfig(resolution=self.synth.resolution))
        self.test = [s for s in self.corpus if s.split == "test"]
        self._runs = {}

    def run(self, mode: str) -> dict:
        if mode not in self._runs:
            name = "desk" if mode == "styleseg" else mode
            cfg = load_train_config(CONFIGS / f"train_{name}.ini")
            cfg.checkpoint_dir = str(self.root / mode)
            t0 = time.perf_counter()
            best, log = train(self.corpus, cfg)
            models, _ = load_checkpoint(best)
            records = ev.evaluate_corpus(models.seg, self.test)
            self._runs[mode] = dict(models=models, log=log, records=records, seconds=time.perf_counter() - t0)
        return self._runs[mode]


@pytest.fixture(scope="session")
def desk(tmp_path_factory):
    return DeskRuns(tmp_path_factory.mktemp("desk"))


# --- acceptance reporting ------------------------------------------------------
# Tests marked ``criterion(n, title)`` feed a one-line-per-criterion summary.

_criteria: dict[int, dict] = {}


def _entry(item_or_marker):
    n, title = item_or_marker.args
    return _criteria.setdefault(n, {"title": title, "status": "not run", "lines": []})


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            _entry(marker)
            item.user_properties.append(("criterion", marker.args[0]))


@pytest.fixture
def report(request):
    """List that the test appends measured values to; shown in the summary."""
    marker = request.node.get_closest_marker("criterion")
    return _entry(marker)["lines"] if marker is not None else []


def pytest_runtest_logreport(report):
    if report.when != "call" and report.passed:
        return
    for key, n in report.user_properties:
        if key != "criterion":
            continue
        entry = _criteria[n]
        if report.failed:
            entry["status"] = "FAIL"
        elif report.skipped and entry["status"] == "not run":
            entry["status"] = "SKIP"
        elif report.passed and entry["status"] in ("not run", "SKIP"):
            entry["status"] = "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_criteria):
        entry = _criteria[n]
        tr.write_line(f"criterion {n}: {entry['status']:4s}  {entry['title']}")
        for line in entry["lines"]:
            tr.write_line(f"    {line}")
