import gzip
from pathlib import Path

import numpy as np
import pytest

from modelzoo.tasks import read_idx, split_tasks, write_idx

MNIST_CSV = Path("/usr/local/lib/python3.10/dist-packages/mlxtend/data/data/mnist_5k.csv.gz")


def _mnist_source() -> Path:
    try:
        import mlxtend

        p = Path(mlxtend.__file__).parent / "data" / "data" / "mnist_5k.csv.gz"
        if p.exists():
            return p
    except ImportError:
        pass
    return MNIST_CSV


@pytest.fixture(scope="session")
def mnist_idx(tmp_path_factory):
    """The 5000-image MNIST subset bundled with mlxtend, rewritten as IDX files."""
    src = _mnist_source()
    if not src.exists():
        pytest.skip("MNIST subset (mlxtend) not available")
    with gzip.open(src, "rt") as f:
        raw = np.loadtxt(f, delimiter=",", dtype=np.int64)
    root = tmp_path_factory.mktemp("mnist")
    images, labels = root / "images-idx3-ubyte", root / "labels-idx1-ubyte"
    write_idx(images, raw[:, :-1].reshape(-1, 28, 28).astype(np.uint8))
    write_idx(labels, raw[:, -1].astype(np.uint8))
    return images, labels


@pytest.fixture(scope="session")
def mnist_arrays(mnist_idx):
    images, labels = mnist_idx
    return read_idx(images), read_idx(labels).astype(np.int64)


@pytest.fixture(scope="session")
def split_mnist(mnist_arrays):
    """5-task Split-MNIST, 100 training samples per class, 20% stratified validation."""
    x, y = mnist_arrays
    return split_tasks(x, y, 2, val_fraction=0.2, seed=0, samples_per_class=100)


# -- desk-scale runs shared by several acceptance criteria ---------------------

DESK_SEEDS = (0, 1, 2)


class DeskRuns:
    """Split-MNIST continual runs, computed once per (learner, seed, epochs)."""

    def __init__(self, arrays):
        self.x, self.y = arrays
        self._streams = {}
        self._logs = {}
        self.seconds = {}

    def stream(self, seed):
        if seed not in self._streams:
            self._streams[seed] = split_tasks(self.x, self.y, 2, val_fraction=0.2, seed=seed, samples_per_class=100)
        return self._streams[seed]

    def log(self, learner, seed, epochs=20):
        import time

        from modelzoo.nncore import small_cnn
        from modelzoo.optim import OptimConfig
        from modelzoo.tasks import AugmentConfig
        from modelzoo.zoo import UNIFORM, Seeds, ZooConfig, run_continual

        key = (learner, seed, epochs)
        if key not in self._logs:
            seeds = Seeds(seed, seed, seed)
            cfg = {
                "isolated": ZooConfig(replay_fraction=0.0, seeds=seeds, epochs_per_episode=epochs),
                "zoo": ZooConfig(beta_max=2, seeds=seeds, epochs_per_episode=epochs),
                "zoo-uniform": ZooConfig(beta_max=2, sampling=UNIFORM, seeds=seeds, epochs_per_episode=epochs),
            }[learner]
            # augmentation is off by default when each task gets one epoch
            aug = AugmentConfig(enabled=epochs > 1)
            t0 = time.perf_counter()
            self._logs[key] = run_continual(self.stream(seed), cfg, OptimConfig(), small_cnn(), aug)
            self.seconds[key] = time.perf_counter() - t0
        return self._logs[key]


@pytest.fixture(scope="session")
def desk(mnist_arrays):
    return DeskRuns(mnist_arrays)


# -- one PASS/FAIL line per acceptance criterion -------------------------------

_criteria = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria, key=lambda n: int(n.split("_")[2])):
        status = {"passed": "PASS", "failed": "FAIL"}.get(_criteria[name], _criteria[name].upper())
        terminalreporter.write_line(f"{status}  {name}")
