"""Continual-learning metrics and task-competition experiments."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .nncore import NetworkSpec
from .optim import OptimConfig
from .tasks.augment import AugmentConfig
from .tasks.streams import TaskDataset
from .zoo import RunLog, Seeds, ensemble_predict, run_multihead_baseline

PAIRWISE = "pairwise"
INCREMENTAL = "incremental"


def debut(log: RunLog, task: int) -> int:
    seen = np.flatnonzero(~np.isnan(log.acc[:, task]))
    if len(seen) == 0:
        raise ValueError(f"task {task} never evaluated")
    return int(seen[0])


def average_accuracy(log: RunLog) -> float:
    return float(np.mean(log.acc[-1]))


def forgetting(log: RunLog) -> float:
    """Mean gap between each task's best accuracy during the run and its final accuracy."""
    gaps = []
    for i in range(log.acc.shape[1]):
        trace = log.acc[debut(log, i) :, i]
        gaps.append(trace.max() - trace[-1])
    return float(np.mean(gaps))


def forward_transfer(log: RunLog) -> float:
    """Mean accuracy of each task right after the episode that introduced it."""
    return float(np.mean([log.acc[debut(log, i), i] for i in range(log.acc.shape[1])]))


@dataclass
class MetricsReport:
    average_accuracy: float
    forgetting: float
    forward_transfer: float
    per_task_final: list
    per_task_trace: list
    inference_ms_per_sample: float | None = None
    training_minutes: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(log: RunLog, inference_ms_per_sample: float | None = None) -> MetricsReport:
    trace = [[None if np.isnan(v) else float(v) for v in row] for row in log.acc]
    return MetricsReport(
        average_accuracy=average_accuracy(log),
        forgetting=forgetting(log),
        forward_transfer=forward_transfer(log),
        per_task_final=[float(v) for v in log.acc[-1]],
        per_task_trace=trace,
        inference_ms_per_sample=inference_ms_per_sample,
        training_minutes=sum(log.episode_seconds) / 60.0 if log.episode_seconds else None,
    )


def timing_report(log: RunLog, tasks: Sequence[TaskDataset], n_batches: int = 50, batch_size: int = 16):
    """(training minutes, ensemble inference milliseconds per sample).

    Inference pushes ``n_batches`` batches of ``batch_size`` validation
    samples through the ensemble, cycling over tasks, and divides the total
    wall time by the number of samples.
    """
    zoo = log.zoo
    if zoo is None or not zoo.members:
        raise ValueError("timing needs a trained ensemble with at least one member")
    batches = []
    for b in range(n_batches):
        t = tasks[b % len(tasks)]
        start = (b // len(tasks)) * batch_size
        rows = (np.arange(batch_size) + start) % len(t.val_y)
        batches.append((t.id, t.val_x[rows]))
    t0 = time.perf_counter()
    for tid, x in batches:
        ensemble_predict(zoo, tid, x)
    elapsed = time.perf_counter() - t0
    return sum(log.episode_seconds) / 60.0, 1000.0 * elapsed / (n_batches * batch_size)


@dataclass
class CompetitionMatrix:
    """Pairwise: ``values[i, j]`` is the change in task ``i``'s accuracy (points)
    from training jointly with task ``j``; the diagonal is 0.

    Incremental: ``values[k, i]`` is task ``i``'s accuracy under one Multi-Head
    model trained from scratch on tasks ``0..k``; NaN above the diagonal.
    """

    mode: str
    values: np.ndarray
    task_names: list
    config: dict = field(default_factory=dict)
    runs: list = field(default_factory=list)


def _run_cells(cells, tasks, optim_cfg, net_spec, augment_cfg, seeds, threads):
    def one(ids):
        return run_multihead_baseline([tasks[i] for i in ids], optim_cfg, net_spec, augment_cfg, seeds)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, cells))
    return [one(c) for c in cells]


def _config_echo(optim_cfg, seed, augment_cfg):
    return {
        "optim": asdict(optim_cfg),
        "seed": seed,
        "augment": asdict(augment_cfg) if augment_cfg is not None else None,
    }


def pairwise_competition(
    tasks: Sequence[TaskDataset],
    optim_cfg: OptimConfig,
    seed: int,
    net_spec: NetworkSpec | None = None,
    augment_cfg: AugmentConfig | None = None,
    threads: int = 1,
) -> CompetitionMatrix:
    """n isolated runs plus one joint two-task run per ordered pair (n^2 runs)."""
    tasks = list(tasks)
    n = len(tasks)
    if n < 2:
        raise ValueError("pairwise competition needs at least two tasks")
    seeds = Seeds(seed, seed, seed)
    cells = [(i,) for i in range(n)] + [(i, j) for i in range(n) for j in range(n) if i != j]
    results = _run_cells(cells, tasks, optim_cfg, net_spec, augment_cfg, seeds, threads)
    iso = {c[0]: r[tasks[c[0]].id] for c, r in zip(cells[:n], results[:n])}
    values = np.zeros((n, n))
    for c, r in zip(cells[n:], results[n:]):
        i, j = c
        values[i, j] = 100.0 * (r[tasks[i].id] - iso[i])
    runs = [{"tasks": list(c), "accuracy": {str(k): v for k, v in r.items()}} for c, r in zip(cells, results)]
    return CompetitionMatrix(PAIRWISE, values, [t.name for t in tasks], _config_echo(optim_cfg, seed, augment_cfg), runs)


def incremental_competition(
    tasks: Sequence[TaskDataset],
    optim_cfg: OptimConfig,
    seed: int,
    net_spec: NetworkSpec | None = None,
    augment_cfg: AugmentConfig | None = None,
    threads: int = 1,
) -> CompetitionMatrix:
    """One fresh Multi-Head model per prefix of the stream."""
    tasks = list(tasks)
    n = len(tasks)
    if n < 2:
        raise ValueError("incremental competition needs at least two tasks")
    seeds = Seeds(seed, seed, seed)
    cells = [tuple(range(k + 1)) for k in range(n)]
    results = _run_cells(cells, tasks, optim_cfg, net_spec, augment_cfg, seeds, threads)
    values = np.full((n, n), np.nan)
    for k, r in enumerate(results):
        for i in range(k + 1):
            values[k, i] = r[tasks[i].id]
    runs = [{"tasks": list(c), "accuracy": {str(k): v for k, v in r.items()}} for c, r in zip(cells, results)]
    return CompetitionMatrix(INCREMENTAL, values, [t.name for t in tasks], _config_echo(optim_cfg, seed, augment_cfg), runs)
