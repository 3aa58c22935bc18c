"""The Model Zoo continual learner and its Isolated / Multi-Head / uniform variants."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .nncore import MultiHeadNetwork, NetworkSpec, init_network, mlp, predict_proba, small_cnn
from .optim import OptimConfig, TrainSet, train_model
from .tasks.augment import AugmentConfig
from .tasks.streams import TaskDataset, TaskStream, subsample_replay

log = logging.getLogger(__name__)

BOOSTED = "boosted"
UNIFORM = "uniform"


@dataclass(frozen=True)
class Seeds:
    data: int = 0
    init: int = 0
    sampling: int = 0


@dataclass(frozen=True)
class ZooConfig:
    """Learner settings.

    ``replay_fraction`` 0 gives Isolated, 1 full replay, anything between is
    limited replay. ``beta_max`` caps the tasks trained per episode at
    ``min(episode, beta_max)``; with ``beta_includes_current`` false the cap
    counts past tasks only. ``epochs_per_episode`` falls back to the optimizer
    config when unset.
    """

    beta_max: int = 5
    replay_fraction: float = 1.0
    epochs_per_episode: int | None = None
    sampling: str = BOOSTED
    without_replacement: bool = True
    beta_includes_current: bool = True
    loss_clip: float = 50.0
    seeds: Seeds = Seeds()

    def __post_init__(self):
        if not 0 <= self.replay_fraction <= 1:
            raise ValueError("replay_fraction must lie in [0, 1]")
        if self.beta_max < 1:
            raise ValueError("beta_max must be at least 1")
        if self.sampling not in (BOOSTED, UNIFORM):
            raise ValueError(f"sampling must be {BOOSTED!r} or {UNIFORM!r}")

    @property
    def isolated(self) -> bool:
        return self.replay_fraction == 0


@dataclass
class ZooMember:
    network: MultiHeadNetwork
    trained_tasks: tuple
    data_fraction: dict
    episode_index: int


@dataclass
class ZooState:
    n_tasks: int
    members: list = field(default_factory=list)
    seen_tasks: list = field(default_factory=list)
    boost_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.boost_weights is None:
            self.boost_weights = np.zeros(self.n_tasks)

    def members_for(self, task_id) -> list:
        return [m for m in self.members if task_id in m.trained_tasks]


@dataclass
class RunLog:
    """Episode-by-task validation accuracies plus per-episode bookkeeping.

    ``acc[e, i]`` is NaN until task ``i`` has been seen.
    """

    acc: np.ndarray
    task_names: list
    episode_seconds: list = field(default_factory=list)
    boost_history: list = field(default_factory=list)
    sampling_weights: list = field(default_factory=list)
    selections: list = field(default_factory=list)
    loss_traces: list = field(default_factory=list)
    lr_traces: list = field(default_factory=list)
    zoo: ZooState | None = None

    @property
    def n_episodes(self) -> int:
        return self.acc.shape[0]


# --------------------------------------------------------------------------
# seeding
# --------------------------------------------------------------------------


def init_seed(seeds: Seeds, episode: int) -> list:
    return [seeds.init, episode]


def selection_rng(seeds: Seeds, episode: int) -> np.random.Generator:
    return np.random.default_rng([seeds.sampling, episode, 0])


def training_rng(seeds: Seeds, episode: int) -> np.random.Generator:
    return np.random.default_rng([seeds.sampling, episode, 1])


def default_spec(task: TaskDataset, dropout: float = 0.2) -> NetworkSpec:
    shape = task.train_x.shape[1:]
    if len(shape) == 3:
        return small_cnn(shape, dropout=dropout)
    return mlp(int(np.prod(shape)), (64,))


# --------------------------------------------------------------------------
# boosting and selection
# --------------------------------------------------------------------------


def exp_normalize(losses, clip: float = 50.0) -> np.ndarray:
    """Weights proportional to exp(loss) with losses clipped to [0, clip]."""
    L = np.clip(np.asarray(losses, dtype=np.float64), 0.0, clip)
    w = np.exp(L - L.max())
    return w / w.sum()


def ensemble_predict(zoo: ZooState, task_id, x) -> np.ndarray:
    """Data-fraction-weighted mean of member probabilities for ``task_id``."""
    members = zoo.members_for(task_id)
    if not members:
        raise KeyError(f"no zoo member was trained on task {task_id!r}")
    # normalized up front so a lone member comes back bit-for-bit
    fractions = [float(m.data_fraction[task_id]) for m in members]
    wsum = sum(fractions)
    total = None
    for m, f in zip(members, fractions):
        p = predict_proba(m.network, task_id, x) * (f / wsum)
        total = p if total is None else total + p
    return total


def ensemble_losses(zoo: ZooState, tasks: Sequence[TaskDataset], seen: int) -> np.ndarray:
    """Mean negative log-likelihood of each seen task's stored examples."""
    out = np.zeros(seen)
    for i in range(seen):
        t = tasks[i]
        x, y = t.replay_x, t.replay_y
        if len(y) == 0:
            raise ValueError(f"task {i} has no stored examples to evaluate")
        p = ensemble_predict(zoo, i, x)[np.arange(len(y)), y]
        out[i] = -np.mean(np.log(np.maximum(p, np.finfo(float).tiny)))
    return out


def boosting_weights(zoo: ZooState, tasks: Sequence[TaskDataset], seen: int, clip: float = 50.0) -> np.ndarray:
    """Sampling weights over all tasks: exp(ensemble loss) on seen ones, 0 elsewhere."""
    if not zoo.members:
        raise ValueError("boosting weights need a non-empty ensemble")
    w = np.zeros(len(tasks))
    w[:seen] = exp_normalize(ensemble_losses(zoo, tasks, seen), clip)
    return w


def select_tasks(weights, current_task: int, beta: int, rng: np.random.Generator, without_replacement: bool = True) -> list:
    """Current task first, then up to ``beta - 1`` past tasks drawn by weight.

    Draws are sequential; without replacement the remaining weights are
    renormalized after every draw. Drawing stops early when no past task has
    positive weight left.
    """
    if beta < 1:
        raise ValueError("beta must be at least 1")
    w = np.array(weights, dtype=np.float64)
    w[current_task:] = 0.0
    n_past = current_task
    if beta - 1 > n_past:
        log.warning("beta=%d exceeds the %d seen tasks; clamping", beta, n_past + 1)
        beta = n_past + 1
    chosen = [current_task]
    if without_replacement:
        for _ in range(beta - 1):
            total = w.sum()
            if total <= 0:
                log.warning("no past task with positive weight left; selected %s", chosen)
                break
            i = int(rng.choice(len(w), p=w / total))
            chosen.append(i)
            w[i] = 0.0
    elif beta > 1 and w.sum() > 0:
        draws = rng.choice(len(w), size=beta - 1, p=w / w.sum())
        for i in draws:
            if int(i) not in chosen:
                chosen.append(int(i))
    return chosen


def episode_beta(cfg: ZooConfig, episode: int) -> int:
    """Number of tasks trained in 1-based ``episode`` (current task included)."""
    if cfg.isolated:
        return 1
    if cfg.beta_includes_current:
        return min(episode, cfg.beta_max)
    return min(episode - 1, cfg.beta_max) + 1


# --------------------------------------------------------------------------
# episodes
# --------------------------------------------------------------------------


def ensemble_accuracy(zoo: ZooState, task: TaskDataset) -> float:
    if len(task.val_y) == 0:
        return float("nan")
    pred = ensemble_predict(zoo, task.id, task.val_x).argmax(axis=1)
    return float(np.mean(pred == task.val_y))


def prepare_replay(tasks: Sequence[TaskDataset], cfg: ZooConfig) -> list:
    """Attach the replay subset the learner may keep for each task."""
    if 0 < cfg.replay_fraction < 1:
        return [subsample_replay(t, cfg.replay_fraction, [cfg.seeds.data, t.id]) for t in tasks]
    return list(tasks)


def train_episode(
    zoo: ZooState,
    tasks: Sequence[TaskDataset],
    k: int,
    cfg: ZooConfig,
    optim_cfg: OptimConfig,
    net_spec: NetworkSpec | None = None,
    augment_cfg: AugmentConfig | None = None,
):
    """Add the member for task ``k`` and evaluate the grown ensemble.

    Returns ``(zoo, row)`` where ``row`` holds the bookkeeping of this
    episode; ``row["acc"]`` has one entry per task (NaN for unseen tasks).
    """
    if not 0 <= k < len(tasks):
        raise IndexError(f"task {k} not in stream of {len(tasks)}")
    t0 = time.perf_counter()
    seen = k + 1
    beta = episode_beta(cfg, seen)
    if cfg.sampling == UNIFORM:
        sampling = np.zeros(len(tasks))
        sampling[:k] = 1.0 / k if k else 0.0
    else:
        sampling = zoo.boost_weights.copy()
    selection = select_tasks(sampling, k, beta, selection_rng(cfg.seeds, k), cfg.without_replacement)

    spec = net_spec or default_spec(tasks[k], optim_cfg.dropout_p)
    net = init_network(spec, {t: tasks[t].num_classes for t in selection}, init_seed(cfg.seeds, k))
    train_sets, fractions = [], {}
    for t in selection:
        task = tasks[t]
        if t == k:
            train_sets.append(TrainSet(t, task.train_x, task.train_y, task.fill_value))
            fractions[t] = 1.0
        else:
            train_sets.append(TrainSet(t, task.replay_x, task.replay_y, task.fill_value))
            fractions[t] = len(task.replay_y) / len(task.train_y)
    epochs = optim_cfg.epochs if cfg.epochs_per_episode is None else cfg.epochs_per_episode
    ocfg = replace(optim_cfg, epochs=epochs)
    lrs: list = []
    stratified = 0 < cfg.replay_fraction < 1 and len(selection) > 1
    net, losses = train_model(
        net, train_sets, ocfg, augment_cfg, training_rng(cfg.seeds, k), stratified,
        on_epoch=lambda e, loss, lr: lrs.append(lr),
    )

    zoo.members.append(ZooMember(net, tuple(selection), fractions, k))
    if k not in zoo.seen_tasks:
        zoo.seen_tasks.append(k)
    acc = np.full(len(tasks), np.nan)
    for i in range(seen):
        acc[i] = ensemble_accuracy(zoo, tasks[i])

    if cfg.isolated:
        nxt = np.zeros(len(tasks))
        nxt[k] = 1.0
    elif cfg.sampling == UNIFORM:
        nxt = np.zeros(len(tasks))
        nxt[:seen] = 1.0 / seen
    else:
        nxt = boosting_weights(zoo, tasks, seen, cfg.loss_clip)
    zoo.boost_weights = nxt
    row = dict(
        acc=acc, selection=selection, sampling_weights=sampling, boost_weights=nxt.copy(),
        losses=losses, lrs=lrs, seconds=time.perf_counter() - t0,
    )
    return zoo, row


def run_continual(
    tasks: TaskStream | Sequence[TaskDataset],
    cfg: ZooConfig,
    optim_cfg: OptimConfig,
    net_spec: NetworkSpec | None = None,
    augment_cfg: AugmentConfig | None = None,
    progress: Callable[[int, dict], None] | None = None,
) -> RunLog:
    """Present the tasks one episode at a time and log ensemble accuracy after each."""
    tasks = prepare_replay(list(tasks), cfg)
    if not tasks:
        raise ValueError("empty task stream")
    n = len(tasks)
    zoo = ZooState(n)
    runlog = RunLog(np.full((n, n), np.nan), [t.name for t in tasks], zoo=zoo)
    for k in range(n):
        zoo, row = train_episode(zoo, tasks, k, cfg, optim_cfg, net_spec, augment_cfg)
        runlog.acc[k] = row["acc"]
        runlog.episode_seconds.append(row["seconds"])
        runlog.selections.append(row["selection"])
        runlog.sampling_weights.append(row["sampling_weights"])
        runlog.boost_history.append(row["boost_weights"])
        runlog.loss_traces.append(row["losses"])
        runlog.lr_traces.append(row["lrs"])
        log.info("episode %d: trained %s, acc %s", k, row["selection"], np.round(row["acc"][: k + 1], 4))
        if progress is not None:
            progress(k, row)
    return runlog


def run_multihead_baseline(
    tasks: Sequence[TaskDataset],
    optim_cfg: OptimConfig,
    net_spec: NetworkSpec | None = None,
    augment_cfg: AugmentConfig | None = None,
    seeds: Seeds = Seeds(),
    return_network: bool = False,
):
    """Jointly train one network with a head per task on the pooled data.

    Uses the episode-0 seeds, so a single task reproduces its first Isolated
    episode exactly. Returns ``{task_id: validation accuracy}``.
    """
    tasks = list(tasks)
    if not tasks:
        raise ValueError("no tasks given")
    spec = net_spec or default_spec(tasks[0], optim_cfg.dropout_p)
    net = init_network(spec, {t.id: t.num_classes for t in tasks}, init_seed(seeds, 0))
    sets = [TrainSet(t.id, t.train_x, t.train_y, t.fill_value) for t in tasks]
    net, losses = train_model(net, sets, optim_cfg, augment_cfg, training_rng(seeds, 0))
    accs = {}
    for t in tasks:
        pred = predict_proba(net, t.id, t.val_x).argmax(axis=1)
        accs[t.id] = float(np.mean(pred == t.val_y))
    if return_network:
        return accs, net, losses
    return accs


def multihead_runlog(tasks: Sequence[TaskDataset], accs: dict) -> RunLog:
    """Single-row log so Multi-Head results flow through the same metrics."""
    tasks = list(tasks)
    acc = np.array([[accs[t.id] for t in tasks]])
    return RunLog(acc, [t.name for t in tasks], selections=[[t.id for t in tasks]])

