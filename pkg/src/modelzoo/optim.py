"""SGD with Nesterov momentum, cosine learning-rate annealing and the training loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .nncore import TRAIN, MultiHeadNetwork, backward_mixed, forward_mixed, softmax_cross_entropy
from .tasks.augment import AugmentConfig, augment


@dataclass(frozen=True)
class OptimConfig:
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-5
    batch_size: int = 16
    epochs: int = 200
    dropout_p: float = 0.2

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ValueError("lr0 must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class OptimizerState:
    velocity: dict = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: dict) -> "OptimizerState":
        return cls({k: np.zeros_like(v) for k, v in params.items()})


def cosine_lr(epoch: int, total_epochs: int, lr0: float) -> float:
    if total_epochs < 1 or not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")
    if epoch == total_epochs:
        return 0.0
    return lr0 * (1.0 + math.cos(math.pi * epoch / total_epochs)) / 2.0


def sgd_step(params: dict, grads: dict, state: OptimizerState, lr: float, cfg: OptimConfig, no_decay=()):
    """One Nesterov step, in place. Parameters without a gradient are left alone.

    v <- momentum * v - lr * g';  p <- p + momentum * v - lr * g'
    where g' = grad + weight_decay * p for decayed parameters.
    """
    for key, g in grads.items():
        p = params[key]
        if cfg.weight_decay and key not in no_decay:
            g = g + cfg.weight_decay * p
        v = state.velocity.get(key)
        if v is None:
            v = state.velocity[key] = np.zeros_like(p)
        v *= cfg.momentum
        v -= lr * g
        p += cfg.momentum * v - lr * g
    return params, state


@dataclass
class TrainSet:
    """Examples of one task handed to :func:`train_model`."""

    task_id: int
    x: np.ndarray
    y: np.ndarray
    fill_value: float = 0.0

    def __len__(self) -> int:
        return len(self.y)


def _uniform_batches(sizes: Sequence[int], batch_size: int, rng: np.random.Generator):
    """Shuffle the pooled (task, row) pairs and cut them into batches."""
    owners = np.concatenate([np.full(n, t) for t, n in enumerate(sizes)])
    rows = np.concatenate([np.arange(n) for n in sizes])
    order = rng.permutation(len(owners))
    owners, rows = owners[order], rows[order]
    for s in range(0, len(owners), batch_size):
        yield owners[s : s + batch_size], rows[s : s + batch_size]


def _stratified_batches(sizes: Sequence[int], batch_size: int, rng: np.random.Generator, cursors: list):
    """Equal share of every task per batch; smaller tasks are cycled with reshuffling.

    One epoch is one pass over the largest task.
    """
    k = len(sizes)
    per_task = max(1, batch_size // k)
    n_batches = math.ceil(max(sizes) / per_task)
    for _ in range(n_batches):
        owners, rows = [], []
        for t, n in enumerate(sizes):
            take = []
            while len(take) < per_task:
                perm, pos = cursors[t]
                if pos >= len(perm):
                    perm, pos = rng.permutation(n), 0
                grab = perm[pos : pos + per_task - len(take)]
                take.extend(grab.tolist())
                cursors[t] = (perm, pos + len(grab))
            owners += [t] * per_task
            rows += take
        yield np.asarray(owners), np.asarray(rows)


def train_model(
    net: MultiHeadNetwork,
    tasks: Sequence[TrainSet],
    cfg: OptimConfig,
    augment_cfg: AugmentConfig | None,
    rng: np.random.Generator,
    stratified: bool = False,
    on_epoch: Callable[[int, float, float], None] | None = None,
):
    """Train ``net`` in place on mixed-task mini-batches.

    Returns ``(net, losses)`` with one mean training loss per epoch. The
    batch loss is the mean per-example cross-entropy over every example in
    the batch, whichever head it goes through.
    """
    for ts in tasks:
        if ts.task_id not in net.head_classes:
            raise KeyError(f"network has no head for task {ts.task_id}")
    sizes = [len(ts) for ts in tasks]
    if not tasks or sum(sizes) == 0:
        raise ValueError("cannot train on an empty pooled dataset")
    if stratified and min(sizes) == 0:
        raise ValueError("stratified batches need every task to have examples")
    state = OptimizerState.zeros_like(net.params)
    losses = []
    cursors = [(np.arange(0), 0) for _ in tasks]
    net.mode = TRAIN
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs, cfg.lr0)
        if stratified:
            batches = _stratified_batches(sizes, cfg.batch_size, rng, cursors)
        else:
            batches = _uniform_batches(sizes, cfg.batch_size, rng)
        total, seen = 0.0, 0
        for owners, rows in batches:
            xs, ys, tids = [], [], []
            for t in np.unique(owners):
                sel = rows[owners == t]
                x = tasks[t].x[sel]
                if augment_cfg is not None and augment_cfg.enabled and x.ndim == 4:
                    x = augment(x, augment_cfg, rng, fill=tasks[t].fill_value)
                xs.append(x)
                ys.append(tasks[t].y[sel])
                tids.append(np.full(len(sel), tasks[t].task_id))
            x = np.concatenate(xs)
            y = np.concatenate(ys)
            tid = np.concatenate(tids)
            logits, cache = forward_mixed(net, x, tid, TRAIN, rng)
            n = len(y)
            loss, dlogits = 0.0, {}
            for t, idx in cache.groups.items():
                l, d = softmax_cross_entropy(logits[t], y[idx], scale=n)
                loss += l
                dlogits[t] = d
            grads = backward_mixed(net, cache, dlogits)
            sgd_step(net.params, grads, state, lr, cfg, net.no_decay)
            net.touch()
            total += loss * n
            seen += n
        losses.append(total / seen)
        if on_epoch is not None:
            on_epoch(epoch, losses[-1], lr)
    net.mode = "eval"
    return net, losses
