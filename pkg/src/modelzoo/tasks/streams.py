"""Task-stream construction: split, rotated, permuted and synthetic Gaussian tasks."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

TARGET_MEAN = 0.5
TARGET_STD = 0.25


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True, eq=False)
class TaskDataset:
    """One task: normalized inputs, task-local labels and the retained replay subset.

    ``replay_idx`` indexes rows of the train split that the learner keeps for
    later episodes; ``fill_value`` is the normalized value of a blank pixel.
    """

    id: int
    name: str
    num_classes: int
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    replay_idx: np.ndarray | None = None
    replay_fraction: float = 1.0
    fill_value: float = 0.0
    classes: tuple = ()

    @property
    def replay_x(self) -> np.ndarray:
        return self.train_x if self.replay_idx is None else self.train_x[self.replay_idx]

    @property
    def replay_y(self) -> np.ndarray:
        return self.train_y if self.replay_idx is None else self.train_y[self.replay_idx]

    def sizes(self) -> dict:
        return {
            "train": int(len(self.train_y)),
            "val": int(len(self.val_y)),
            "replay": int(len(self.replay_y)),
            "num_classes": self.num_classes,
        }


@dataclass(frozen=True, eq=False)
class TaskStream:
    tasks: tuple
    generator: str
    params: dict = field(default_factory=dict)
    sources: dict = field(default_factory=dict)  # path -> sha256

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        for i, t in enumerate(self.tasks):
            if t.id != i:
                raise ValueError(f"task at position {i} has id {t.id}; ids must be 0..n-1 in order")

    def __len__(self) -> int:
        return len(self.tasks)

    def __getitem__(self, i) -> TaskDataset:
        return self.tasks[i]

    def __iter__(self):
        return iter(self.tasks)

    def manifest(self) -> dict:
        return {
            "generator": self.generator,
            "params": self.params,
            "sources": self.sources,
            "tasks": [{"id": t.id, "name": t.name, **t.sizes()} for t in self.tasks],
        }


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _as_images(images: np.ndarray) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[:, None]
    return x


def stratified_split(labels: np.ndarray, val_fraction: float, rng: np.random.Generator):
    """Per-class seeded split; returns (train_idx, val_idx), both sorted."""
    if not 0 <= val_fraction < 1:
        raise ValueError("val_fraction must lie in [0, 1)")
    train, val = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_val = _round_half_up(val_fraction * len(idx))
        val.append(idx[:n_val])
        train.append(idx[n_val:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def _cap_per_class(idx: np.ndarray, labels: np.ndarray, per_class: int | None, rng) -> np.ndarray:
    if per_class is None:
        return idx
    keep = []
    for c in np.unique(labels[idx]):
        cls = idx[labels[idx] == c]
        keep.append(np.sort(cls[rng.permutation(len(cls))][:per_class]))
    return np.sort(np.concatenate(keep))


def _normalizer(train_x: np.ndarray):
    m = float(train_x.mean())
    s = float(train_x.std())
    if s == 0:
        s = 1.0
    return lambda a: (a - m) / s * TARGET_STD + TARGET_MEAN


def _make_task(tid, name, num_classes, tx, ty, vx, vy, classes=()) -> TaskDataset:
    norm = _normalizer(tx)
    return TaskDataset(
        id=tid,
        name=name,
        num_classes=int(num_classes),
        train_x=norm(tx),
        train_y=np.asarray(ty, dtype=np.int64),
        val_x=norm(vx),
        val_y=np.asarray(vy, dtype=np.int64),
        fill_value=float(norm(np.float64(0.0))),
        classes=tuple(int(c) for c in classes),
    )


def _train_val(images, labels, val_fraction, seed, samples_per_class, test):
    """Shared train/val index selection; ``test`` is an optional canonical (x, y) split."""
    rng = np.random.default_rng(seed)
    if test is None:
        tr, va = stratified_split(labels, val_fraction, rng)
        val_x, val_y = images[va], labels[va]
    else:
        tr = np.arange(len(labels))
        val_x = np.asarray(test[0], dtype=np.float64)
        if images.ndim == 4 and val_x.ndim == 3:
            val_x = val_x[:, None]
        val_y = np.asarray(test[1]).astype(np.int64)
    tr = _cap_per_class(tr, labels, samples_per_class, rng)
    return images[tr], labels[tr], val_x, val_y


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------


def split_tasks(
    images,
    labels,
    labels_per_task: int,
    val_fraction: float = 0.2,
    seed: int = 0,
    samples_per_class: int | None = None,
    test=None,
) -> TaskStream:
    """Consecutive groups of ``labels_per_task`` classes form one task each."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[:, None]
    labels = np.asarray(labels).astype(np.int64)
    classes = np.unique(labels)
    if labels_per_task < 1 or len(classes) % labels_per_task:
        raise ValueError(f"{len(classes)} labels cannot be split into groups of {labels_per_task}")
    tx, ty, vx, vy = _train_val(images, labels, val_fraction, seed, samples_per_class, test)
    tasks = []
    for i in range(len(classes) // labels_per_task):
        group = classes[i * labels_per_task : (i + 1) * labels_per_task]
        remap = {int(c): j for j, c in enumerate(group)}
        tm = np.isin(ty, group)
        vm = np.isin(vy, group)
        tasks.append(
            _make_task(
                i,
                "split-" + "-".join(str(int(c)) for c in group),
                labels_per_task,
                tx[tm],
                [remap[int(c)] for c in ty[tm]],
                vx[vm],
                [remap[int(c)] for c in vy[vm]],
                group,
            )
        )
    params = dict(labels_per_task=labels_per_task, val_fraction=val_fraction, seed=seed, samples_per_class=samples_per_class)
    return TaskStream(tuple(tasks), "split", params)


def rotate_image_batch(images: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate ``(N, C, H, W)`` images counter-clockwise about their centre.

    Bilinear interpolation; samples falling outside the frame read as 0.
    """
    images = np.asarray(images, dtype=np.float64)
    if angle_deg == 0:
        return images.copy()
    h, w = images.shape[-2:]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    th = math.radians(angle_deg)
    cos, sin = math.cos(th), math.sin(th)
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    x = cc - cx
    y = cy - rr
    # inverse map: output point -> source point
    xs = cos * x + sin * y
    ys = -sin * x + cos * y
    src_r = cy - ys
    src_c = cx + xs
    r0 = np.floor(src_r).astype(int)
    c0 = np.floor(src_c).astype(int)
    fr = src_r - r0
    fc = src_c - c0
    out = np.zeros_like(images)
    for dr, dc, wgt in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc), (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        r = r0 + dr
        c = c0 + dc
        ok = (r >= 0) & (r < h) & (c >= 0) & (c < w) & (wgt > 0)
        out[..., ok] += images[..., r[ok], c[ok]] * wgt[ok]
    return out


def rotate_tasks(images, labels, angles_deg: Sequence[float], val_fraction: float = 0.2, seed: int = 0, samples_per_class=None, test=None) -> TaskStream:
    """One task per angle, each the whole corpus rotated by that angle."""
    images = _as_images(images)
    labels = np.asarray(labels).astype(np.int64)
    classes = np.unique(labels)
    remap = np.searchsorted(classes, labels)
    tx, ty, vx, vy = _train_val(images, remap, val_fraction, seed, samples_per_class, test)
    if test is not None:
        vy = np.searchsorted(classes, vy)
    tasks = []
    for i, a in enumerate(angles_deg):
        tasks.append(
            _make_task(i, f"rotate-{a:g}", len(classes), rotate_image_batch(tx, a), ty, rotate_image_batch(vx, a), vy, classes)
        )
    params = dict(angles_deg=list(angles_deg), val_fraction=val_fraction, seed=seed, samples_per_class=samples_per_class)
    return TaskStream(tuple(tasks), "rotated", params)


def make_permutations(n_pixels: int, n_tasks: int, seed: int) -> list[np.ndarray]:
    """Identity for task 0, then distinct seeded pixel permutations."""
    rng = np.random.default_rng(seed)
    perms = [np.arange(n_pixels)]
    seen = {perms[0].tobytes()}
    while len(perms) < n_tasks:
        p = rng.permutation(n_pixels)
        if p.tobytes() not in seen:
            seen.add(p.tobytes())
            perms.append(p)
    return perms


def permute_tasks(images, labels, n_tasks: int, seed: int = 0, val_fraction: float = 0.2, samples_per_class=None, test=None) -> TaskStream:
    if n_tasks < 1:
        raise ValueError("n_tasks must be at least 1")
    images = _as_images(images)
    labels = np.asarray(labels).astype(np.int64)
    classes = np.unique(labels)
    remap = np.searchsorted(classes, labels)
    tx, ty, vx, vy = _train_val(images, remap, val_fraction, seed, samples_per_class, test)
    if test is not None:
        vy = np.searchsorted(classes, vy)
    shape = tx.shape[1:]
    perms = make_permutations(int(np.prod(shape)), n_tasks, seed)
    tasks = []
    for i, p in enumerate(perms):
        px = tx.reshape(len(tx), -1)[:, p].reshape((len(tx),) + shape)
        pv = vx.reshape(len(vx), -1)[:, p].reshape((len(vx),) + shape)
        tasks.append(_make_task(i, f"permute-{i}", len(classes), px, ty, pv, vy, classes))
    params = dict(n_tasks=n_tasks, seed=seed, val_fraction=val_fraction, samples_per_class=samples_per_class)
    return TaskStream(tuple(tasks), "permuted", params)


def class_means(classes: int, dim: int, angle_deg: float = 0.0) -> np.ndarray:
    """Class means on a circle in the (e0, e1) plane, adjacent means one unit apart."""
    if dim < 2:
        raise ValueError("dim must be at least 2")
    radius = 0.5 / math.sin(math.pi / classes) if classes > 1 else 0.0
    base = np.array([2 * math.pi * c / classes for c in range(classes)])
    th = math.radians(angle_deg)
    means = np.zeros((classes, dim))
    means[:, 0] = radius * np.cos(base + th)
    means[:, 1] = radius * np.sin(base + th)
    return means


def synthetic_gaussian_tasks(
    n_tasks: int,
    dim: int,
    classes: int,
    angles_deg: Sequence[float],
    samples_per_class: int,
    seed: int = 0,
    noise_std: float = 0.5,
    val_fraction: float = 0.2,
    normalize: bool = True,
) -> TaskStream:
    """Isotropic Gaussian blobs whose class means are rotated per task.

    Task ``j`` rotates the base class means by ``angles_deg[j]`` in a fixed
    2-d subspace. Each task draws its own samples from a child of ``seed``.
    """
    if dim < 2:
        raise ValueError("dim must be at least 2")
    if len(angles_deg) != n_tasks:
        raise ValueError("need one angle per task")
    children = np.random.SeedSequence(seed).spawn(n_tasks)
    tasks = []
    for j, (a, ss) in enumerate(zip(angles_deg, children)):
        rng = np.random.default_rng(ss)
        means = class_means(classes, dim, a)
        y = np.repeat(np.arange(classes), samples_per_class)
        x = means[y] + noise_std * rng.standard_normal((len(y), dim))
        tr, va = stratified_split(y, val_fraction, rng)
        if normalize:
            t = _make_task(j, f"gauss-{a:g}", classes, x[tr], y[tr], x[va], y[va], tuple(range(classes)))
        else:
            t = TaskDataset(j, f"gauss-{a:g}", classes, x[tr], y[tr], x[va], y[va], classes=tuple(range(classes)))
        tasks.append(t)
    params = dict(
        n_tasks=n_tasks, dim=dim, classes=classes, angles_deg=list(angles_deg),
        samples_per_class=samples_per_class, seed=seed, noise_std=noise_std, val_fraction=val_fraction,
    )
    return TaskStream(tuple(tasks), "synthetic", params)


def file_tasks(paths: Sequence, val_fraction: float = 0.2, seed: int = 0, delimiter: str = ",") -> TaskStream:
    """One task per delimited file (last column = label)."""
    from .idx import load_delimited

    tasks = []
    for i, p in enumerate(paths):
        x, y = load_delimited(p, delimiter)
        classes = np.unique(y)
        y = np.searchsorted(classes, y)
        tr, va = stratified_split(y, val_fraction, np.random.default_rng([seed, i]))
        tasks.append(_make_task(i, Path(p).stem, len(classes), x[tr], y[tr], x[va], y[va], classes))
    sources = {str(p): file_sha256(p) for p in paths}
    return TaskStream(tuple(tasks), "files", dict(val_fraction=val_fraction, seed=seed), sources)


def subsample_replay(task: TaskDataset, fraction: float, seed: int) -> TaskDataset:
    """Keep a seeded uniform subset of ``round(fraction * |train|)`` training rows."""
    if not 0 < fraction <= 1:
        raise ValueError(f"replay fraction {fraction} outside (0, 1]")
    n = len(task.train_y)
    k = _round_half_up(fraction * n)
    idx = np.sort(np.random.default_rng(seed).choice(n, size=k, replace=False)) if k < n else np.arange(n)
    return replace(task, replay_idx=idx, replay_fraction=float(fraction))


def with_sources(stream: TaskStream, paths: Sequence) -> TaskStream:
    return replace(stream, sources={str(p): file_sha256(p) for p in paths})
