"""Minimal float64 neural-network engine with a shared trunk and per-task heads.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Image batches
enter as ``(N, C, H, W)`` and are carried internally as ``(N, H, W, C)`` so
convolutions reduce to a single matrix product per layer.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.9

TRAIN = "train"
EVAL = "eval"


class ShapeError(ValueError):
    """Raised when two consecutive layers cannot be chained."""


class MissingHeadError(KeyError):
    """Raised when a task has no classifier head in the network."""


class StaleCacheError(RuntimeError):
    """Raised when backward is handed a cache from a different forward pass."""


# --------------------------------------------------------------------------
# layer specs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Conv2D:
    kernel: int = 3
    filters: int = 80
    stride: int = 1


@dataclass(frozen=True)
class MaxPool2D:
    window: int = 2


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class BatchNorm:
    pass


@dataclass(frozen=True)
class Dropout:
    p: float = 0.2


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    units: int


LayerSpec = Union[Conv2D, MaxPool2D, ReLU, BatchNorm, Dropout, Flatten, Dense]
_LAYER_TYPES = {cls.__name__: cls for cls in (Conv2D, MaxPool2D, ReLU, BatchNorm, Dropout, Flatten, Dense)}


def _describe(layer: LayerSpec) -> str:
    args = ", ".join(f"{k}={v}" for k, v in asdict(layer).items())
    return f"{type(layer).__name__}({args})"


@dataclass(frozen=True)
class NetworkSpec:
    """Trunk layer stack plus the input shape it consumes.

    ``input_shape`` is ``(C, H, W)`` for images or ``(D,)`` for feature
    vectors. Heads are always a zero-bias ``Dense(num_classes)`` applied to
    the flattened trunk output.
    """

    input_shape: tuple
    trunk: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "trunk", tuple(self.trunk))
        self.shapes()

    def shapes(self) -> list[tuple]:
        """Per-layer output shapes in (C, H, W) / (D,) convention; validates the stack."""
        shape = self.input_shape
        if any(s <= 0 for s in shape) or len(shape) not in (1, 3):
            raise ShapeError(f"input shape {shape} must be (C, H, W) or (D,) with positive entries")
        out = []
        prev = "input"
        for i, layer in enumerate(self.trunk):
            name = f"{_describe(layer)} at index {i}"
            shape = _out_shape(layer, shape, prev, name)
            out.append(shape)
            prev = name
        return out

    @property
    def feature_dim(self) -> int:
        shapes = self.shapes()
        last = shapes[-1] if shapes else self.input_shape
        return int(np.prod(last))

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "trunk": [{"type": type(l).__name__, **asdict(l)} for l in self.trunk],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "NetworkSpec":
        trunk = []
        for entry in d["trunk"]:
            entry = dict(entry)
            kind = entry.pop("type")
            trunk.append(_LAYER_TYPES[kind](**entry))
        return cls(tuple(d["input_shape"]), tuple(trunk))


def _out_shape(layer: LayerSpec, shape: tuple, prev: str, name: str) -> tuple:
    def bad(why: str):
        return ShapeError(f"{name} cannot follow {prev}: {why} (got input shape {shape})")

    if isinstance(layer, Conv2D):
        if len(shape) != 3:
            raise bad("Conv2D expects a (C, H, W) input")
        if layer.kernel < 1 or layer.filters < 1 or layer.stride < 1:
            raise bad("kernel, filters and stride must be positive")
        c, h, w = shape
        # "same" padding: output spatial size ceil(in / stride)
        return (layer.filters, -(-h // layer.stride), -(-w // layer.stride))
    if isinstance(layer, MaxPool2D):
        if len(shape) != 3:
            raise bad("MaxPool2D expects a (C, H, W) input")
        c, h, w = shape
        if layer.window < 1 or h < layer.window or w < layer.window:
            raise bad(f"pool window {layer.window} does not fit")
        return (c, h // layer.window, w // layer.window)
    if isinstance(layer, (ReLU, BatchNorm)):
        return shape
    if isinstance(layer, Dropout):
        if not 0.0 <= layer.p < 1.0:
            raise bad("dropout probability must lie in [0, 1)")
        return shape
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(layer, Dense):
        if len(shape) != 1:
            raise bad("Dense expects a flat (D,) input; insert Flatten first")
        if layer.units < 1:
            raise bad("units must be positive")
        return (layer.units,)
    raise TypeError(f"unknown layer spec {layer!r}")


def small_cnn(input_shape=(1, 28, 28), filters: int = 80, dropout: float = 0.2) -> NetworkSpec:
    """Three conv blocks (conv, max-pool, ReLU, batch-norm) then dropout and flatten."""
    trunk: list[LayerSpec] = []
    for _ in range(3):
        trunk += [Conv2D(3, filters), MaxPool2D(2), ReLU(), BatchNorm()]
    if dropout > 0:
        trunk.append(Dropout(dropout))
    trunk.append(Flatten())
    return NetworkSpec(tuple(input_shape), tuple(trunk))


def mlp(input_dim: int, hidden: Sequence[int] = (64,), dropout: float = 0.0, batchnorm: bool = False) -> NetworkSpec:
    trunk: list[LayerSpec] = []
    for units in hidden:
        trunk.append(Dense(units))
        if batchnorm:
            trunk.append(BatchNorm())
        trunk.append(ReLU())
    if dropout > 0:
        trunk.append(Dropout(dropout))
    return NetworkSpec((input_dim,), tuple(trunk))


# --------------------------------------------------------------------------
# the network
# --------------------------------------------------------------------------


@dataclass
class BatchCache:
    version: int
    mode: str
    bn_batch_stats: bool
    layer_caches: list
    features: np.ndarray
    groups: dict  # task_id -> row indices into the batch
    consumed: bool = False


@dataclass
class MultiHeadNetwork:
    spec: NetworkSpec
    params: dict
    buffers: dict
    head_classes: dict
    no_decay: set = field(default_factory=set)
    mode: str = TRAIN
    version: int = 0

    @property
    def task_ids(self) -> list:
        return list(self.head_classes)

    def trunk_keys(self) -> list[str]:
        return [k for k in self.params if k.startswith("t")]

    def head_keys(self, task_id) -> list[str]:
        return [f"h{task_id}.w", f"h{task_id}.b"]

    def keys_for(self, task_ids: Iterable) -> list[str]:
        keys = self.trunk_keys()
        for t in task_ids:
            keys += self.head_keys(t)
        return keys

    def num_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def touch(self) -> None:
        """Invalidate outstanding caches (call after mutating parameters)."""
        self.version += 1

    def copy(self) -> "MultiHeadNetwork":
        return MultiHeadNetwork(
            self.spec,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
            dict(self.head_classes),
            set(self.no_decay),
            self.mode,
            self.version,
        )


def _kaiming(rng: np.random.Generator, fan_in: int, shape: tuple) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


def _normalize_tasks(task_ids, num_classes) -> dict:
    if isinstance(task_ids, Mapping):
        out = {int(t): int(c) for t, c in task_ids.items()}
    else:
        if num_classes is None:
            raise TypeError("pass num_classes when task_ids is a plain list")
        out = {int(t): int(num_classes) for t in task_ids}
    if not out:
        raise ValueError("at least one task head is required")
    if any(c < 1 for c in out.values()):
        raise ValueError("every head needs at least one class")
    return out


def init_network(spec: NetworkSpec, task_ids, seed: int, num_classes: int | None = None) -> MultiHeadNetwork:
    """Build a network with Kaiming-normal weights and zero biases.

    ``task_ids`` maps each task id to its class count, or is a list of ids
    sharing ``num_classes``. Heads are drawn in iteration order.
    """
    heads = _normalize_tasks(task_ids, num_classes)
    rng = np.random.default_rng(seed)
    params: dict = {}
    buffers: dict = {}
    no_decay: set = set()
    shape = spec.input_shape
    for i, (layer, out_shape) in enumerate(zip(spec.trunk, spec.shapes())):
        if isinstance(layer, Conv2D):
            fan_in = shape[0] * layer.kernel * layer.kernel
            params[f"t{i}.w"] = _kaiming(rng, fan_in, (layer.filters, shape[0], layer.kernel, layer.kernel))
            params[f"t{i}.b"] = np.zeros(layer.filters)
        elif isinstance(layer, Dense):
            params[f"t{i}.w"] = _kaiming(rng, shape[0], (shape[0], layer.units))
            params[f"t{i}.b"] = np.zeros(layer.units)
        elif isinstance(layer, BatchNorm):
            ch = shape[0]
            params[f"t{i}.gamma"] = np.ones(ch)
            params[f"t{i}.beta"] = np.zeros(ch)
            buffers[f"t{i}.mean"] = np.zeros(ch)
            buffers[f"t{i}.var"] = np.ones(ch)
            no_decay |= {f"t{i}.gamma", f"t{i}.beta"}
        shape = out_shape
    feat = spec.feature_dim
    for t, classes in heads.items():
        params[f"h{t}.w"] = _kaiming(rng, feat, (feat, classes))
        params[f"h{t}.b"] = np.zeros(classes)
        no_decay.add(f"h{t}.b")
    return MultiHeadNetwork(spec, params, buffers, heads, no_decay)


# --------------------------------------------------------------------------
# layer kernels (NHWC for images)
# --------------------------------------------------------------------------


def _conv_forward(x, w, b, stride):
    n, h, wd, c = x.shape
    f, _, k, _ = w.shape
    ho, wo = -(-h // stride), -(-wd // stride)
    # "same" padding sized so the last window fits
    ph = max((ho - 1) * stride + k - h, 0)
    pw = max((wo - 1) * stride + k - wd, 0)
    pads = ((0, 0), (ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2), (0, 0))
    xp = np.pad(x, pads)
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    win = win[:, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    # column layout (ky, kx, c) keeps channel slices contiguous for col2im
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, k * k * c)
    wmat = w.transpose(0, 2, 3, 1).reshape(f, -1)
    out = cols @ wmat.T
    out += b
    return out.reshape(n, ho, wo, f), (cols, xp.shape, pads, stride, k)


def _conv_backward(dout, w, cache, need_dx=True):
    cols, xp_shape, pads, stride, k = cache
    n, ho, wo, f = dout.shape
    d2 = dout.reshape(-1, f)
    dw = (d2.T @ cols).reshape(f, k, k, -1).transpose(0, 3, 1, 2)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    c = xp_shape[3]
    dcols = (d2 @ w.transpose(0, 2, 3, 1).reshape(f, -1)).reshape(n, ho, wo, k, k, c)
    dxp = np.zeros(xp_shape)
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + (ho - 1) * stride + 1 : stride, j : j + (wo - 1) * stride + 1 : stride, :] += dcols[:, :, :, i, j, :]
    (_, _), (t, bot), (l, r), (_, _) = pads
    dx = dxp[:, t : xp_shape[1] - bot, l : xp_shape[2] - r, :]
    return dx, dw, db


def _pool_forward(x, window):
    n, h, w, c = x.shape
    ho, wo = h // window, w // window
    views = [x[:, i : ho * window : window, j : wo * window : window, :] for i in range(window) for j in range(window)]
    out = views[0].copy()
    for v in views[1:]:
        np.maximum(out, v, out=out)
    # route each window's gradient to its first maximal entry only
    masks = []
    taken = np.zeros(out.shape, dtype=bool)
    for v in views:
        m = (v == out) & ~taken
        taken |= m
        masks.append(m)
    return out, (masks, x.shape, window)


def _pool_backward(dout, cache):
    masks, shape, window = cache
    n, h, w, c = shape
    ho, wo = h // window, w // window
    dx = np.zeros(shape)
    for idx, m in enumerate(masks):
        i, j = divmod(idx, window)
        dx[:, i : ho * window : window, j : wo * window : window, :] = dout * m
    return dx


def _bn_forward(x, gamma, beta, mean, var, use_batch):
    axes = tuple(range(x.ndim - 1))
    if use_batch:
        mu = x.mean(axis=axes)
        v = x.var(axis=axes)
    else:
        mu, v = mean, var
    inv = 1.0 / np.sqrt(v + BN_EPS)
    xhat = (x - mu) * inv
    return gamma * xhat + beta, (xhat, inv, use_batch, mu, v)


def _bn_backward(dout, gamma, cache):
    xhat, inv, use_batch, _, _ = cache
    axes = tuple(range(dout.ndim - 1))
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * gamma
    if not use_batch:
        return dxhat * inv, dgamma, dbeta
    m = dout.size // dout.shape[-1]
    dx = inv / m * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
    return dx, dgamma, dbeta


# --------------------------------------------------------------------------
# forward / backward
# --------------------------------------------------------------------------


def _to_internal(batch: np.ndarray, spec: NetworkSpec) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.shape[1:] != spec.input_shape:
        raise ShapeError(f"batch shape {x.shape[1:]} does not match network input {spec.input_shape}")
    if x.ndim == 4:
        x = x.transpose(0, 2, 3, 1)
    return x


def _trunk_forward(net, x, mode, rng, bn_batch_stats, update_stats):
    caches = []
    p = net.params
    for i, layer in enumerate(net.spec.trunk):
        if isinstance(layer, Conv2D):
            x, c = _conv_forward(x, p[f"t{i}.w"], p[f"t{i}.b"], layer.stride)
        elif isinstance(layer, MaxPool2D):
            x, c = _pool_forward(x, layer.window)
        elif isinstance(layer, ReLU):
            c = x > 0
            x = x * c
        elif isinstance(layer, BatchNorm):
            x, c = _bn_forward(
                x, p[f"t{i}.gamma"], p[f"t{i}.beta"], net.buffers[f"t{i}.mean"], net.buffers[f"t{i}.var"], bn_batch_stats
            )
            if update_stats:
                _, _, _, mu, v = c
                net.buffers[f"t{i}.mean"] = BN_MOMENTUM * net.buffers[f"t{i}.mean"] + (1 - BN_MOMENTUM) * mu
                net.buffers[f"t{i}.var"] = BN_MOMENTUM * net.buffers[f"t{i}.var"] + (1 - BN_MOMENTUM) * v
        elif isinstance(layer, Dropout):
            if mode == TRAIN and layer.p > 0:
                if rng is None:
                    raise ValueError("train-mode dropout needs an rng")
                c = (rng.random(x.shape) >= layer.p) / (1.0 - layer.p)
                x = x * c
            else:
                c = None
        elif isinstance(layer, Flatten):
            c = x.shape
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Dense):
            c = x
            x = x @ p[f"t{i}.w"] + p[f"t{i}.b"]
        caches.append(c)
    return x.reshape(x.shape[0], -1), caches


def forward_mixed(net: MultiHeadNetwork, batch, task_ids, mode=TRAIN, rng=None, *, bn_batch_stats=None, update_stats=None):
    """Run the trunk once on a mixed-task batch and dispatch rows to their heads.

    Returns ``({task_id: logits}, cache)``; rows of each logits array follow the
    order of that task's examples in ``batch``.
    """
    task_ids = np.asarray(task_ids)
    groups = {}
    for t in dict.fromkeys(task_ids.tolist()):
        if t not in net.head_classes:
            raise MissingHeadError(f"network has no head for task {t!r}")
        groups[t] = np.flatnonzero(task_ids == t)
    if bn_batch_stats is None:
        bn_batch_stats = mode == TRAIN
    if update_stats is None:
        update_stats = mode == TRAIN
    x = _to_internal(batch, net.spec)
    feats, caches = _trunk_forward(net, x, mode, rng, bn_batch_stats, update_stats)
    logits = {t: feats[idx] @ net.params[f"h{t}.w"] + net.params[f"h{t}.b"] for t, idx in groups.items()}
    net.version += 1
    return logits, BatchCache(net.version, mode, bn_batch_stats, caches, feats, groups)


def forward(net: MultiHeadNetwork, task_id, batch, mode=EVAL, rng=None, **kw):
    """Logits of ``batch`` under the head of ``task_id``."""
    if task_id not in net.head_classes:
        raise MissingHeadError(f"network has no head for task {task_id!r}")
    n = np.shape(batch)[0]
    logits, cache = forward_mixed(net, batch, np.full(n, task_id), mode, rng, **kw)
    return logits[task_id], cache


def backward_mixed(net: MultiHeadNetwork, cache: BatchCache, dlogits: Mapping) -> dict:
    """Gradients of every parameter touched by the cached forward pass."""
    if cache is None or cache.consumed or cache.version != net.version:
        raise StaleCacheError("backward needs the cache of the most recent forward pass")
    cache.consumed = True
    p = net.params
    grads = {}
    dfeat = np.zeros_like(cache.features)
    for t, idx in cache.groups.items():
        d = np.asarray(dlogits[t], dtype=np.float64)
        f = cache.features[idx]
        grads[f"h{t}.w"] = f.T @ d
        grads[f"h{t}.b"] = d.sum(axis=0)
        dfeat[idx] = d @ p[f"h{t}.w"].T
    dx = dfeat
    for i in range(len(net.spec.trunk) - 1, -1, -1):
        layer = net.spec.trunk[i]
        c = cache.layer_caches[i]
        if isinstance(layer, Conv2D):
            dx, grads[f"t{i}.w"], grads[f"t{i}.b"] = _conv_backward(dx, p[f"t{i}.w"], c, need_dx=i > 0)
        elif isinstance(layer, MaxPool2D):
            dx = _pool_backward(dx, c)
        elif isinstance(layer, ReLU):
            dx = dx * c
        elif isinstance(layer, BatchNorm):
            dx, grads[f"t{i}.gamma"], grads[f"t{i}.beta"] = _bn_backward(dx, p[f"t{i}.gamma"], c)
        elif isinstance(layer, Dropout):
            if c is not None:
                dx = dx * c
        elif isinstance(layer, Flatten):
            dx = dx.reshape(c)
        elif isinstance(layer, Dense):
            grads[f"t{i}.w"] = c.T @ dx
            grads[f"t{i}.b"] = dx.sum(axis=0)
            dx = dx @ p[f"t{i}.w"].T
        if dx is None:
            break
    return grads


def backward(net: MultiHeadNetwork, cache: BatchCache, dlogits, task_id) -> dict:
    if set(cache.groups) != {task_id}:
        raise StaleCacheError(f"cache was produced for tasks {list(cache.groups)}, not {task_id!r}")
    return backward_mixed(net, cache, {task_id: dlogits})


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels, scale: int | None = None):
    """Mean cross-entropy and its gradient w.r.t. the logits.

    ``scale`` overrides the divisor (default: batch size); mixed-task batches
    pass the full batch size so per-head gradients add up to the batch mean.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise IndexError(f"label out of range for {k} classes")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    nll = logsum - z[rows, labels]
    denom = n if scale is None else scale
    loss = float(nll.sum() / denom)
    d = softmax(logits)
    d[rows, labels] -= 1.0
    return loss, d / denom


def predict_proba(net: MultiHeadNetwork, task_id, batch, chunk: int = 512) -> np.ndarray:
    """Eval-mode class probabilities; pure in (parameters, running stats, input)."""
    batch = np.asarray(batch, dtype=np.float64)
    if task_id not in net.head_classes:
        raise MissingHeadError(f"network has no head for task {task_id!r}")
    if len(batch) == 0:
        return np.zeros((0, net.head_classes[task_id]))
    out = []
    for s in range(0, len(batch), chunk):
        x = _to_internal(batch[s : s + chunk], net.spec)
        feats, _ = _trunk_forward(net, x, EVAL, None, False, False)
        out.append(softmax(feats @ net.params[f"h{task_id}.w"] + net.params[f"h{task_id}.b"]))
    return np.concatenate(out)


# --------------------------------------------------------------------------
# gradient verification
# --------------------------------------------------------------------------


def grad_check(net: MultiHeadNetwork, task_id, batch, labels, epsilon: float = 1e-5, bn_mode: str = "fixed") -> float:
    """Largest relative error between backprop and central differences.

    Dropout is off. ``bn_mode="fixed"`` normalizes with the running
    statistics; ``"batch"`` differentiates through the batch statistics
    without updating the running averages.
    """
    if bn_mode not in ("fixed", "batch"):
        raise ValueError("bn_mode must be 'fixed' or 'batch'")
    use_batch = bn_mode == "batch"

    def loss_at() -> float:
        logits, _ = forward(net, task_id, batch, EVAL, bn_batch_stats=use_batch, update_stats=False)
        return softmax_cross_entropy(logits, labels)[0]

    logits, cache = forward(net, task_id, batch, EVAL, bn_batch_stats=use_batch, update_stats=False)
    _, dlogits = softmax_cross_entropy(logits, labels)
    grads = backward(net, cache, dlogits, task_id)

    worst = 0.0
    for key in net.keys_for([task_id]):
        p = net.params[key]
        g = grads[key]
        flat = p.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + epsilon
            up = loss_at()
            flat[j] = old - epsilon
            down = loss_at()
            flat[j] = old
            num = (up - down) / (2 * epsilon)
            ana = g.reshape(-1)[j]
            err = abs(num - ana) / max(abs(num), abs(ana), 1e-8)
            worst = max(worst, err)
    return worst


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


def _encode(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")}


def _decode(d: Mapping) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(d["shape"])


def network_to_dict(net: MultiHeadNetwork) -> dict:
    return {
        "format": "modelzoo-network/1",
        "spec": net.spec.to_dict(),
        "heads": {str(t): c for t, c in net.head_classes.items()},
        "params": {k: _encode(v) for k, v in net.params.items()},
        "buffers": {k: _encode(v) for k, v in net.buffers.items()},
        "no_decay": sorted(net.no_decay),
    }


def network_from_dict(d: Mapping) -> MultiHeadNetwork:
    if d.get("format") != "modelzoo-network/1":
        raise ValueError(f"unrecognized checkpoint format {d.get('format')!r}")
    return MultiHeadNetwork(
        NetworkSpec.from_dict(d["spec"]),
        {k: _decode(v) for k, v in d["params"].items()},
        {k: _decode(v) for k, v in d["buffers"].items()},
        {int(t): int(c) for t, c in d["heads"].items()},
        set(d["no_decay"]),
        EVAL,
    )


def save_network(net: MultiHeadNetwork, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), sort_keys=True))


def load_network(path) -> MultiHeadNetwork:
    return network_from_dict(json.loads(Path(path).read_text()))
