"""Small reverse-mode autodiff over float64 numpy arrays.

Only the handful of kernels the encoders and the translation loss need are
provided. Every op takes :class:`Tensor` or array-like inputs and returns a
:class:`Tensor`; gradients reach the leaf parameters held in a
:class:`ParamStore` when :func:`backward` is called on a scalar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import FormatError, NumericError, ShapeError

CHECKPOINT_VERSION = 1
DEFAULT_LEAKY_SLOPE = 0.2


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, data, parents=(), backward_fn=None, name=None, requires_grad=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if name is not None else None

    @property
    def shape(self):
        return self.data.shape

    def __float__(self):
        return float(self.data)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, requires_grad=False)


def _check_finite(arr: np.ndarray, op: str):
    if not np.isfinite(arr).all():
        raise NumericError(f"{op}: non-finite input")


def _node(data, parents, backward_fn) -> Tensor:
    out = Tensor(data, parents)
    if out.requires_grad:
        out.backward_fn = backward_fn
    else:
        out.parents = ()
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim not in (1, 2) or b.data.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def back(g):
        if a.data.ndim == 1:
            return g @ b.data.T, np.outer(a.data, g)
        return g @ b.data.T, a.data.T @ g

    return _node(a.data @ b.data, (a, b), back)


def sum(x, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _node(x.data.sum(axis=axis), (x,), back)


def sigmoid(v) -> Tensor:
    v = as_tensor(v)
    _check_finite(v.data, "sigmoid")
    x = v.data
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _node(out, (v,), lambda g: (g * out * (1.0 - out),))


def leaky_relu(v, slope: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    v = as_tensor(v)
    _check_finite(v.data, "leaky_relu")
    scale = np.where(v.data >= 0, 1.0, slope)
    return _node(v.data * scale, (v,), lambda g: (g * scale,))


def relu(v) -> Tensor:
    v = as_tensor(v)
    active = (v.data > 0).astype(np.float64)
    return _node(v.data * active, (v,), lambda g: (g * active,))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    orig = x.shape
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(orig),))


def take(x, idx) -> Tensor:
    """Rows of ``x`` selected by integer array ``idx`` (gather along axis 0)."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.intp)

    def back(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g)
        return (out,)

    return _node(x.data[idx], (x,), back)


def slice_(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)

    def back(g):
        out = np.zeros_like(x.data)
        out[start:stop] = g
        return (out,)

    return _node(x.data[start:stop], (x,), back)


def _check_offsets(offsets: np.ndarray, n: int, op: str):
    if n == 0 or len(offsets) == 0 or offsets[0] != 0 or np.any(np.diff(offsets) <= 0) \
            or offsets[-1] >= n:
        raise ShapeError(f"{op}: segments must be non-empty and cover the input")


def segment_softmax(v, offsets) -> Tensor:
    """Softmax computed independently within each contiguous segment of a 1-D input.

    ``offsets`` are segment start positions, beginning at 0.
    """
    v = as_tensor(v)
    offsets = np.asarray(offsets, dtype=np.intp)
    if v.data.ndim != 1:
        raise ShapeError("segment_softmax: expected a 1-D input")
    _check_offsets(offsets, v.data.size, "segment_softmax")
    _check_finite(v.data, "segment_softmax")
    lengths = np.diff(np.append(offsets, v.data.size))
    seg_max = np.repeat(np.maximum.reduceat(v.data, offsets), lengths)
    e = np.exp(v.data - seg_max)
    out = e / np.repeat(np.add.reduceat(e, offsets), lengths)

    def back(g):
        dot = np.repeat(np.add.reduceat(g * out, offsets), lengths)
        return (out * (g - dot),)

    return _node(out, (v,), back)


def segment_sum(x, offsets) -> Tensor:
    """Sum rows of ``x`` within contiguous segments; one output row per segment."""
    x = as_tensor(x)
    offsets = np.asarray(offsets, dtype=np.intp)
    _check_offsets(offsets, x.data.shape[0], "segment_sum")
    lengths = np.diff(np.append(offsets, x.data.shape[0]))
    return _node(np.add.reduceat(x.data, offsets, axis=0), (x,),
                 lambda g: (np.repeat(g, lengths, axis=0),))


def softmax(v) -> Tensor:
    v = as_tensor(v)
    if v.data.ndim != 1 or v.data.size == 0:
        raise ShapeError(f"softmax: expected a non-empty 1-D input, got shape {v.shape}")
    return segment_softmax(v, [0])


def sq_l2_distance(u, v) -> Tensor:
    """Squared Euclidean distance; a scalar for vectors, one value per row for matrices."""
    u, v = as_tensor(u), as_tensor(v)
    if u.shape != v.shape:
        raise ShapeError(f"sq_l2_distance: shape mismatch {u.shape} vs {v.shape}")
    diff = u.data - v.data
    _check_finite(diff, "sq_l2_distance")
    out = np.square(diff).sum(axis=-1)

    def back(g):
        gd = 2.0 * diff * np.expand_dims(g, -1)
        return gd, -gd

    return _node(out, (u, v), back)


def backward(output: Tensor, store: "ParamStore | None" = None) -> None:
    """Accumulate d(output)/d(param) into every parameter reachable from ``output``.

    ``store`` is accepted for symmetry with :func:`grad_check`; gradients
    live on the parameter tensors themselves.
    """
    if output.data.ndim != 0:
        raise ShapeError(f"backward: output must be a scalar, got shape {output.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    grads = {id(output): np.ones(())}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            if node.grad is not None:
                node.grad += g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


@dataclass
class ParamStore:
    """Named float64 parameters with paired gradient slots and a seeded generator."""

    seed: int = 0
    params: dict[str, Tensor] = field(default_factory=dict)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)

    def add(self, name: str, shape, dim: int | None = None, value=None) -> Tensor:
        """Register a parameter, uniform in [-1/sqrt(dim), 1/sqrt(dim)] unless ``value`` is given."""
        if name in self.params:
            raise KeyError(f"parameter {name!r} already registered")
        shape = tuple(int(s) for s in shape)
        if value is None:
            bound = 1.0 / np.sqrt(dim if dim is not None else shape[-1])
            value = self.rng.uniform(-bound, bound, size=shape)
        value = np.array(value, dtype=np.float64).reshape(shape)
        _check_finite(value, f"param {name}")
        t = Tensor(value, name=name, requires_grad=True)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def items(self):
        return self.params.items()

    def zero_grad(self):
        for t in self.params.values():
            t.grad[...] = 0.0

    def sgd_step(self, lr: float):
        for t in self.params.values():
            t.data -= lr * t.grad

    def values(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def copy(self) -> "ParamStore":
        out = ParamStore(self.seed)
        out.rng = np.random.default_rng()
        out.rng.bit_generator.state = self.rng.bit_generator.state
        for k, t in self.params.items():
            out.add(k, t.shape, value=t.data)
        return out


def save_params(store: ParamStore, path, meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_params(store, meta))


def dumps_params(store: ParamStore, meta: dict | None = None) -> str:
    doc = {
        "version": CHECKPOINT_VERSION,
        "seed": store.seed,
        "meta": meta or {},
        "params": {k: {"shape": list(t.shape), "values": t.data.ravel().tolist()}
                   for k, t in store.items()},
    }
    return json.dumps(doc, sort_keys=True) + "\n"


def loads_params(text: str) -> tuple[ParamStore, dict]:
    doc = json.loads(text)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"checkpoint version mismatch: expected {CHECKPOINT_VERSION}, "
                          f"found {doc.get('version')!r}")
    store = ParamStore(int(doc["seed"]))
    for name, rec in doc["params"].items():
        store.add(name, rec["shape"], value=np.array(rec["values"], dtype=np.float64))
    return store, doc.get("meta", {})


def load_params(path) -> tuple[ParamStore, dict]:
    with open(path, encoding="utf-8") as fh:
        return loads_params(fh.read())


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    per_param: dict[str, float]
    tol: float

    def __bool__(self):
        return self.passed


def grad_check(f: Callable[[ParamStore], Tensor], store: ParamStore, tol: float = 1e-4,
               h: float = 1e-5, floor: float = 1e-6,
               names: list[str] | None = None) -> GradCheckReport:
    """Compare :func:`backward` gradients with central differences.

    The per-element error is ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``;
    ``floor`` keeps elements whose true gradient is zero from turning
    rounding noise into a large ratio.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    store.zero_grad()
    out = f(store)
    backward(out, store)
    per_param = {}
    for name in names or list(store):
        p = store[name]
        analytic = p.grad.copy()
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            plus = float(f(store).data)
            flat[k] = orig - h
            minus = float(f(store).data)
            flat[k] = orig
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise NumericError(f"grad_check: non-finite value perturbing {name}[{k}]")
            nflat[k] = (plus - minus) / (2.0 * h)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        per_param[name] = float(np.max(np.abs(analytic - numeric) / denom)) if p.data.size else 0.0
    store.zero_grad()
    worst = max(per_param.values(), default=0.0)
    return GradCheckReport(worst <= tol, worst, per_param, tol)
