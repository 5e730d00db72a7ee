"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable primitive computes its forward value with numpy and,
when any input participates in gradients, records the output on a linear
tape together with a closure implementing the local gradient rule. The
tape is consumed by a single backward pass and then discarded.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, NumericError

__all__ = [
    "Tensor", "Tape", "CounterRng", "no_grad", "set_debug_checks",
    "active_tape", "reset_tape", "backward",
    "add", "sub", "mul", "div", "matmul", "transpose", "relu", "sigmoid",
    "tanh", "exp", "log", "concat", "slice_axis", "reshape", "take",
    "take_rows", "scatter_matrix", "diag_matrix", "tsum", "tmean",
    "softmax", "layer_norm", "dropout", "cross_entropy", "linear",
]

_LAYER_NORM_EPS = 1e-8


class Tape:
    """Ordered record of op outputs; execution order is a topological order."""

    __slots__ = ("nodes", "consumed")

    def __init__(self):
        self.nodes = []
        self.consumed = False


_tape = Tape()
_grad_enabled = True
_debug_checks = False


def active_tape() -> Tape:
    return _tape


def reset_tape() -> Tape:
    """Start a fresh tape; any tensors recorded on the old one become inert."""
    global _tape
    _tape = Tape()
    return _tape


def set_debug_checks(flag: bool) -> None:
    """Enable NaN/Inf detection on every tensor construction."""
    global _debug_checks
    _debug_checks = bool(flag)


class no_grad:
    """Context manager disabling tape recording (forward-only evaluation)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class CounterRng:
    """Counter-based deterministic random stream for dropout masks.

    Values are a splitmix64-style hash of (seed, entry counter): each
    drawn value depends only on the seed and its global position, so
    replaying a forward pass after reset() reproduces identical masks.
    """

    def __init__(self, seed: int):
        self.seed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self.counter = 0

    def uniform(self, shape):
        n = int(np.prod(shape)) if shape else 1
        idx = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            x = (idx + np.uint64(1)) * np.uint64(0x9E3779B97F4A7C15) + self.seed
            x ^= x >> np.uint64(30)
            x *= np.uint64(0xBF58476D1CE4E5B9)
            x ^= x >> np.uint64(27)
            x *= np.uint64(0x94D049BB133111EB)
            x ^= x >> np.uint64(31)
        return ((x >> np.uint64(11)).astype(np.float64) * 2.0 ** -53).reshape(shape)

    def reset(self) -> None:
        self.counter = 0


class Tensor:
    __slots__ = ("data", "requires_grad", "_grad", "_backward", "_tape", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if _debug_checks and not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values in tensor {name or '<anon>'}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._grad = None
        self._backward = None
        self._tape = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def grad(self) -> np.ndarray:
        """Accumulated gradient; zeros when the tensor did not participate."""
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    def zero_grad(self) -> None:
        self._grad = None

    def _accum(self, g: np.ndarray) -> None:
        if self._grad is None:
            self._grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self._grad += g

    def _accum_own(self, g: np.ndarray) -> None:
        """Like _accum but takes ownership; g must be a fresh array."""
        if self._grad is None:
            self._grad = g
        else:
            self._grad += g

    def _accum_at(self, idx, g: np.ndarray) -> None:
        """Accumulate into a basic-slice region without a full-size temp."""
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        self._grad[idx] += g

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self) -> None:
        backward(self)

    # ergonomic method forms of the common primitives
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __matmul__(self, other): return matmul(self, other)
    def __neg__(self): return mul(self, -1.0)

    def sum(self, axis=None, keepdims=False): return tsum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return tmean(self, axis, keepdims)
    def relu(self): return relu(self)
    def sigmoid(self): return sigmoid(self)
    def tanh(self): return tanh(self)
    def exp(self): return exp(self)
    def log(self): return log(self)
    def transpose(self): return transpose(self)
    @property
    def T(self): return transpose(self)
    def reshape(self, shape): return reshape(self, shape)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, needs_grad: bool, bw) -> Tensor:
    out = Tensor(data, requires_grad=needs_grad)
    if needs_grad and _grad_enabled:
        out._backward = bw
        out._tape = _tape
        _tape.nodes.append(out)
    return out


def custom(data, needs_grad: bool, bw) -> Tensor:
    """Extension point for fused operations: record `data` as one tape node
    whose gradient rule is `bw(g)` (which must _accum into its inputs)."""
    return _make(data, needs_grad, bw)


def grad_enabled() -> bool:
    return _grad_enabled


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce gradient g back to `shape` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into t.grad for every participating tensor.

    The loss must be a scalar produced on the currently active tape; the
    tape is consumed and replaced afterwards.
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        shape = getattr(loss, "shape", None)
        raise ContractViolation(f"backward expects a scalar loss, got shape {shape}")
    tape = loss._tape
    if tape is None or tape is not _tape:
        raise ContractViolation("loss was not produced on the active tape")
    if tape.consumed:
        raise ContractViolation("backward called twice on one tape")
    loss._grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node._grad is not None and node._backward is not None:
            node._backward(node._grad)
    tape.consumed = True
    tape.nodes.clear()
    reset_tape()


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    needs = a.requires_grad or b.requires_grad

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, needs, bw)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    needs = a.requires_grad or b.requires_grad

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g, b.data.shape))

    return _make(a.data - b.data, needs, bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    needs = a.requires_grad or b.requires_grad

    def bw(g):
        if a.requires_grad:
            a._accum_own(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum_own(_unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, needs, bw)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    needs = a.requires_grad or b.requires_grad
    inv = 1.0 / b.data

    def bw(g):
        if a.requires_grad:
            a._accum_own(_unbroadcast(g * inv, a.data.shape))
        if b.requires_grad:
            b._accum_own(_unbroadcast(-g * a.data * inv * inv, b.data.shape))

    return _make(a.data * inv, needs, bw)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ContractViolation(
            f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    needs = a.requires_grad or b.requires_grad

    def bw(g):
        if a.requires_grad:
            a._accum_own(g @ b.data.T)
        if b.requires_grad:
            b._accum_own(a.data.T @ g)

    return _make(a.data @ b.data, needs, bw)


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ContractViolation(f"transpose expects a matrix, got {a.data.shape}")

    def bw(g):
        a._accum(g.T)

    return _make(np.ascontiguousarray(a.data.T), a.requires_grad, bw)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Fused x @ w + b (one tape node); b broadcasts over rows."""
    if b is None:
        return matmul(x, w)
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ContractViolation(
            f"linear shape mismatch: {x.data.shape} @ {w.data.shape}")
    needs = x.requires_grad or w.requires_grad or b.requires_grad

    def bw(g):
        if x.requires_grad:
            x._accum_own(g @ w.data.T)
        if w.requires_grad:
            w._accum_own(x.data.T @ g)
        if b.requires_grad:
            b._accum_own(g.sum(axis=0) if g.ndim == 2 else _unbroadcast(g, b.data.shape).copy())

    return _make(x.data @ w.data + b.data, needs, bw)


# ---------------------------------------------------------------------------
# nonlinearities

def relu(a) -> Tensor:
    a = _as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def bw(g):
        a._accum_own(g * (a.data > 0.0))

    return _make(out, a.requires_grad, bw)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    # clip keeps exp() in range; endpoints saturate to exactly 0/1 harmlessly
    out = 1.0 / (1.0 + np.exp(-np.clip(a.data, -500.0, 500.0)))

    def bw(g):
        a._accum_own(g * out * (1.0 - out))

    return _make(out, a.requires_grad, bw)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)

    def bw(g):
        a._accum_own(g * (1.0 - out * out))

    return _make(out, a.requires_grad, bw)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)

    def bw(g):
        a._accum_own(g * out)

    return _make(out, a.requires_grad, bw)


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0.0):
        raise ContractViolation("log of non-positive value")
    out = np.log(a.data)

    def bw(g):
        a._accum_own(g / a.data)

    return _make(out, a.requires_grad, bw)


# ---------------------------------------------------------------------------
# shape manipulation

def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    needs = any(t.requires_grad for t in tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accum(g[tuple(idx)])

    return _make(np.concatenate([t.data for t in tensors], axis=axis), needs, bw)


def slice_axis(a, axis: int, start: int, stop: int) -> Tensor:
    a = _as_tensor(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def bw(g):
        a._accum_at(idx, g)

    return _make(np.ascontiguousarray(a.data[idx]), a.requires_grad, bw)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    old = a.data.shape

    def bw(g):
        a._accum(g.reshape(old))

    return _make(a.data.reshape(shape), a.requires_grad, bw)


def take(a, flat_indices) -> Tensor:
    """Gather entries of the flattened tensor; output is 1-D."""
    a = _as_tensor(a)
    flat_indices = np.asarray(flat_indices, dtype=np.intp)

    def bw(g):
        if a._grad is None:
            a._grad = np.zeros_like(a.data)
        np.add.at(a._grad.reshape(-1), flat_indices, g)

    return _make(a.data.reshape(-1)[flat_indices], a.requires_grad, bw)


def take_rows(a, row_indices) -> Tensor:
    """Gather rows of a matrix (rows may repeat)."""
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ContractViolation(f"take_rows expects a matrix, got {a.data.shape}")
    row_indices = np.asarray(row_indices, dtype=np.intp)

    def bw(g):
        if a._grad is None:
            a._grad = np.zeros_like(a.data)
        np.add.at(a._grad, row_indices, g)

    return _make(a.data[row_indices], a.requires_grad, bw)


def scatter_matrix(values, rows, cols, n: int) -> Tensor:
    """Place values[k] at position (rows[k], cols[k]) of an n x n zero matrix.

    Positions must be distinct; used to assemble edge-weight matrices.
    """
    values = _as_tensor(values)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    out = np.zeros((n, n))
    out[rows, cols] = values.data.reshape(-1)

    def bw(g):
        values._accum(g[rows, cols].reshape(values.data.shape))

    return _make(out, values.requires_grad, bw)


def diag_matrix(v) -> Tensor:
    v = _as_tensor(v)
    if v.data.ndim != 1:
        raise ContractViolation(f"diag_matrix expects a vector, got {v.data.shape}")

    def bw(g):
        v._accum(np.diagonal(g).copy())

    return _make(np.diag(v.data), v.requires_grad, bw)


# ---------------------------------------------------------------------------
# reductions

def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)

    def bw(g):
        if axis is None:
            a._accum(np.broadcast_to(g, a.data.shape))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accum(np.broadcast_to(gg, a.data.shape))

    return _make(a.data.sum(axis=axis, keepdims=keepdims), a.requires_grad, bw)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]

    def bw(g):
        if axis is None:
            a._accum(np.broadcast_to(g / count, a.data.shape))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accum(np.broadcast_to(gg / count, a.data.shape))

    return _make(a.data.mean(axis=axis, keepdims=keepdims), a.requires_grad, bw)


# ---------------------------------------------------------------------------
# fused neural-net primitives

def softmax(a) -> Tensor:
    """Softmax over the last axis."""
    a = _as_tensor(a)
    if not np.all(np.isfinite(a.data)):
        raise ContractViolation("softmax input contains non-finite values")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        a._accum_own(out * (g - dot))

    return _make(out, a.requires_grad, bw)


def layer_norm(x, gamma, beta) -> Tensor:
    """Normalize over the last axis to zero mean / unit variance, then scale-shift."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    d = x.data.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise ContractViolation(
            f"layer_norm scale/shift must have shape ({d},), got "
            f"{gamma.data.shape} and {beta.data.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LAYER_NORM_EPS)
    xhat = xc * inv
    out = gamma.data * xhat + beta.data
    needs = x.requires_grad or gamma.requires_grad or beta.requires_grad

    def bw(g):
        if gamma.requires_grad:
            gamma._accum_own((g * xhat).reshape(-1, d).sum(axis=0))
        if beta.requires_grad:
            beta._accum_own(g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gh = g * gamma.data
            term = gh - gh.mean(axis=-1, keepdims=True) \
                - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
            x._accum_own(term * inv)

    return _make(out, needs, bw)


def dropout(x, p: float, train: bool, rng: CounterRng) -> Tensor:
    """Zero entries with probability p and rescale survivors by 1/(1-p)."""
    x = _as_tensor(x)
    if not (0.0 <= p < 1.0):
        raise ContractViolation(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    keep = 1.0 - p
    mask = (rng.uniform(x.data.shape) >= p) / keep

    def bw(g):
        x._accum_own(g * mask)

    return _make(x.data * mask, x.requires_grad, bw)


def cross_entropy(logits, label: int) -> Tensor:
    """Negative log-likelihood of `label` under softmax(logits); scalar output."""
    logits = _as_tensor(logits)
    z = logits.data.reshape(-1)
    label = int(label)
    if not (0 <= label < z.size):
        raise ContractViolation(f"label {label} out of range for {z.size} classes")
    m = z.max()
    lse = m + np.log(np.exp(z - m).sum())
    loss = lse - z[label]

    def bw(g):
        p = np.exp(z - lse)
        p[label] -= 1.0
        logits._accum_own(float(g) * p.reshape(logits.data.shape))

    return _make(loss, logits.requires_grad, bw)
