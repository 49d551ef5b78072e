"""Reverse-mode automatic differentiation over dense float64 arrays.

Define-by-run: each operation returns a new :class:`Tensor` that remembers
its parents and how to push a gradient back to them. ``backward`` linearizes
the recorded graph into a topologically ordered tape and applies the chain
rule in reverse. Everything is double precision.

Gradients accumulate across ``backward`` calls until cleared with
``zero_grad``. Recording can be suspended with the ``no_grad`` context
manager (used on all inference paths).
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np
from scipy.special import erf

from .errors import ConfigurationError, ShapeError

_grad_enabled = True

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@contextmanager
def no_grad():
    """Suspend graph recording within the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A float64 array plus an optional gradient accumulator."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar over the catalog ops.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    """Wrap an op result, recording parents only while tracing."""
    tracked = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=tracked)
    if tracked:
        out._parents = parents
        out._backward = backward
    return out


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------------------
# Op catalog
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs ndim >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(a.data @ b.data, (a, b), backward)


def conv1d(x, kernel, bias=None) -> Tensor:
    """Same-length 1-D convolution along the first axis.

    ``x`` is (L, C_in), ``kernel`` is (K, C_in, C_out) with odd K, and the
    output is (L, C_out). Out-of-range frames are treated as zeros.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.data.ndim != 2 or kernel.data.ndim != 3:
        raise ShapeError(f"conv1d expects (L, C_in) and (K, C_in, C_out), got {x.shape}, {kernel.shape}")
    K, c_in, _ = kernel.shape
    if K % 2 == 0:
        raise ShapeError(f"conv1d kernel size must be odd, got {K}")
    if x.shape[1] != c_in:
        raise ShapeError(f"conv1d channel mismatch: input {x.shape[1]}, kernel {c_in}")
    L = x.shape[0]
    pad = K // 2
    xp = np.pad(x.data, ((pad, pad), (0, 0)))
    out = xp[0:L] @ kernel.data[0]
    for k in range(1, K):
        out += xp[k : k + L] @ kernel.data[k]
    parents = [x, kernel]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (kernel.shape[2],):
            raise ShapeError(f"conv1d bias shape {bias.shape} != ({kernel.shape[2]},)")
        out = out + bias.data
        parents.append(bias)

    def backward(g):
        gk = np.empty_like(kernel.data)
        gxp = np.zeros_like(xp)
        for k in range(K):
            gk[k] = xp[k : k + L].T @ g
            gxp[k : k + L] += g @ kernel.data[k].T
        grads = [gxp[pad : pad + L], gk]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return tuple(grads)

    return _result(out, tuple(parents), backward)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _result(s, (x,), backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale by ``gain`` and add ``bias``."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm gain/bias must be ({d},), got {gain.shape}, {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        ggain = (g * xhat).sum(axis=lead)
        gbias = g.sum(axis=lead)
        gh = g * gain.data
        gx = inv * (
            gh
            - gh.mean(axis=-1, keepdims=True)
            - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, ggain, gbias

    return _result(xhat * gain.data + bias.data, (x, gain, bias), backward)


def gelu(x) -> Tensor:
    """Exact (erf-based) Gaussian error linear unit."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return _result(x.data * cdf, (x,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ShapeError("concat of zero tensors")
    ref = list(tensors[0].shape)
    ax = axis if axis >= 0 else len(ref) + axis
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(ref) or any(
            i != ax and other[i] != ref[i] for i in range(len(ref))
        ):
            raise ShapeError(f"concat shapes incompatible along axis {axis}: "
                             f"{[t.shape for t in tensors]}")
    sizes = [t.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=ax))

    return _result(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward)


def _reduction_backward(g, x: Tensor, axis, count: float):
    if axis is None:
        return np.full_like(x.data, g / count)
    g = np.expand_dims(g, axis)
    return np.broadcast_to(g, x.shape) / count


def mean(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else x.shape[axis]

    def backward(g):
        return (_reduction_backward(g, x, axis, float(count)),)

    return _result(np.mean(x.data, axis=axis), (x,), backward)


def tsum(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        return (_reduction_backward(g, x, axis, 1.0),)

    return _result(np.sum(x.data, axis=axis), (x,), backward)


def squared_error(pred, target) -> Tensor:
    """Mean of elementwise squared differences, as a scalar."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"squared_error shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = float(diff.size)

    def backward(g):
        base = (2.0 / n) * g * diff
        return base, -base

    return _result(np.mean(diff * diff), (pred, target), backward)


def scale_shift(x, scale, shift) -> Tensor:
    """Feature-wise modulation ``x * (1 + scale) + shift``.

    The +1 makes a zero scale the identity, so modulation starts neutral.
    """
    x, scale, shift = as_tensor(x), as_tensor(scale), as_tensor(shift)
    _broadcast_shape(x, scale, "scale_shift")
    _broadcast_shape(x, shift, "scale_shift")

    def backward(g):
        return (
            _unbroadcast(g * (1.0 + scale.data), x.shape),
            _unbroadcast(g * x.data, scale.shape),
            _unbroadcast(g, shift.shape),
        )

    return _result(x.data * (1.0 + scale.data) + shift.data, (x, scale, shift), backward)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)

    def backward(g):
        return (g.reshape(x.shape),)

    return _result(x.data.reshape(shape), (x,), backward)


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (g.transpose(inverse),)

    return _result(x.data.transpose(axes), (x,), backward)


def cosine_window_similarity(x, window: int) -> Tensor:
    """Cosine similarity of each row against rows within +-window offsets.

    ``x`` is (L, d); the result is (L, 2*window + 1) with column j holding
    the similarity to the row at offset j - window. Out-of-range neighbors
    and zero-norm rows give similarity 0.
    """
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"cosine_window_similarity expects (L, d), got {x.shape}")
    if not isinstance(window, int) or window < 1:
        raise ConfigurationError(f"window must be a positive integer, got {window!r}")
    L = x.shape[0]
    norms = np.linalg.norm(x.data, axis=1)
    inv = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 0.0)
    u = x.data * inv[:, None]
    out = np.zeros((L, 2 * window + 1))
    for o in range(-window, window + 1):
        lo, hi = max(0, -o), min(L, L - o)
        if lo >= hi:
            continue
        out[lo:hi, o + window] = np.einsum("ij,ij->i", u[lo:hi], u[lo + o : hi + o])

    def backward(g):
        gx = np.zeros_like(x.data)
        for o in range(-window, window + 1):
            lo, hi = max(0, -o), min(L, L - o)
            if lo >= hi:
                continue
            s = out[lo:hi, o + window][:, None]
            gc = g[lo:hi, o + window][:, None]
            ua, ub = u[lo:hi], u[lo + o : hi + o]
            gx[lo:hi] += gc * (ub - s * ua) * inv[lo:hi, None]
            gx[lo + o : hi + o] += gc * (ua - s * ub) * inv[lo + o : hi + o, None]
        return (gx,)

    return _result(out, (x,), backward)


OP_CATALOG = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "conv1d": conv1d,
    "softmax": softmax,
    "layer_norm": layer_norm,
    "gelu": gelu,
    "concat": concat,
    "mean": mean,
    "sum": tsum,
    "squared_error": squared_error,
    "scale_shift": scale_shift,
    "reshape": reshape,
    "transpose": transpose,
    "cosine_window_similarity": cosine_window_similarity,
}


def forward_op(kind: str, inputs, attrs: dict | None = None) -> Tensor:
    """Dispatch an op by name; ``inputs`` positional, ``attrs`` keyword."""
    try:
        fn = OP_CATALOG[kind]
    except KeyError:
        raise ConfigurationError(f"unknown op kind {kind!r}") from None
    return fn(*inputs, **(attrs or {}))


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------


def topological_tape(root: Tensor) -> list[Tensor]:
    """Recorded operations reachable from ``root``, inputs before users."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires-grad ancestor of a scalar loss."""
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.shape}")
    tape = topological_tape(loss)
    _accumulate(loss, np.ones_like(loss.data))
    for node in reversed(tape):
        if node._backward is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._backward(node.grad)):
            if parent.requires_grad and g is not None:
                _accumulate(parent, g)


def zero_grad(tensors) -> None:
    for t in tensors:
        t.grad = None


def grad_check(f, inputs, eps: float = 1e-5) -> float:
    """Worst relative error of analytic vs central-difference gradients.

    ``f`` maps the given tensors to a scalar Tensor and must be pure. The
    relative error denominator is max(|analytic|, |numeric|, 1e-8).
    """
    tensors = [Tensor(np.array(x, dtype=np.float64), requires_grad=True) for x in inputs]
    out = f(*tensors)
    if out.data.size != 1:
        raise ValueError("grad_check requires a scalar-valued function")
    backward(out)
    worst = 0.0
    with no_grad():
        for t in tensors:
            analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
            aflat = analytic.reshape(-1)
            flat = t.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                fp = float(f(*tensors).data)
                flat[i] = orig - eps
                fm = float(f(*tensors).data)
                flat[i] = orig
                numeric = (fp - fm) / (2.0 * eps)
                denom = max(abs(aflat[i]), abs(numeric), 1e-8)
                worst = max(worst, abs(aflat[i] - numeric) / denom)
    return worst
