"""Dense 2-D tensors with a reverse-mode gradient tape.

Everything the fusion network and the losses need is expressed through the
fixed primitive set below. Each primitive knows its own vector-Jacobian
product, so the backward pass is a single reverse sweep over the tape.
Tensors are float64 internally and immutable after construction; a tape is
owned by exactly one training step.

Masked attention uses a large negative fill value rather than -inf so that
tensors stay finite while exp() still underflows to exactly 0.0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import ContractError, ShapeError

MASK_FILL = -1e300  # exp(MASK_FILL - rowmax) underflows to exactly 0.0


class Tensor2:
    """Immutable row-major 2-D tensor, float64."""

    __slots__ = ("data",)

    def __init__(self, data, _checked: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"Tensor2 requires 2-D data, got ndim={arr.ndim}")
        if not _checked and not np.all(np.isfinite(arr)):
            raise ContractError("Tensor2 data contains non-finite values")
        if arr.flags.writeable:
            arr = arr.copy()
            arr.flags.writeable = False
        self.data = arr

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ContractError(f"item() requires a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Tensor2({self.rows}x{self.cols})"


def _wrap(arr: np.ndarray) -> Tensor2:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    t = Tensor2.__new__(Tensor2)
    t.data = arr
    return t


def tensor(data) -> Tensor2:
    return Tensor2(data)


def zeros(rows: int, cols: int) -> Tensor2:
    return _wrap(np.zeros((rows, cols)))


def full(rows: int, cols: int, value: float) -> Tensor2:
    return _wrap(np.full((rows, cols), float(value)))


# ---------------------------------------------------------------------------
# Gradient tape


@dataclass
class _Node:
    out: Tensor2
    inputs: tuple[Tensor2, ...]
    vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


class GradTape:
    """Records primitives in execution order (hence topological order)."""

    _active: list["GradTape"] = []  # module-level stack, single-threaded use

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "GradTape":
        GradTape._active.append(self)
        return self

    def __exit__(self, *exc) -> None:
        GradTape._active.pop()

    @classmethod
    def current(cls) -> "GradTape | None":
        return cls._active[-1] if cls._active else None


def _record(out, inputs, vjp) -> None:
    tape = GradTape.current()
    if tape is not None:
        tape.nodes.append(_Node(out, inputs, vjp))


def backward(tape: GradTape, loss: Tensor2) -> dict[int, np.ndarray]:
    """Reverse sweep; returns gradients keyed by id(tensor) for every node
    and leaf reached from the loss."""
    if loss.shape != (1, 1):
        raise ContractError(f"loss must be scalar (1x1), got {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in reversed(tape.nodes):
        g_out = grads.get(id(node.out))
        if g_out is None:
            continue
        for inp, g_in in zip(node.inputs, node.vjp(g_out)):
            if g_in is None:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + g_in
            else:
                grads[key] = g_in
    return grads


def grad_of(grads: Mapping[int, np.ndarray], t: Tensor2) -> np.ndarray:
    g = grads.get(id(t))
    if g is None:
        return np.zeros(t.shape)
    return g


# ---------------------------------------------------------------------------
# Primitives


def matmul(a: Tensor2, b: Tensor2) -> Tensor2:
    if a.cols != b.rows:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = _wrap(a.data @ b.data)
    _record(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))
    return out


def transpose(a: Tensor2) -> Tensor2:
    out = _wrap(a.data.T)
    _record(out, (a,), lambda g: (g.T,))
    return out


def _same_shape(a: Tensor2, b: Tensor2, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op} shape mismatch: {a.shape} vs {b.shape}")


def add(a: Tensor2, b: Tensor2) -> Tensor2:
    _same_shape(a, b, "add")
    out = _wrap(a.data + b.data)
    _record(out, (a, b), lambda g: (g, g))
    return out


def sub(a: Tensor2, b: Tensor2) -> Tensor2:
    _same_shape(a, b, "sub")
    out = _wrap(a.data - b.data)
    _record(out, (a, b), lambda g: (g, -g))
    return out


def mul(a: Tensor2, b: Tensor2) -> Tensor2:
    _same_shape(a, b, "mul")
    out = _wrap(a.data * b.data)
    _record(out, (a, b), lambda g: (g * b.data, g * a.data))
    return out


def div(a: Tensor2, b: Tensor2) -> Tensor2:
    _same_shape(a, b, "div")
    out = _wrap(a.data / b.data)
    _record(out, (a, b), lambda g: (g / b.data, -g * a.data / (b.data * b.data)))
    return out


def scale(a: Tensor2, c: float) -> Tensor2:
    c = float(c)
    out = _wrap(a.data * c)
    _record(out, (a,), lambda g: (g * c,))
    return out


def shift(a: Tensor2, c: float) -> Tensor2:
    """Add a scalar constant elementwise."""
    out = _wrap(a.data + float(c))
    _record(out, (a,), lambda g: (g,))
    return out


def add_bias(a: Tensor2, b: Tensor2) -> Tensor2:
    """a + b with b a 1 x cols row vector broadcast over rows."""
    if b.rows != 1 or b.cols != a.cols:
        raise ShapeError(f"add_bias expects 1x{a.cols} bias, got {b.shape}")
    out = _wrap(a.data + b.data)
    _record(out, (a, b), lambda g: (g, g.sum(axis=0, keepdims=True)))
    return out


def mul_bias(a: Tensor2, b: Tensor2) -> Tensor2:
    """a * b elementwise with b a 1 x cols row vector broadcast over rows."""
    if b.rows != 1 or b.cols != a.cols:
        raise ShapeError(f"mul_bias expects 1x{a.cols} gain, got {b.shape}")
    out = _wrap(a.data * b.data)
    _record(out, (a, b), lambda g: (g * b.data, (g * a.data).sum(axis=0, keepdims=True)))
    return out


def sigmoid(a: Tensor2) -> Tensor2:
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = _wrap(y)
    _record(out, (a,), lambda g: (g * y * (1.0 - y),))
    return out


def tanh(a: Tensor2) -> Tensor2:
    y = np.tanh(a.data)
    out = _wrap(y)
    _record(out, (a,), lambda g: (g * (1.0 - y * y),))
    return out


def relu(a: Tensor2) -> Tensor2:
    y = np.maximum(a.data, 0.0)
    out = _wrap(y)
    _record(out, (a,), lambda g: (g * (a.data > 0.0),))
    return out


def softplus(a: Tensor2) -> Tensor2:
    y = np.logaddexp(0.0, a.data)
    out = _wrap(y)
    sig = np.empty_like(a.data)
    x = a.data
    pos = x >= 0
    sig[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    sig[~pos] = ex / (1.0 + ex)
    _record(out, (a,), lambda g: (g * sig,))
    return out


def log(a: Tensor2) -> Tensor2:
    if np.any(a.data <= 0.0):
        raise ContractError("log requires strictly positive input")
    out = _wrap(np.log(a.data))
    _record(out, (a,), lambda g: (g / a.data,))
    return out


def power(a: Tensor2, p: float) -> Tensor2:
    """Elementwise a**p for constant p; requires a > 0 unless p is a
    nonnegative integer."""
    p = float(p)
    if (p != int(p) or p < 0) and np.any(a.data <= 0.0):
        raise ContractError("power with non-integer exponent requires positive input")
    y = a.data**p
    out = _wrap(y)
    _record(out, (a,), lambda g: (g * p * a.data ** (p - 1.0) if p != 0 else np.zeros_like(g),))
    return out


def clip(a: Tensor2, lo: float, hi: float) -> Tensor2:
    y = np.clip(a.data, lo, hi)
    inside = (a.data > lo) & (a.data < hi)
    out = _wrap(y)
    _record(out, (a,), lambda g: (g * inside,))
    return out


def minimum(a: Tensor2, b: Tensor2) -> Tensor2:
    _same_shape(a, b, "minimum")
    out = _wrap(np.minimum(a.data, b.data))
    wa = np.where(a.data < b.data, 1.0, np.where(a.data == b.data, 0.5, 0.0))
    _record(out, (a, b), lambda g: (g * wa, g * (1.0 - wa)))
    return out


def maximum(a: Tensor2, b: Tensor2) -> Tensor2:
    _same_shape(a, b, "maximum")
    out = _wrap(np.maximum(a.data, b.data))
    wa = np.where(a.data > b.data, 1.0, np.where(a.data == b.data, 0.5, 0.0))
    _record(out, (a, b), lambda g: (g * wa, g * (1.0 - wa)))
    return out


def softmax_rows(a: Tensor2) -> Tensor2:
    x = a.data - a.data.max(axis=1, keepdims=True)
    ex = np.exp(x)
    y = ex / ex.sum(axis=1, keepdims=True)
    out = _wrap(y)

    def vjp(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return (y * (g - dot),)

    _record(out, (a,), vjp)
    return out


def masked_fill(a: Tensor2, mask: np.ndarray, value: float = MASK_FILL) -> Tensor2:
    """Keep entries where mask is True, set the rest to `value` (a constant;
    no gradient flows through filled positions)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ShapeError(f"mask shape {mask.shape} != tensor shape {a.shape}")
    out = _wrap(np.where(mask, a.data, value))
    _record(out, (a,), lambda g: (g * mask,))
    return out


def layer_norm_rows(a: Tensor2, eps: float = 1e-5) -> Tensor2:
    """Per-row standardization (no affine; compose with mul_bias/add_bias)."""
    mu = a.data.mean(axis=1, keepdims=True)
    var = a.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mu) * inv
    out = _wrap(xhat)

    def vjp(g):
        gm = g.mean(axis=1, keepdims=True)
        gx = (g * xhat).mean(axis=1, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    _record(out, (a,), vjp)
    return out


def sum_all(a: Tensor2) -> Tensor2:
    out = _wrap(np.array([[a.data.sum()]]))
    _record(out, (a,), lambda g: (np.full(a.shape, g[0, 0]),))
    return out


def mean_all(a: Tensor2) -> Tensor2:
    n = a.data.size
    out = _wrap(np.array([[a.data.mean()]]))
    _record(out, (a,), lambda g: (np.full(a.shape, g[0, 0] / n),))
    return out


def concat_rows(a: Tensor2, b: Tensor2) -> Tensor2:
    if a.cols != b.cols:
        raise ShapeError(f"concat_rows column mismatch: {a.shape} vs {b.shape}")
    out = _wrap(np.vstack([a.data, b.data]))
    _record(out, (a, b), lambda g: (g[: a.rows], g[a.rows :]))
    return out


def concat_cols(a: Tensor2, b: Tensor2) -> Tensor2:
    if a.rows != b.rows:
        raise ShapeError(f"concat_cols row mismatch: {a.shape} vs {b.shape}")
    out = _wrap(np.hstack([a.data, b.data]))
    _record(out, (a, b), lambda g: (g[:, : a.cols], g[:, a.cols :]))
    return out


def slice_rows(a: Tensor2, start: int, stop: int) -> Tensor2:
    if not (0 <= start <= stop <= a.rows):
        raise ShapeError(f"slice_rows [{start}:{stop}] out of range for {a.rows} rows")
    out = _wrap(a.data[start:stop].copy())

    def vjp(g):
        full_g = np.zeros(a.shape)
        full_g[start:stop] = g
        return (full_g,)

    _record(out, (a,), vjp)
    return out


def slice_cols(a: Tensor2, start: int, stop: int) -> Tensor2:
    if not (0 <= start <= stop <= a.cols):
        raise ShapeError(f"slice_cols [{start}:{stop}] out of range for {a.cols} cols")
    out = _wrap(a.data[:, start:stop].copy())

    def vjp(g):
        full_g = np.zeros(a.shape)
        full_g[:, start:stop] = g
        return (full_g,)

    _record(out, (a,), vjp)
    return out


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Optimizer state for a named parameter collection."""

    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor2],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> dict[str, Tensor2]:
    """One Adam update with bias correction. Mutates `state`, returns the
    updated parameter dict (tensors are immutable, so new objects)."""
    missing = [k for k in params if k not in grads]
    if missing:
        raise ContractError(f"missing gradients for parameters: {missing[:5]}")
    state.t += 1
    t = state.t
    out: dict[str, Tensor2] = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != param shape {p.shape} for {name}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros(p.shape)
            v = np.zeros(p.shape)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        out[name] = _wrap(p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Global-norm gradient clipping."""
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = np.sqrt(total)
    if norm <= max_norm or norm == 0.0:
        return grads
    factor = max_norm / norm
    return {k: g * factor for k, g in grads.items()}


def check_finite(arrs: Iterable[np.ndarray], context: str) -> None:
    from .errors import NumericalError

    for a in arrs:
        if not np.all(np.isfinite(a)):
            raise NumericalError(f"non-finite values encountered in {context}")
