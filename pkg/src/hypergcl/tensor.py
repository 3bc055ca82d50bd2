"""Dense tensors with taped reverse-mode differentiation.

The op set is deliberately small: exactly what the encoder, the losses and
the diagnostics need.  Every op validates that its output is finite
(NaN/Inf is an error state, not a value), and records itself on the active
tape when one is open.  Tapes are per-thread; a training step opens a fresh
tape, so no graph is retained implicitly between steps.

Shapes are restricted to scalars (), vectors (n,) and matrices (n, m);
broadcasting is limited to the explicit row-wise ops (`rowscale`,
`add_rowvec`, ...).
"""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .linalg import NotSPDError, cholesky, spd_inverse

__all__ = [
    "NonFiniteError",
    "NotSPDError",
    "Tensor",
    "Tape",
    "Gradients",
    "SparseMatrix",
    "backward",
    "finite_diff_check",
]


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


_LOCAL = threading.local()


def _tape_stack() -> list:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Immutable dense array participating in taped differentiation."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=float)
        if arr.ndim > 2:
            raise ValueError(f"tensors are at most 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor initialized with non-finite values")
        self.data = arr

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor({self.data!r})"

    def __float__(self):
        if self.data.size != 1:
            raise ValueError("only size-1 tensors convert to float")
        return float(self.data.reshape(()))

    # arithmetic sugar; scalars mean python floats
    def __add__(self, other):
        return sadd(self, other) if _is_number(other) else add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sadd(self, -other) if _is_number(other) else sub(self, _lift(other))

    def __rsub__(self, other):
        return sadd(neg(self), other) if _is_number(other) else sub(_lift(other), self)

    def __mul__(self, other):
        return smul(self, other) if _is_number(other) else mul(self, _lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return smul(self, 1.0 / other) if _is_number(other) else vdiv(self, _lift(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _lift(other))


def _is_number(x) -> bool:
    return isinstance(x, (int, float, np.integer, np.floating))


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("name", "out", "inputs", "vjp")

    def __init__(self, name, out, inputs, vjp):
        self.name = name
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Ordered record of operations; insertion order is topological order."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        assert stack and stack[-1] is self
        stack.pop()
        return False

    def backward(self, output: Tensor) -> "Gradients":
        return backward(self, output)


class Gradients:
    """Gradient lookup keyed by tensor identity; absent leaves read as zero."""

    def __init__(self, table: dict):
        self._table = table

    def wrt(self, t: Tensor) -> np.ndarray:
        g = self._table.get(id(t))
        if g is None:
            return np.zeros_like(t.data)
        return np.array(g, dtype=float)


def backward(tape: Tape, output: Tensor) -> Gradients:
    """Reverse sweep over the tape, accumulating gradients across fan-out.

    `output` must be a scalar.  Leaves never touched by the computation get
    zero gradient (via the Gradients lookup).
    """
    if output.data.shape != ():
        raise ValueError(f"backward requires a scalar output, got shape {output.data.shape}")
    acc: dict[int, np.ndarray] = {id(output): np.ones(())}
    for node in reversed(tape.nodes):
        g = acc.get(id(node.out))
        if g is None:
            continue
        parts = node.vjp(g)
        for inp, gi in zip(node.inputs, parts):
            if gi is None:
                continue
            prev = acc.get(id(inp))
            acc[id(inp)] = gi if prev is None else prev + gi
    return Gradients(acc)


def _record(name: str, data, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    arr = np.asarray(data, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"op '{name}' produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = arr
    tape = active_tape()
    if tape is not None:
        tape.nodes.append(_Node(name, out, tuple(inputs), vjp))
    return out


def constant(x) -> Tensor:
    return _lift(x)


# ---------------------------------------------------------------- elementwise

def _same_shape(a: Tensor, b: Tensor, opname: str):
    if a.data.shape != b.data.shape:
        raise ValueError(f"{opname}: shape mismatch {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _record("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _record("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product."""
    _same_shape(a, b, "mul")
    return _record("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def vdiv(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "vdiv")
    with np.errstate(divide="ignore", invalid="ignore"):
        y = a.data / b.data
    return _record("vdiv", y, (a, b), lambda g: (g / b.data, -g * y / b.data))


def neg(a: Tensor) -> Tensor:
    return _record("neg", -a.data, (a,), lambda g: (-g,))


def smul(a: Tensor, k: float) -> Tensor:
    k = float(k)
    return _record("smul", a.data * k, (a,), lambda g: (g * k,))


def sadd(a: Tensor, k: float) -> Tensor:
    k = float(k)
    return _record("sadd", a.data + k, (a,), lambda g: (g,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _record("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def artanh(a: Tensor) -> Tensor:
    if np.any(np.abs(a.data) >= 1.0):
        raise ValueError("artanh argument outside (-1, 1)")
    return _record("artanh", np.arctanh(a.data), (a,), lambda g: (g / (1.0 - a.data * a.data),))


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    return _record("exp", y, (a,), lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise ValueError("log argument must be positive")
    return _record("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def vrecip(a: Tensor) -> Tensor:
    y = 1.0 / a.data
    return _record("vrecip", y, (a,), lambda g: (-g * y * y,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes through the interior."""
    inside = (a.data >= lo) & (a.data <= hi)
    return _record("clip", np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def where(mask: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Select by a fixed boolean mask; gradient follows the selected lane."""
    _same_shape(a, b, "where")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.data.shape:
        raise ValueError(f"where: mask shape {mask.shape} vs {a.data.shape}")
    return _record(
        "where",
        np.where(mask, a.data, b.data),
        (a, b),
        lambda g: (g * mask, g * ~mask),
    )


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """Parametric ReLU with a learnable scalar slope."""
    slope = _lift(slope)
    if slope.data.shape != ():
        raise ValueError("prelu slope must be a scalar tensor")
    pos = x.data >= 0.0
    with np.errstate(over="ignore"):
        y = np.where(pos, x.data, float(slope.data) * x.data)

    def vjp(g):
        gx = g * np.where(pos, 1.0, float(slope.data))
        gs = np.array(np.sum(g * np.where(pos, 0.0, x.data)))
        return gx, gs

    return _record("prelu", y, (x, slope), vjp)


# ---------------------------------------------------------------- reductions

def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    return _record("sum", np.sum(a.data), (a,), lambda g: (np.full(shape, float(g)),))


def mean_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    n = a.data.size
    return _record("mean", np.mean(a.data), (a,), lambda g: (np.full(shape, float(g) / n),))


def trace(a: Tensor) -> Tensor:
    if a.data.ndim != 2 or a.data.shape[0] != a.data.shape[1]:
        raise ValueError(f"trace expects a square matrix, got {a.data.shape}")
    n = a.data.shape[0]
    return _record("trace", np.trace(a.data), (a,), lambda g: (float(g) * np.eye(n),))


# ------------------------------------------------------------------ row-wise

def _expect_matrix(a: Tensor, opname: str):
    if a.data.ndim != 2:
        raise ValueError(f"{opname} expects a matrix, got shape {a.data.shape}")


def rowsum(a: Tensor) -> Tensor:
    _expect_matrix(a, "rowsum")
    d = a.data.shape[1]
    return _record(
        "rowsum", np.sum(a.data, axis=1), (a,), lambda g: (np.repeat(g[:, None], d, axis=1),)
    )


def batch_mean(a: Tensor) -> Tensor:
    """Mean over rows: (n, d) -> (d,)."""
    _expect_matrix(a, "batch_mean")
    n = a.data.shape[0]
    return _record(
        "batch_mean", np.mean(a.data, axis=0), (a,), lambda g: (np.tile(g / n, (n, 1)),)
    )


def rownorm2(a: Tensor) -> Tensor:
    """Squared L2 norm of each row: (n, d) -> (n,)."""
    _expect_matrix(a, "rownorm2")
    return _record(
        "rownorm2", np.sum(a.data * a.data, axis=1), (a,), lambda g: (2.0 * a.data * g[:, None],)
    )


def rownorm(a: Tensor) -> Tensor:
    """L2 norm of each row.  Zero rows get subgradient zero."""
    _expect_matrix(a, "rownorm")
    n = np.sqrt(np.sum(a.data * a.data, axis=1))

    def vjp(g):
        safe = np.where(n > 0.0, n, 1.0)
        gx = a.data * (g / safe)[:, None]
        gx[n == 0.0] = 0.0
        return (gx,)

    return _record("rownorm", n, (a,), vjp)


def rowdot(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "rowdot")
    _expect_matrix(a, "rowdot")
    return _record(
        "rowdot",
        np.sum(a.data * b.data, axis=1),
        (a, b),
        lambda g: (b.data * g[:, None], a.data * g[:, None]),
    )


def rowscale(a: Tensor, s: Tensor) -> Tensor:
    """Scale each row of a (n, d) matrix by the matching entry of an (n,) vector."""
    _expect_matrix(a, "rowscale")
    if s.data.shape != (a.data.shape[0],):
        raise ValueError(f"rowscale: scale shape {s.data.shape} vs rows {a.data.shape[0]}")
    return _record(
        "rowscale",
        a.data * s.data[:, None],
        (a, s),
        lambda g: (g * s.data[:, None], np.sum(g * a.data, axis=1)),
    )


def add_rowvec(a: Tensor, v: Tensor) -> Tensor:
    _expect_matrix(a, "add_rowvec")
    if v.data.shape != (a.data.shape[1],):
        raise ValueError(f"add_rowvec: vector shape {v.data.shape} vs cols {a.data.shape[1]}")
    return _record("add_rowvec", a.data + v.data, (a, v), lambda g: (g, np.sum(g, axis=0)))


def sub_rowvec(a: Tensor, v: Tensor) -> Tensor:
    _expect_matrix(a, "sub_rowvec")
    if v.data.shape != (a.data.shape[1],):
        raise ValueError(f"sub_rowvec: vector shape {v.data.shape} vs cols {a.data.shape[1]}")
    return _record("sub_rowvec", a.data - v.data, (a, v), lambda g: (g, -np.sum(g, axis=0)))


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows by integer index; backward scatter-adds."""
    _expect_matrix(a, "take_rows")
    idx = np.asarray(idx, dtype=int)
    if idx.ndim != 1 or np.any(idx < 0) or np.any(idx >= a.data.shape[0]):
        raise ValueError("take_rows: index out of range")
    shape = a.data.shape

    def vjp(g):
        z = np.zeros(shape)
        np.add.at(z, idx, g)
        return (z,)

    return _record("take_rows", a.data[idx], (a,), vjp)


def cap_rownorms(a: Tensor, max_norm: float) -> Tensor:
    """Rescale any row whose L2 norm is >= max_norm down to exactly max_norm.

    Rows strictly below the cap pass through unchanged.  On the switch
    boundary the rescale branch's gradient is used (subgradient choice;
    the two forward values coincide there).
    """
    _expect_matrix(a, "cap_rownorms")
    t = float(max_norm)
    if t <= 0.0:
        raise ValueError("cap_rownorms: max_norm must be positive")
    n = np.sqrt(np.sum(a.data * a.data, axis=1))
    mask = n >= t
    scale = np.ones_like(n)
    scale[mask] = t / n[mask]
    x = a.data

    def vjp(g):
        gx = g * scale[:, None]
        idx = np.where(mask)[0]
        if idx.size:
            xm = x[idx]
            gm = g[idx]
            nm = n[idx]
            xg = np.sum(xm * gm, axis=1)
            gx[idx] = (t / nm)[:, None] * (gm - xm * (xg / (nm * nm))[:, None])
        return (gx,)

    return _record("cap_rownorms", x * scale[:, None], (a,), vjp)


# -------------------------------------------------------------------- matrix

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects two matrices")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul: inner dims {a.data.shape} @ {b.data.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        y = a.data @ b.data
    return _record("matmul", y, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def transpose(a: Tensor) -> Tensor:
    _expect_matrix(a, "transpose")
    return _record("transpose", a.data.T, (a,), lambda g: (g.T,))


def outer(u: Tensor, v: Tensor) -> Tensor:
    if u.data.ndim != 1 or v.data.ndim != 1:
        raise ValueError("outer expects two vectors")
    return _record(
        "outer", np.outer(u.data, v.data), (u, v), lambda g: (g @ v.data, u.data @ g)
    )


def dot(u: Tensor, v: Tensor) -> Tensor:
    if u.data.shape != v.data.shape or u.data.ndim != 1:
        raise ValueError("dot expects two vectors of equal length")
    return _record("dot", u.data @ v.data, (u, v), lambda g: (float(g) * v.data, float(g) * u.data))


def add_diag(a: Tensor, k: float) -> Tensor:
    """a + k * I for a square matrix; k is a fixed constant."""
    if a.data.ndim != 2 or a.data.shape[0] != a.data.shape[1]:
        raise ValueError("add_diag expects a square matrix")
    return _record("add_diag", a.data + float(k) * np.eye(a.data.shape[0]), (a,), lambda g: (g,))


def logdet(a: Tensor) -> Tensor:
    """log det of an SPD matrix via Cholesky.

    The symmetric part of the input is factored; the gradient is the
    symmetrized inverse.  Raises NotSPDError for non-PD input; the jitter
    policy belongs to the caller.
    """
    if a.data.ndim != 2 or a.data.shape[0] != a.data.shape[1]:
        raise ValueError("logdet expects a square matrix")
    sym = (a.data + a.data.T) / 2.0
    L = cholesky(sym)
    val = 2.0 * np.sum(np.log(np.diag(L)))
    inv = spd_inverse(sym)
    return _record("logdet", val, (a,), lambda g: (float(g) * inv,))


# -------------------------------------------------------------------- sparse

class SparseMatrix:
    """COO sparse matrix treated as constant data (no gradient to entries)."""

    __slots__ = ("shape", "rows", "cols", "vals")

    def __init__(self, shape, rows, cols, vals):
        self.shape = (int(shape[0]), int(shape[1]))
        self.rows = np.asarray(rows, dtype=int)
        self.cols = np.asarray(cols, dtype=int)
        self.vals = np.asarray(vals, dtype=float)
        if not (self.rows.shape == self.cols.shape == self.vals.shape):
            raise ValueError("SparseMatrix: rows/cols/vals must have equal length")
        if self.rows.size and (self.rows.max() >= self.shape[0] or self.cols.max() >= self.shape[1]):
            raise ValueError("SparseMatrix: index out of range")

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.shape)
        np.add.at(dense, (self.rows, self.cols), self.vals)
        return dense


def spmm(s: SparseMatrix, x: Tensor) -> Tensor:
    """Sparse @ dense.  Gradient flows to the dense side only."""
    _expect_matrix(x, "spmm")
    if s.shape[1] != x.data.shape[0]:
        raise ValueError(f"spmm: inner dims {s.shape} @ {x.data.shape}")
    y = np.zeros((s.shape[0], x.data.shape[1]))
    np.add.at(y, s.rows, s.vals[:, None] * x.data[s.cols])

    def vjp(g):
        z = np.zeros_like(x.data)
        np.add.at(z, s.cols, s.vals[:, None] * g[s.rows])
        return (z,)

    return _record("spmm", y, (x,), vjp)


# ------------------------------------------------------------- finite diffs

def finite_diff_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5) -> float:
    """Max relative error between taped gradient and central differences.

    `f` maps one tensor to a scalar tensor.  The analytic gradient is taken
    on a fresh tape; the numeric one uses per-coordinate central steps of
    h * (1 + |x_i|).  Returns max_i |analytic_i - numeric_i| / (|analytic_i| + 1e-8).
    """
    leaf = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=float))
    with Tape() as tape:
        out = f(leaf)
    if out.data.shape != ():
        raise ValueError("finite_diff_check requires a scalar-valued function")
    analytic = tape.backward(out).wrt(leaf)

    flat = leaf.data.ravel()
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        step = h * (1.0 + abs(flat[i]))
        hi = flat.copy()
        hi[i] += step
        lo = flat.copy()
        lo[i] -= step
        f_hi = float(f(Tensor(hi.reshape(leaf.data.shape))))
        f_lo = float(f(Tensor(lo.reshape(leaf.data.shape))))
        numeric[i] = (f_hi - f_lo) / (2.0 * step)
    err = np.abs(analytic.ravel() - numeric) / (np.abs(analytic.ravel()) + 1e-8)
    return float(np.max(err)) if err.size else 0.0
