"""Reverse-mode automatic differentiation over numpy arrays.

A Tape records primitive operations as they execute; backward() replays the
record in reverse, accumulating exact vector-Jacobian products into each
leaf. All values are float64 ndarrays.

Every op in this module accepts either Var nodes or plain arrays/scalars.
When no argument is a Var the op computes the raw numpy result and records
nothing, so the same model code runs both taped (training) and untaped
(fast evaluation) and produces bit-identical values in either mode.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, UsageError


class Var:
    """A node on a tape: a float64 array plus its position in the record."""

    __slots__ = ("value", "tape", "index")

    def __init__(self, value: np.ndarray, tape: "Tape", index: int):
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return self.value.shape

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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, index={self.index})"


class Tape:
    """Records primitives for one backward pass. Not reusable across passes
    by different roots is fine; the record is append-only and replay is
    read-only, so several backward() calls on the same tape are allowed."""

    __slots__ = ("_parents", "_vjps")

    def __init__(self):
        self._parents = []
        self._vjps = []

    def __len__(self):
        return len(self._parents)

    def leaf(self, value) -> Var:
        """Register a trainable leaf (no parents)."""
        arr = np.asarray(value, dtype=np.float64)
        return self._push(arr, (), None)

    def _push(self, value, parents, vjp) -> Var:
        idx = len(self._parents)
        self._parents.append(parents)
        self._vjps.append(vjp)
        return Var(value, self, idx)


class Grads:
    """Result of backward(): gradient lookup per Var."""

    __slots__ = ("_tape", "_grads")

    def __init__(self, tape: Tape, grads: list):
        self._tape = tape
        self._grads = grads

    def wrt(self, var: Var) -> np.ndarray:
        if var.tape is not self._tape:
            raise UsageError("gradient requested for a Var from a different tape")
        g = self._grads[var.index]
        if g is None:
            return np.zeros_like(var.value)
        return g


def backward(root: Var) -> Grads:
    """Accumulate d(root)/d(leaf) for every node feeding a scalar root."""
    if not isinstance(root, Var):
        raise UsageError("backward() needs a Var root")
    if np.asarray(root.value).size != 1:
        raise UsageError(f"backward() root must be scalar, got shape {root.value.shape}")
    tape = root.tape
    grads: list = [None] * len(tape)
    grads[root.index] = np.ones_like(root.value)
    for idx in range(root.index, -1, -1):
        g = grads[idx]
        if g is None:
            continue
        vjp = tape._vjps[idx]
        if vjp is None:
            continue
        partials = vjp(g)
        for p_idx, pg in zip(tape._parents[idx], partials):
            if pg is None:
                continue
            if grads[p_idx] is None:
                grads[p_idx] = pg
            else:
                grads[p_idx] = grads[p_idx] + pg
    return Grads(tape, grads)


# ---------------------------------------------------------------------------
# dispatch helpers

def value_of(x) -> np.ndarray:
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _tape_of(*args):
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise UsageError("cannot mix Vars from different tapes")
    return tape


def _record(tape, value, var_parents, var_vjps):
    """var_parents: the Var args only; var_vjps: matching list of g->grad."""
    parents = tuple(v.index for v in var_parents)

    def vjp(g):
        return tuple(fn(g) for fn in var_vjps)

    return tape._push(value, parents, vjp)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, fwd, dga, dgb):
    av, bv = value_of(a), value_of(b)
    out = fwd(av, bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    parents, vjps = [], []
    if isinstance(a, Var):
        parents.append(a)
        vjps.append(lambda g: _unbroadcast(dga(g, av, bv), av.shape))
    if isinstance(b, Var):
        parents.append(b)
        vjps.append(lambda g: _unbroadcast(dgb(g, av, bv), bv.shape))
    return _record(tape, out, parents, vjps)


def _unary(x, fwd, dgx):
    xv = value_of(x)
    out = fwd(xv)
    if not isinstance(x, Var):
        return out
    return _record(x.tape, out, [x], [lambda g: dgx(g, xv, out)])


# ---------------------------------------------------------------------------
# arithmetic

def add(a, b):
    return _binary(a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary(a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(a, b, lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x)


def neg(x):
    return _unary(x, lambda v: -v, lambda g, v, o: -g)


def matmul(a, b):
    av, bv = value_of(a), value_of(b)
    if av.ndim != 2 or bv.ndim != 2:
        raise ConfigurationError("matmul expects 2-d operands")
    out = av @ bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    parents, vjps = [], []
    if isinstance(a, Var):
        parents.append(a)
        vjps.append(lambda g: g @ bv.T)
    if isinstance(b, Var):
        parents.append(b)
        vjps.append(lambda g: av.T @ g)
    return _record(tape, out, parents, vjps)


# ---------------------------------------------------------------------------
# elementwise nonlinearities

def tanh(x):
    return _unary(x, np.tanh, lambda g, v, o: g * (1.0 - o * o))


def relu(x):
    return _unary(x, lambda v: np.maximum(v, 0.0), lambda g, v, o: g * (v > 0.0))


def _sigmoid_np(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x):
    return _unary(x, _sigmoid_np, lambda g, v, o: g * o * (1.0 - o))


def softplus(x):
    return _unary(x, lambda v: np.logaddexp(0.0, v), lambda g, v, o: g * _sigmoid_np(v))


def exp(x):
    return _unary(x, np.exp, lambda g, v, o: g * o)


def log(x):
    return _unary(x, np.log, lambda g, v, o: g / v)


def clamp_min(x, floor: float):
    """max(x, floor); gradient is zero on the clamped side."""
    return _unary(x, lambda v: np.maximum(v, floor), lambda g, v, o: g * (v > floor))


def clip(x, lo: float, hi: float):
    """Clamp into [lo, hi]; gradient passes only strictly inside."""
    return _unary(
        x,
        lambda v: np.clip(v, lo, hi),
        lambda g, v, o: g * ((v > lo) & (v < hi)),
    )


# ---------------------------------------------------------------------------
# shape and reduction ops

def reshape(x, shape):
    xv = value_of(x)
    out = xv.reshape(shape)
    if not isinstance(x, Var):
        return out
    return _record(x.tape, out, [x], [lambda g: g.reshape(xv.shape)])


def repeat_rows(x, k: int):
    """Tile each row of a 2-d array k times: (n, d) -> (n*k, d)."""
    xv = value_of(x)
    if xv.ndim != 2:
        raise ConfigurationError("repeat_rows expects a 2-d array")
    out = np.repeat(xv, k, axis=0)
    if not isinstance(x, Var):
        return out
    n, d = xv.shape
    return _record(x.tape, out, [x], [lambda g: g.reshape(n, k, d).sum(axis=1)])


def concat_cols(parts):
    """Concatenate 2-d blocks along axis 1."""
    vals = [value_of(p) for p in parts]
    for v in vals:
        if v.ndim != 2:
            raise ConfigurationError("concat_cols expects 2-d blocks")
    out = np.concatenate(vals, axis=1)
    tape = _tape_of(*parts)
    if tape is None:
        return out
    offsets = np.cumsum([0] + [v.shape[1] for v in vals])
    parents, vjps = [], []
    for i, p in enumerate(parts):
        if isinstance(p, Var):
            lo, hi = offsets[i], offsets[i + 1]
            parents.append(p)
            vjps.append(lambda g, lo=lo, hi=hi: g[:, lo:hi])
    return _record(tape, out, parents, vjps)


def reduce_sum(x, axis=None, keepdims: bool = False):
    xv = value_of(x)
    out = xv.sum(axis=axis, keepdims=keepdims)
    if not isinstance(x, Var):
        return out

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, xv.shape).copy()
        ge = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(ge, xv.shape).copy()

    return _record(x.tape, out, [x], [vjp])


def gather_rows(x, idx):
    """out[i] = x[i, idx[i]] for a 2-d x and integer idx of length n."""
    xv = value_of(x)
    ii = np.asarray(idx)
    if xv.ndim != 2 or ii.ndim != 1 or ii.shape[0] != xv.shape[0]:
        raise ConfigurationError("gather_rows expects x (n, c) and idx (n,)")
    rows = np.arange(xv.shape[0])
    out = xv[rows, ii]
    if not isinstance(x, Var):
        return out

    def vjp(g):
        z = np.zeros_like(xv)
        z[rows, ii] = g
        return z

    return _record(x.tape, out, [x], [vjp])


def logsumexp(x, axis: int = -1):
    """log(sum(exp(x))) along `axis`, shift-invariant."""
    xv = value_of(x)
    m = np.max(xv, axis=axis, keepdims=True)
    s = np.exp(xv - m)
    t = s.sum(axis=axis, keepdims=True)
    out = np.squeeze(m + np.log(t), axis=axis)
    if not isinstance(x, Var):
        return out

    def vjp(g):
        return np.expand_dims(g, axis) * (s / t)

    return _record(x.tape, out, [x], [vjp])


def log_softmax(x, axis: int = -1):
    xv = value_of(x)
    m = np.max(xv, axis=axis, keepdims=True)
    s = xv - m
    lse = np.log(np.exp(s).sum(axis=axis, keepdims=True))
    out = s - lse
    if not isinstance(x, Var):
        return out

    def vjp(g):
        return g - np.exp(out) * g.sum(axis=axis, keepdims=True)

    return _record(x.tape, out, [x], [vjp])


# ---------------------------------------------------------------------------
# fused density op

_LOG_2PI = float(np.log(2.0 * np.pi))


def gaussian_logpdf(x, mean, log_var):
    """Diagonal-Gaussian log density, summed over the last axis.

    sum_d [ -0.5*log(2*pi) - 0.5*log_var_d - (x_d - mean_d)^2 / (2*exp(log_var_d)) ]

    Any of x, mean, log_var may be a Var; shapes broadcast.
    """
    xv, mv, lv = value_of(x), value_of(mean), value_of(log_var)
    z = xv - mv
    inv = np.exp(-lv)
    ll = -0.5 * (_LOG_2PI + lv + z * z * inv)
    out = ll.sum(axis=-1)
    tape = _tape_of(x, mean, log_var)
    if tape is None:
        return out
    parents, vjps = [], []
    if isinstance(x, Var):
        parents.append(x)
        vjps.append(lambda g: _unbroadcast(np.expand_dims(g, -1) * (-z * inv), xv.shape))
    if isinstance(mean, Var):
        parents.append(mean)
        vjps.append(lambda g: _unbroadcast(np.expand_dims(g, -1) * (z * inv), mv.shape))
    if isinstance(log_var, Var):
        parents.append(log_var)
        vjps.append(
            lambda g: _unbroadcast(np.expand_dims(g, -1) * (-0.5 + 0.5 * z * z * inv), lv.shape)
        )
    return _record(tape, out, parents, vjps)
