"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tape records primitive operations in creation order (which is
automatically a topological order: an input must exist before the op
that consumes it). backward() walks the record once in reverse,
accumulating adjoints. Tapes are cheap and meant to be rebuilt for
every training step; they are single-threaded by design.

The differentiable primitive set is closed: matmul (with transpose
flags), add, mul, relu, log, exp, mean, reduce_sum, sumsq,
softmax_rows, concat_rows, dropout (with an externally supplied frozen
mask) and grad_reverse. Everything else in the package is composed
from these.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tape",
    "Tensor",
    "add",
    "sub",
    "neg",
    "mul",
    "matmul",
    "relu",
    "log",
    "exp",
    "mean",
    "reduce_sum",
    "sumsq",
    "softmax_rows",
    "concat_rows",
    "dropout",
    "grad_reverse",
    "clamp_min",
    "absolute",
]


def _as_f64(x):
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    """A float64 array bound to a tape node."""

    __slots__ = ("value", "tape", "_idx")

    def __init__(self, value: np.ndarray, tape: "Tape", idx: int):
        self.value = value
        self.tape = tape
        self._idx = idx

    @property
    def shape(self):
        return self.value.shape

    @property
    def grad(self) -> np.ndarray:
        """Adjoint of this node after tape.backward(); zeros if unreached."""
        g = self.tape._adjoints
        if g is None:
            raise RuntimeError("grad requested before backward() ran")
        a = g[self._idx]
        if a is None:
            return np.zeros_like(self.value)
        return a

    def item(self) -> float:
        return float(self.value)

    # operator sugar over the primitive set
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, tape_idx={self._idx})"


class Tape:
    """Ordered record of primitive ops plus per-node adjoint buffers."""

    def __init__(self):
        self._parents = []  # tuple of parent indices per node
        self._pullbacks = []  # callable(adjoint) -> tuple of parent adjoints
        self._adjoints = None

    def __len__(self):
        return len(self._parents)

    def _record(self, value, parents, pullback) -> Tensor:
        if not np.isfinite(value).all():
            # surfacing non-finite values at the op that made them beats
            # debugging a NaN loss three modules later
            op = pullback.__name__.removesuffix("_pull") if pullback else "leaf"
            raise FloatingPointError(f"non-finite value produced by {op}")
        idx = len(self._parents)
        self._parents.append(parents)
        self._pullbacks.append(pullback)
        return Tensor(value, self, idx)

    def leaf(self, array) -> Tensor:
        """A differentiable input (parameter or data we want grads for)."""
        return self._record(_as_f64(array), (), None)

    def constant(self, array) -> Tensor:
        """Same as leaf; named for readability at call sites."""
        return self.leaf(array)

    def backward(self, out: Tensor) -> None:
        """Seed the scalar output with adjoint 1 and sweep the record."""
        if out.tape is not self:
            raise ValueError("backward: output belongs to a different tape")
        if out.value.size != 1:
            raise ValueError(
                f"backward: output must be a scalar, got shape {out.value.shape}"
            )
        adj = [None] * len(self._parents)
        adj[out._idx] = np.ones_like(out.value)
        for i in range(out._idx, -1, -1):
            g = adj[i]
            if g is None:
                continue
            pullback = self._pullbacks[i]
            if pullback is None:
                continue
            contributions = pullback(g)
            for p, c in zip(self._parents[i], contributions):
                if c is None:
                    continue
                if adj[p] is None:
                    # adjoints are never mutated in place, so aliasing a
                    # pullback's output (possibly a view) is safe
                    adj[p] = c
                else:
                    adj[p] = adj[p] + c
        self._adjoints = adj


def _tape_of(*args) -> Tape:
    tape = None
    for a in args:
        if isinstance(a, Tensor):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise ValueError("operands belong to different tapes")
    if tape is None:
        raise ValueError("at least one operand must be a Tensor")
    return tape


def _lift(tape: Tape, x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return tape.constant(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum an adjoint over the axes that broadcasting expanded."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    try:
        value = a.value + b.value
    except ValueError:
        raise ValueError(f"add: shapes {a.shape} and {b.shape} do not broadcast")
    ash, bsh = a.value.shape, b.value.shape

    def add_pull(g):
        return _unbroadcast(g, ash), _unbroadcast(g, bsh)

    return tape._record(value, (a._idx, b._idx), add_pull)


def neg(a) -> Tensor:
    return mul(a, -1.0)


def sub(a, b) -> Tensor:
    return add(a, neg(_lift(_tape_of(a, b), b)))


def mul(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    try:
        value = a.value * b.value
    except ValueError:
        raise ValueError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")
    av, bv = a.value, b.value

    def mul_pull(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return tape._record(value, (a._idx, b._idx), mul_pull)


def matmul(a, b, transpose_a: bool = False, transpose_b: bool = False) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ValueError(
            f"matmul: expects 2-D operands, got {a.shape} and {b.shape}"
        )
    A = a.value.T if transpose_a else a.value
    B = b.value.T if transpose_b else b.value
    if A.shape[1] != B.shape[0]:
        raise ValueError(
            f"matmul: inner dimensions {A.shape} x {B.shape} do not agree"
        )
    value = A @ B

    def matmul_pull(g):
        ga = g @ B.T
        if transpose_a:
            ga = ga.T
        gb = A.T @ g
        if transpose_b:
            gb = gb.T
        return ga, gb

    return tape._record(value, (a._idx, b._idx), matmul_pull)


def relu(a) -> Tensor:
    tape = _tape_of(a)
    mask = a.value > 0

    def relu_pull(g):
        return (g * mask,)

    return tape._record(np.where(mask, a.value, 0.0), (a._idx,), relu_pull)


def log(a) -> Tensor:
    tape = _tape_of(a)
    av = a.value

    def log_pull(g):
        return (g / av,)

    return tape._record(np.log(av), (a._idx,), log_pull)


def exp(a) -> Tensor:
    tape = _tape_of(a)
    value = np.exp(a.value)

    def exp_pull(g):
        return (g * value,)

    return tape._record(value, (a._idx,), exp_pull)


def mean(a) -> Tensor:
    tape = _tape_of(a)
    n = a.value.size
    if n == 0:
        raise ValueError("mean: empty tensor")
    shape = a.value.shape

    def mean_pull(g):
        return (np.full(shape, float(g) / n),)

    return tape._record(np.asarray(a.value.mean()), (a._idx,), mean_pull)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    tape = _tape_of(a)
    shape = a.value.shape
    value = a.value.sum(axis=axis, keepdims=keepdims)

    def sum_pull(g):
        if axis is None:
            return (np.full(shape, float(g)),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, shape).copy(),)

    return tape._record(np.asarray(value), (a._idx,), sum_pull)


def sumsq(a) -> Tensor:
    """Squared L2 norm of all entries, as a scalar."""
    tape = _tape_of(a)
    av = a.value

    def sumsq_pull(g):
        return (2.0 * float(g) * av,)

    return tape._record(np.asarray((av * av).sum()), (a._idx,), sumsq_pull)


def softmax_rows(a) -> Tensor:
    """Row-wise softmax with per-row max shift for overflow safety."""
    tape = _tape_of(a)
    x = a.value
    if x.ndim != 2 or x.size == 0:
        raise ValueError(f"softmax_rows: expects a non-empty 2-D matrix, got {x.shape}")
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    value = e / e.sum(axis=1, keepdims=True)

    def softmax_pull(g):
        dot = (g * value).sum(axis=1, keepdims=True)
        return ((g - dot) * value,)

    return tape._record(value, (a._idx,), softmax_pull)


def concat_rows(tensors) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat_rows: nothing to concatenate")
    tape = _tape_of(*tensors)
    tensors = [_lift(tape, t) for t in tensors]
    widths = {t.value.shape[1:] for t in tensors}
    if len(widths) != 1:
        raise ValueError(f"concat_rows: incompatible row widths {sorted(widths)}")
    counts = [t.value.shape[0] for t in tensors]
    offsets = np.cumsum([0] + counts)

    def concat_pull(g):
        return tuple(g[offsets[i]: offsets[i + 1]] for i in range(len(counts)))

    value = np.concatenate([t.value for t in tensors], axis=0)
    return tape._record(value, tuple(t._idx for t in tensors), concat_pull)


def dropout(a, mask: np.ndarray, rate: float) -> Tensor:
    """Inverted dropout with a caller-supplied frozen mask.

    The mask comes from a named RNG stream so that consistency losses
    can re-sample or reuse it deliberately.
    """
    tape = _tape_of(a)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must be in [0, 1), got {rate}")
    if mask.shape != a.value.shape:
        raise ValueError(
            f"dropout: mask shape {mask.shape} does not match input {a.shape}"
        )
    scale = mask.astype(np.float64) / (1.0 - rate)

    def dropout_pull(g):
        return (g * scale,)

    return tape._record(a.value * scale, (a._idx,), dropout_pull)


def grad_reverse(a, lam: float) -> Tensor:
    """Identity forward; backward multiplies the adjoint by -lam."""
    tape = _tape_of(a)
    lam = float(lam)
    if not np.isfinite(lam):
        raise ValueError("grad_reverse: lambda must be finite")

    def reverse_pull(g):
        return (-lam * g,)

    return tape._record(a.value.copy(), (a._idx,), reverse_pull)


def clamp_min(a, lo: float) -> Tensor:
    """max(a, lo), composed as a + relu(lo - a).

    This form leaves values above the floor bit-identical (the relu
    contributes an exact 0.0), which keeps identities like
    KL(p || p) == 0 exact instead of merely small.
    """
    return add(a, relu(sub(lo, a)))


def absolute(a) -> Tensor:
    """|a|, composed as relu(a) + relu(-a)."""
    return add(relu(a), relu(neg(a)))


def make_dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Draw a keep-mask for dropout(); kept entries are True."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    return rng.random(shape) >= rate
