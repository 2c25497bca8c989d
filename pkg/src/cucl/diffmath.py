"""Dense float64 arrays with tape-based reverse-mode differentiation.

Every primitive accepts plain ``numpy`` arrays or :class:`Var` handles.  When no
argument is a ``Var`` the primitive evaluates eagerly and returns an ndarray, so
model code written against this module runs unchanged with or without a tape.

Broadcasting is limited to what the models need: scalars and a 1-D row vector
against a 2-D matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

NORM_EPS = 1e-12


class NonFiniteError(ArithmeticError):
    """A NaN or Inf appeared during a forward or backward pass."""


@dataclass
class _Node:
    op: str
    parents: tuple[int, ...]
    vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]] | None


@dataclass
class Tape:
    """Wengert list of recorded primitives.

    Nodes are appended in evaluation order, so the list is already topologically
    sorted and :meth:`backward` walks it once in reverse.
    """

    nodes: list[_Node] = field(default_factory=list)
    values: list[np.ndarray] = field(default_factory=list)
    check_finite: bool = True

    def leaf(self, value) -> "Var":
        arr = _as_array(value)
        if self.check_finite and not np.all(np.isfinite(arr)):
            raise NonFiniteError("non-finite input array")
        return self._push("leaf", arr, (), None)

    def _push(self, op, value, parents, vjp) -> "Var":
        self.nodes.append(_Node(op, parents, vjp))
        self.values.append(value)
        return Var(self, len(self.nodes) - 1)

    def backward(self, out: "Var") -> list[np.ndarray | None]:
        """Return the adjoint of every node w.r.t. the scalar ``out``."""
        if out.tape is not self:
            raise ValueError("output belongs to a different tape")
        if out.value.size != 1:
            raise ValueError(f"backward needs a scalar output, got shape {out.value.shape}")
        adjoints: list[np.ndarray | None] = [None] * len(self.nodes)
        adjoints[out.index] = np.ones_like(out.value)
        for idx in range(out.index, -1, -1):
            g = adjoints[idx]
            node = self.nodes[idx]
            if g is None or node.vjp is None:
                continue
            grads = node.vjp(g)
            for parent, pg in zip(node.parents, grads):
                if pg is None:
                    continue
                if self.check_finite and not np.isfinite(pg.sum()):
                    raise NonFiniteError(f"non-finite gradient flowing out of '{node.op}'")
                if adjoints[parent] is None:
                    adjoints[parent] = pg
                else:
                    adjoints[parent] = adjoints[parent] + pg
        return adjoints

    def grad(self, out: "Var", wrt: Sequence["Var"]) -> list[np.ndarray]:
        adj = self.backward(out)
        return [
            np.zeros_like(v.value) if adj[v.index] is None else adj[v.index].reshape(v.value.shape)
            for v in wrt
        ]


class Var:
    """Handle to a value recorded on a :class:`Tape`."""

    __slots__ = ("tape", "index")
    __array_priority__ = 100

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.index]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.shape}, op={self.tape.nodes[self.index].op!r})"

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
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    @property
    def T(self):
        return transpose(self)


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _val(x) -> np.ndarray:
    if type(x) is np.ndarray and x.dtype == np.float64:
        return x
    return x.value if isinstance(x, Var) else _as_array(x)


def _record(op: str, value: np.ndarray, args: tuple, vjp):
    """Push ``value`` onto the tape of the first ``Var`` in ``args``.

    ``vjp`` maps the output adjoint to one gradient per entry of ``args``; entries
    that are not ``Var`` are dropped.
    """
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is not None and a.tape is not tape:
                raise ValueError("mixing values from different tapes")
            tape = a.tape
    # a NaN/Inf anywhere makes the sum non-finite; cheaper than an elementwise scan
    if tape is not None and tape.check_finite and not np.isfinite(value.sum()):
        raise NonFiniteError(f"'{op}' produced non-finite values")
    if tape is None:
        return value
    live = [i for i, a in enumerate(args) if isinstance(a, Var)]
    parents = tuple(args[i].index for i in live)

    def node_vjp(g):
        grads = vjp(g)
        return tuple(grads[i] for i in live)

    return tape._push(op, value, parents, node_vjp)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    if len(shape) == 0:
        return np.asarray(g.sum())
    if len(shape) == 1 and g.ndim == 2:
        return g.sum(axis=0) if shape[0] == g.shape[1] else g.sum()
    return g.sum().reshape(shape) if np.prod(shape) == 1 else g.reshape(shape)


def _check_broadcast(op, sa, sb):
    if sa == sb or len(sa) == 0 or len(sb) == 0:
        return
    if len(sa) == 2 and len(sb) == 1 and sa[1] == sb[0]:
        return
    if len(sb) == 2 and len(sa) == 1 and sb[1] == sa[0]:
        return
    if int(np.prod(sa)) == 1 or int(np.prod(sb)) == 1:
        return
    raise ValueError(f"{op}: incompatible shapes {sa} and {sb}")


# -- elementwise ---------------------------------------------------------------


def add(a, b):
    va, vb = _val(a), _val(b)
    _check_broadcast("add", va.shape, vb.shape)
    return _record("add", va + vb, (a, b),
                   lambda g: (_unbroadcast(g, va.shape), _unbroadcast(g, vb.shape)))


def sub(a, b):
    va, vb = _val(a), _val(b)
    _check_broadcast("sub", va.shape, vb.shape)
    return _record("sub", va - vb, (a, b),
                   lambda g: (_unbroadcast(g, va.shape), _unbroadcast(-g, vb.shape)))


def mul(a, b):
    va, vb = _val(a), _val(b)
    _check_broadcast("mul", va.shape, vb.shape)
    return _record("mul", va * vb, (a, b),
                   lambda g: (_unbroadcast(g * vb, va.shape), _unbroadcast(g * va, vb.shape)))


def scale(a, c: float):
    c = float(c)
    return _record("scale", _val(a) * c, (a,), lambda g: (g * c,))


def exp(a):
    out = np.exp(_val(a))
    return _record("exp", out, (a,), lambda g: (g * out,))


def log(a):
    va = _val(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(va)
    return _record("log", out, (a,), lambda g: (g / va,))


def tanh(a):
    out = np.tanh(_val(a))
    return _record("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def detach(a):
    """Identity in the forward pass; blocks the gradient."""
    return _record("detach", _val(a).copy(), (a,), lambda g: (None,))


# -- linear algebra ------------------------------------------------------------


def matmul(a, b):
    va, vb = _val(a), _val(b)
    if va.ndim != 2 or vb.ndim != 2 or va.shape[1] != vb.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {va.shape} and {vb.shape}")
    need_a, need_b = isinstance(a, Var), isinstance(b, Var)
    return _record("matmul", va @ vb, (a, b),
                   lambda g: (g @ vb.T if need_a else None, va.T @ g if need_b else None))


def transpose(a):
    va = _val(a)
    if va.ndim != 2:
        raise ValueError("transpose needs a 2-D array")
    return _record("transpose", va.T.copy(), (a,), lambda g: (g.T,))


def sqdist(a, b):
    """Pairwise squared Euclidean distances between rows: (n, d) x (m, d) -> (n, m).

    Uses the ``|a|^2 + |b|^2 - 2 a.b`` expansion, clipped at zero.
    """
    va, vb = _val(a), _val(b)
    if va.ndim != 2 or vb.ndim != 2 or va.shape[1] != vb.shape[1]:
        raise ValueError(f"sqdist: incompatible shapes {va.shape} and {vb.shape}")
    need_a, need_b = isinstance(a, Var), isinstance(b, Var)
    raw = (va * va).sum(axis=1)[:, None] + (vb * vb).sum(axis=1)[None, :] - 2.0 * (va @ vb.T)
    out = np.maximum(raw, 0.0)

    def vjp(g):
        g = np.where(raw > 0, g, 0.0)
        ga = 2.0 * (g.sum(axis=1)[:, None] * va - g @ vb) if need_a else None
        gb = 2.0 * (g.sum(axis=0)[:, None] * vb - g.T @ va) if need_b else None
        return ga, gb

    return _record("sqdist", out, (a, b), vjp)


# -- reductions ----------------------------------------------------------------


def sum(a, axis: int | None = None):  # noqa: A001
    va = _val(a)
    out = np.asarray(va.sum(axis=axis))

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, va.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), va.shape).copy(),)

    return _record("sum", out, (a,), vjp)


def mean(a, axis: int | None = None):
    va = _val(a)
    n = va.size if axis is None else va.shape[axis]
    return scale(sum(a, axis=axis), 1.0 / n)


# -- row-wise maps ---------------------------------------------------------------


def l2_normalize_rows(a, eps: float = NORM_EPS):
    """Divide each row by ``max(||row||, eps)``; zero rows stay zero."""
    va = _val(a)
    if va.ndim == 1:
        return reshape(l2_normalize_rows(reshape(a, (1, -1)), eps), va.shape)
    norms = np.sqrt(np.einsum("ij,ij->i", va, va))[:, None]
    denom = np.maximum(norms, eps)
    out = va / denom
    clamped = norms < eps

    def vjp(g):
        proj = (g * out).sum(axis=1, keepdims=True)
        ga = (g - out * proj) / denom
        if clamped.any():
            ga = np.where(clamped, g / denom, ga)
        return (ga,)

    return _record("l2_normalize_rows", out, (a,), vjp)


def softmax_rows(a):
    va = _val(a)
    shifted = va - va.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return _record("softmax_rows", out, (a,), vjp)


def log_softmax_rows(a):
    va = _val(a)
    m = va.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(va - m).sum(axis=1, keepdims=True))
    out = va - lse
    soft = np.exp(out)

    def vjp(g):
        return (g - soft * g.sum(axis=1, keepdims=True),)

    return _record("log_softmax_rows", out, (a,), vjp)


# -- structural ------------------------------------------------------------------


def reshape(a, shape):
    va = _val(a)
    return _record("reshape", va.reshape(shape), (a,), lambda g: (g.reshape(va.shape),))


def cols(a, start: int, stop: int):
    va = _val(a)
    out = va[:, start:stop].copy()

    def vjp(g):
        full = np.zeros_like(va)
        full[:, start:stop] = g
        return (full,)

    return _record("cols", out, (a,), vjp)


def rows(a, start: int, stop: int):
    va = _val(a)
    out = va[start:stop].copy()

    def vjp(g):
        full = np.zeros_like(va)
        full[start:stop] = g
        return (full,)

    return _record("rows", out, (a,), vjp)


def concat_cols(parts: Sequence):
    vals = [_val(p) for p in parts]
    out = np.concatenate(vals, axis=1)
    bounds = np.cumsum([0] + [v.shape[1] for v in vals])

    def vjp(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(vals)))

    return _record("concat_cols", out, tuple(parts), vjp)


def concat_rows(parts: Sequence):
    vals = [_val(p) for p in parts]
    out = np.concatenate(vals, axis=0)
    bounds = np.cumsum([0] + [v.shape[0] for v in vals])

    def vjp(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(vals)))

    return _record("concat_rows", out, tuple(parts), vjp)


# -- composites ------------------------------------------------------------------


def cosine_similarity(a, b):
    """Cosine of two vectors with each norm clamped below at ``NORM_EPS``."""
    va, vb = _val(a), _val(b)
    if va.ndim != 1 or vb.ndim != 1 or va.shape != vb.shape:
        raise ValueError(f"cosine_similarity: dimension mismatch {va.shape} vs {vb.shape}")
    return sum(mul(l2_normalize_rows(a), l2_normalize_rows(b)))


def cosine_matrix(a, b):
    """All-pairs cosine similarity between the rows of ``a`` and ``b``."""
    return matmul(l2_normalize_rows(a), transpose(l2_normalize_rows(b)))


def rowwise_cosine(a, b):
    """Cosine between matching rows of ``a`` and ``b``; returns a vector."""
    if _val(a).shape != _val(b).shape:
        raise ValueError("rowwise_cosine: shape mismatch")
    return sum(mul(l2_normalize_rows(a), l2_normalize_rows(b)), axis=1)


def forward_backward(program: Callable, inputs: Sequence) -> tuple[float, list[np.ndarray]]:
    """Evaluate ``program(*inputs)`` on a fresh tape and differentiate it.

    Returns the scalar value and one gradient per input, shaped like the input.
    Inputs the program never touches get an all-zero gradient.
    """
    tape = Tape()
    leaves = [tape.leaf(x) for x in inputs]
    out = program(*leaves)
    if not isinstance(out, Var):
        # constant program: nothing on the tape depends on the inputs
        val = _as_array(out)
        if val.size != 1:
            raise ValueError(f"program must return a scalar, got shape {val.shape}")
        return float(val), [np.zeros_like(v.value) for v in leaves]
    if out.value.size != 1:
        raise ValueError(f"program must return a scalar, got shape {out.value.shape}")
    grads = tape.grad(out, leaves)
    return float(out.value), grads
