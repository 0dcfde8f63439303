"""Reverse-mode automatic differentiation on an append-only tape.

Nodes hold numpy arrays (a scalar is a 0-d array), so one recorded
operation covers a whole batch of collocation points.  Operations are
written against :class:`Var` and plain ``ndarray`` alike; the helper
functions below (``tanh``, ``sum`` ...) dispatch on the argument type so
the same network code runs taped or untaped.

Example::

    tape = Tape()
    w = tape.leaf(np.array([1.0, 2.0, 3.0]))
    loss = sum(w * w)
    tape.backward(loss)          # -> [array([2., 4., 6.])]
"""

from __future__ import annotations

import builtins
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "TapeError",
    "Tape",
    "Var",
    "record_scalar",
    "backward",
    "value_of",
    "tanh",
    "exp",
    "log",
    "softplus",
    "square",
    "sum",
    "mean",
    "reshape",
    "swapaxes",
    "concatenate",
    "stack",
    "value_and_grad",
    "fd_check",
    "fd_gradient",
]


class TapeError(ValueError):
    """Structural or contract violation on a tape."""


@dataclass
class Node:
    op: str
    operands: tuple[int, ...]
    value: np.ndarray
    partials: tuple | None = None
    vjp: Callable | None = field(default=None, repr=False)
    needs_grad: bool = True


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# elementwise ops: value and local partials w.r.t. each operand
def _add(a, b):
    return a + b, (1.0, 1.0)


def _sub(a, b):
    return a - b, (1.0, -1.0)


def _mul(a, b):
    return a * b, (b, a)


def _div(a, b):
    out = a / b
    return out, (1.0 / b, -out / b)


def _neg(a):
    return -a, (-1.0,)


def _tanh(a):
    out = np.tanh(a)
    return out, (1.0 - out * out,)


def _exp(a):
    out = np.exp(a)
    return out, (out,)


def _log(a):
    return np.log(a), (1.0 / a,)


def _square(a):
    return a * a, (2.0 * a,)


def _softplus(a):
    return np.logaddexp(0.0, a), (0.5 * (1.0 + np.tanh(0.5 * a)),)


_ELEMENTWISE = {
    "add": _add,
    "sub": _sub,
    "mul": _mul,
    "div": _div,
    "neg": _neg,
    "tanh": _tanh,
    "exp": _exp,
    "log": _log,
    "square": _square,
    "softplus": _softplus,
}


class Tape:
    """Append-only record of array operations.

    Leaves created with :meth:`leaf` are the differentiable inputs;
    :meth:`backward` returns one gradient array per leaf, in creation order.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.leaf_ids: list[int] = []

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def leaf_count(self) -> int:
        return len(self.leaf_ids)

    def _append(self, node: Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def leaf(self, value) -> Var:
        node_id = self._append(Node("leaf", (), np.array(value, dtype=np.float64)))
        self.leaf_ids.append(node_id)
        return Var(self, node_id)

    def constant(self, value) -> Var:
        node = Node("const", (), np.asarray(value, dtype=np.float64), needs_grad=False)
        return Var(self, self._append(node))

    def _check(self, operands: Sequence[int]) -> None:
        n = len(self.nodes)
        for i in operands:
            if not 0 <= i < n:
                raise TapeError(f"operand id {i} not on tape (length {n})")

    def record(self, op_kind: str, operands: Sequence[int], **attrs) -> int:
        """Append ``op_kind`` applied to existing nodes; return the new node id."""
        operands = tuple(int(i) for i in operands)
        self._check(operands)
        vals = [self.nodes[i].value for i in operands]
        needs = any(self.nodes[i].needs_grad for i in operands)
        if op_kind in _ELEMENTWISE:
            value, partials = _ELEMENTWISE[op_kind](*vals)
            return self._append(Node(op_kind, operands, np.asarray(value), partials, None, needs))
        value, vjp = _structural(op_kind, vals, attrs)
        return self._append(Node(op_kind, operands, np.asarray(value), None, vjp, needs))

    def backward(self, seed) -> list[np.ndarray]:
        """Gradient of the scalar node ``seed`` with respect to every leaf."""
        seed_id = seed.id if isinstance(seed, Var) else int(seed)
        self._check((seed_id,))
        if self.nodes[seed_id].value.size != 1:
            raise TapeError(
                f"backward needs a scalar seed, got shape {self.nodes[seed_id].value.shape}"
            )
        adj: list = [None] * (seed_id + 1)
        adj[seed_id] = np.ones_like(self.nodes[seed_id].value)
        for i in range(seed_id, -1, -1):
            g = adj[i]
            if g is None:
                continue
            node = self.nodes[i]
            if not node.operands or not node.needs_grad:
                continue
            wanted = [self.nodes[j].needs_grad for j in node.operands]
            if node.partials is not None:
                contribs = [
                    _unbroadcast(g * p, self.nodes[j].value.shape) if w else None
                    for j, p, w in zip(node.operands, node.partials, wanted)
                ]
            else:
                contribs = node.vjp(g, wanted)
            for j, c in zip(node.operands, contribs):
                if c is None:
                    continue
                adj[j] = c if adj[j] is None else adj[j] + c
        grads = []
        for leaf_id in self.leaf_ids:
            g = adj[leaf_id] if leaf_id <= seed_id else None
            grads.append(
                np.zeros_like(self.nodes[leaf_id].value) if g is None else np.asarray(g)
            )
        return grads


def _structural(op_kind: str, vals: list[np.ndarray], attrs: dict):
    if op_kind == "matmul":
        a, b = vals
        if b.ndim != 2:
            raise TapeError("matmul: right operand must be a matrix")
        out = a @ b

        def vjp(g, wanted):
            ga = gb = None
            if wanted[0]:
                ga = _unbroadcast(g @ b.T, a.shape)
            if wanted[1]:
                if a.ndim == 1:
                    gb = np.outer(a, g)
                else:
                    gb = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb

        return out, vjp
    if op_kind == "sum":
        (a,) = vals
        axis = attrs.get("axis")
        out = np.sum(a, axis=axis)

        def vjp(g, wanted):
            if axis is not None:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape),)

        return out, vjp
    if op_kind == "index":
        (a,) = vals
        key = attrs["key"]
        out = a[key]

        basic = not any(
            isinstance(k, (list, np.ndarray))
            for k in (key if isinstance(key, tuple) else (key,))
        )

        def vjp(g, wanted):
            full = np.zeros_like(a)
            if basic:
                full[key] = g
            else:
                np.add.at(full, key, g)
            return (full,)

        return out, vjp
    if op_kind == "reshape":
        (a,) = vals
        out = a.reshape(attrs["shape"])
        return out, lambda g, wanted: (g.reshape(a.shape),)
    if op_kind == "swapaxes":
        (a,) = vals
        i, j = attrs["axes"]
        return np.swapaxes(a, i, j), lambda g, wanted: (np.swapaxes(g, i, j),)
    if op_kind == "concatenate":
        axis = attrs.get("axis", 0)
        out = np.concatenate(vals, axis=axis)
        splits = np.cumsum([v.shape[axis] for v in vals])[:-1]
        return out, lambda g, wanted: tuple(np.split(g, splits, axis=axis))
    if op_kind == "stack":
        axis = attrs.get("axis", 0)
        out = np.stack(vals, axis=axis)
        return out, lambda g, wanted: tuple(
            np.take(g, k, axis=axis) for k in range(len(vals))
        )
    raise TapeError(f"unknown op kind {op_kind!r}")


class Var:
    """Handle to a node on a :class:`Tape`."""

    __slots__ = ("tape", "id")
    __array_ufunc__ = None  # make ndarray defer to our reflected operators

    def __init__(self, tape: Tape, node_id: int) -> None:
        self.tape = tape
        self.id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.id].value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        return f"Var(id={self.id}, shape={self.shape})"

    def _lift(self, other) -> Var:
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise TapeError("operands live on different tapes")
            return other
        return self.tape.constant(other)

    def _binary(self, op, other, reflected=False):
        other = self._lift(other)
        a, b = (other, self) if reflected else (self, other)
        return Var(self.tape, self.tape.record(op, (a.id, b.id)))

    def __add__(self, o):
        return self._binary("add", o)

    def __radd__(self, o):
        return self._binary("add", o, True)

    def __sub__(self, o):
        return self._binary("sub", o)

    def __rsub__(self, o):
        return self._binary("sub", o, True)

    def __mul__(self, o):
        return self._binary("mul", o)

    def __rmul__(self, o):
        return self._binary("mul", o, True)

    def __truediv__(self, o):
        return self._binary("div", o)

    def __rtruediv__(self, o):
        return self._binary("div", o, True)

    def __matmul__(self, o):
        return self._binary("matmul", o)

    def __rmatmul__(self, o):
        return self._binary("matmul", o, True)

    def __neg__(self):
        return Var(self.tape, self.tape.record("neg", (self.id,)))

    def __getitem__(self, key):
        return Var(self.tape, self.tape.record("index", (self.id,), key=key))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Var(self.tape, self.tape.record("reshape", (self.id,), shape=shape))


def record_scalar(tape: Tape, op_kind: str, operands: Sequence[int]) -> int:
    """Record one operation on existing node ids and return the new id."""
    return tape.record(op_kind, operands)


def backward(tape: Tape, seed) -> list[np.ndarray]:
    return tape.backward(seed)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x)


def _unary(op: str, fn: Callable):
    def apply(x):
        if isinstance(x, Var):
            return Var(x.tape, x.tape.record(op, (x.id,)))
        return fn(np.asarray(x, dtype=np.float64))[0]

    apply.__name__ = op
    return apply


tanh = _unary("tanh", _tanh)
exp = _unary("exp", _exp)
log = _unary("log", _log)
square = _unary("square", _square)
softplus = _unary("softplus", _softplus)


def sum(x, axis=None):  # noqa: A001 - mirrors numpy
    if isinstance(x, Var):
        return Var(x.tape, x.tape.record("sum", (x.id,), axis=axis))
    return np.sum(x, axis=axis)


def mean(x, axis=None):
    n = value_of(x).size if axis is None else value_of(x).shape[axis]
    return sum(x, axis=axis) * (1.0 / n)


def reshape(x, shape):
    if isinstance(x, Var):
        return x.reshape(shape)
    return np.reshape(x, shape)


def swapaxes(x, i: int, j: int):
    if isinstance(x, Var):
        return Var(x.tape, x.tape.record("swapaxes", (x.id,), axes=(i, j)))
    return np.swapaxes(x, i, j)


def _join(op: str, xs: Sequence, axis: int):
    tape = next((x.tape for x in xs if isinstance(x, Var)), None)
    if tape is None:
        return (np.concatenate if op == "concatenate" else np.stack)(xs, axis=axis)
    ids = [x.id if isinstance(x, Var) else tape.constant(x).id for x in xs]
    return Var(tape, tape.record(op, ids, axis=axis))


def concatenate(xs: Sequence, axis: int = 0):
    return _join("concatenate", xs, axis)


def stack(xs: Sequence, axis: int = 0):
    return _join("stack", xs, axis)


def value_and_grad(fn: Callable, params: np.ndarray) -> tuple[float, np.ndarray]:
    """Evaluate scalar ``fn(Var)`` on a fresh tape and return (value, gradient)."""
    tape = Tape()
    theta = tape.leaf(params)
    out = fn(theta)
    (g,) = tape.backward(out)
    return float(out.value), g


def fd_gradient(fn: Callable[[np.ndarray], float], point, step: float = 1e-5) -> np.ndarray:
    point = np.asarray(point, dtype=np.float64)
    grad = np.empty_like(point)
    flat = grad.reshape(-1)
    x = point.copy().reshape(-1)
    for k in range(x.size):
        orig = x[k]
        x[k] = orig + step
        fp = fn(x.reshape(point.shape))
        x[k] = orig - step
        fm = fn(x.reshape(point.shape))
        x[k] = orig
        flat[k] = (fp - fm) / (2.0 * step)
    return grad


def fd_check(function: Callable, point, step: float = 1e-5, analytic=None) -> float:
    """Max relative disagreement between an analytic gradient and central differences.

    ``function`` maps an array to a scalar.  If ``analytic`` is None the
    gradient is taken from the tape by calling ``function`` on a leaf.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    point = np.asarray(point, dtype=np.float64)
    if analytic is None:
        _, analytic = value_and_grad(function, point)
    numeric = fd_gradient(lambda p: float(value_of(function(p))), point, step)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    err = np.abs(analytic - numeric) / (np.abs(analytic) + 1e-12)
    return float(builtins.max(err.max(), 0.0))
