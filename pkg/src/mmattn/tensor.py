"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every primitive builds its output eagerly with numpy and, when gradients
are being tracked, records its inputs plus a closure mapping the output
gradient to input gradients. :meth:`Tensor.backward` topologically sorts
the recorded graph from a scalar root and replays the closures in reverse.

Shapes must match exactly for elementwise ops. Replicating a vector
across rows is done explicitly with :func:`repeat`.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """A precondition on the inputs of an operation was violated."""


class NumericalError(FloatingPointError):
    """A non-finite value appeared where finite values were required."""


_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item: tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data: np.ndarray, parents: tuple[Tensor, ...], fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


# -- elementwise -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("add", a, b)
    return _record(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return _record(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _record(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _record(a.data * c, (a,), lambda g: (g * c,))


def one_minus(a) -> Tensor:
    """``1 - a`` elementwise."""
    a = as_tensor(a)
    return _record(1.0 - a.data, (a,), lambda g: (-g,))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _record(y, (x,), lambda g: (g * (1.0 - y * y),))


tanh_map = tanh


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    d = x.data
    # piecewise form avoids exp overflow for large |x|
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _record(y, (x,), lambda g: (g * y * (1.0 - y),))


sigmoid_map = sigmoid


def log(x) -> Tensor:
    x = as_tensor(x)
    d = x.data
    return _record(np.log(d), (x,), lambda g: (g / d,))


# -- linear algebra --------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data
    return _record(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


# -- normalisation ---------------------------------------------------------


def softmax(x) -> Tensor:
    """Softmax over the last axis."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError(f"softmax: empty last axis in shape {x.shape}")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def fn(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _record(s, (x,), fn)


softmax_vec = softmax


def log_softmax(x) -> Tensor:
    """Log-softmax over the last axis."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError(f"log_softmax: empty last axis in shape {x.shape}")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse
    s = np.exp(y)

    def fn(g):
        return (g - s * g.sum(axis=-1, keepdims=True),)

    return _record(y, (x,), fn)


# -- structural ------------------------------------------------------------


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    if not ts:
        raise ContractError("concat: no inputs")
    nd = ts[0].ndim
    ax = axis % nd
    for t in ts[1:]:
        if t.ndim != nd or any(t.shape[i] != ts[0].shape[i] for i in range(nd) if i != ax):
            raise DimensionError(
                f"concat: shapes {[u.shape for u in ts]} incompatible along axis {axis}"
            )
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def fn(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _record(np.concatenate([t.data for t in ts], axis=ax), ts, fn)


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    try:
        y = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {old} as {tuple(shape)}") from exc
    return _record(y, (x,), lambda g: (g.reshape(old),))


def repeat(x, n: int, axis: int = 0) -> Tensor:
    """Insert a new axis at ``axis`` and replicate ``x`` ``n`` times along it."""
    x = as_tensor(x)
    ax = axis if axis >= 0 else axis + x.ndim + 1
    y = np.repeat(np.expand_dims(x.data, ax), n, axis=ax)
    return _record(y, (x,), lambda g: (g.sum(axis=ax),))


def select(x, index: int, axis: int = 0) -> Tensor:
    """Pick slice ``index`` along ``axis``, dropping that axis."""
    x = as_tensor(x)
    if not -x.shape[axis] <= index < x.shape[axis]:
        raise DimensionError(f"select: index {index} out of range for axis {axis} of {x.shape}")
    shape = x.shape
    ax = axis % x.ndim

    def fn(g):
        full = np.zeros(shape, dtype=DTYPE)
        idx = [slice(None)] * len(shape)
        idx[ax] = index
        full[tuple(idx)] = g
        return (full,)

    return _record(np.take(x.data, index, axis=ax), (x,), fn)


def embed(table, ids) -> Tensor:
    """Row lookup: ``table[ids]``, output shape ``ids.shape + (E,)``."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"embed: table must be 2-d, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ContractError(f"embed: id out of range for table with {table.shape[0]} rows")
    shape = table.shape

    def fn(g):
        full = np.zeros(shape, dtype=DTYPE)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, shape[1]))
        return (full,)

    return _record(table.data[ids], (table,), fn)


def pick(x, ids) -> Tensor:
    """Per-row gather: ``out[b] = x[b, ids[b]]`` for a 2-d ``x``."""
    x = as_tensor(x)
    ids = np.asarray(ids, dtype=np.int64)
    if x.ndim != 2 or ids.shape != (x.shape[0],):
        raise DimensionError(f"pick: ids {ids.shape} do not index rows of {x.shape}")
    rows = np.arange(x.shape[0])
    shape = x.shape

    def fn(g):
        full = np.zeros(shape, dtype=DTYPE)
        full[rows, ids] = g
        return (full,)

    return _record(x.data[rows, ids], (x,), fn)


def masked_fill(x, mask, value: float) -> Tensor:
    """Replace entries where ``mask`` is false by ``value``."""
    x = as_tensor(x)
    keep = np.asarray(mask, dtype=bool)
    if keep.shape != x.shape:
        raise DimensionError(f"masked_fill: mask {keep.shape} vs input {x.shape}")
    return _record(np.where(keep, x.data, value), (x,), lambda g: (np.where(keep, g, 0.0),))


# -- reductions ------------------------------------------------------------


def sum(x, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    shape = x.shape
    if axis is None:

        def fn(g):
            return (np.full(shape, g, dtype=DTYPE),)

        return _record(np.asarray(x.data.sum()), (x,), fn)
    ax = axis % x.ndim

    def fn_axis(g):
        return (np.broadcast_to(np.expand_dims(g, ax), shape).copy(),)

    return _record(x.data.sum(axis=ax), (x,), fn_axis)


def mean(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    n = x.size if axis is None else x.shape[axis]
    return scale(sum(x, axis), 1.0 / n)


# -- graph execution -------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    """Propagate d(root)/d(.) into ``.grad`` of every tracked tensor.

    Leaf gradients accumulate across calls; interior gradients are
    overwritten on each call.
    """
    if root.size != 1:
        raise ContractError(f"backward: root must be a scalar, got shape {root.shape}")
    if not root.requires_grad:
        raise ContractError("backward: root does not depend on any tracked tensor")
    grads: dict[int, np.ndarray] = {id(root): np.ones(root.shape, dtype=DTYPE)}
    for node in reversed(_topo_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        node.grad = g
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# -- checking helpers ------------------------------------------------------


def numerical_grad(f: Callable[[], float], x: Tensor, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of ``f`` with respect to every entry of ``x``."""
    out = np.zeros(x.shape, dtype=DTYPE)
    flat = x.data.reshape(-1)
    gflat = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-10) -> np.ndarray:
    """Elementwise ``|a-b| / max(|a|, |b|, floor)``.

    The floor keeps components that are pure round-off (both sides tiny)
    from dominating the comparison.
    """
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / denom


def check_finite(t: Tensor | np.ndarray, what: str) -> None:
    arr = t.data if isinstance(t, Tensor) else np.asarray(t)
    if not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise NumericalError(f"{what}: {bad} non-finite value(s) in array of shape {np.shape(arr)}")


def parameters_of(tensors: Iterable[Tensor]) -> list[Tensor]:
    """Deduplicate by identity, preserving order."""
    seen: set[int] = set()
    out = []
    for t in tensors:
        if id(t) not in seen:
            seen.add(id(t))
            out.append(t)
    return out
