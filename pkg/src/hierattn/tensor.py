"""Dense tensors with a recording tape for reverse-mode differentiation.

Values live in numpy arrays. Gradient recording happens only while a
:class:`Tape` is active::

    with Tape() as tape:
        loss = (x * x).sum()
    tape.backward(loss)
    x.grad  # == 2 * x.data
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import expit as _sigmoid

ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_DEFAULT_DTYPE = [np.float32]
_ACTIVE_TAPES: list["Tape"] = []


class NonFiniteError(FloatingPointError):
    """Raised when an op produces NaN or Inf."""

    def __init__(self, op: str):
        super().__init__(f"non-finite value produced by op '{op}'")
        self.op = op


def default_dtype() -> type:
    return _DEFAULT_DTYPE[-1]


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the dtype used for newly created tensors."""
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported precision {dtype}")
    _DEFAULT_DTYPE.append(dtype)
    try:
        yield
    finally:
        _DEFAULT_DTYPE.pop()


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator: identical seed gives identical draws on every platform."""
    return np.random.Generator(np.random.PCG64(seed))


def validate_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(d) for d in shape)
    if any(d < 1 for d in shape):
        raise ValueError(f"invalid shape {shape}: all dims must be >= 1")
    if int(np.prod(shape, dtype=np.float64)) > np.iinfo(np.intp).max:
        raise ValueError(f"shape {shape} exceeds addressable range")
    return shape


@dataclass
class Node:
    id: int
    inputs: tuple[int, ...]
    backward: BackwardFn
    name: str


@dataclass
class Tape:
    """Append-only record of differentiable ops.

    Node ids are assigned in execution order, so inputs of node ``i`` always
    have ids below ``i`` and a reverse sweep is a valid topological order.
    """

    nodes: list[Node] = field(default_factory=list)
    leaves: dict[int, "Tensor"] = field(default_factory=dict)

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPES.remove(self)

    def _register_leaf(self, t: "Tensor") -> int:
        node = Node(len(self.nodes), (), _no_backward, "leaf")
        self.nodes.append(node)
        self.leaves[node.id] = t
        return node.id

    def node_of(self, t: "Tensor") -> Optional[int]:
        if t._tape is self and t._node is not None:
            return t._node
        if t.requires_grad:
            t._tape, t._node = self, self._register_leaf(t)
            return t._node
        return None

    def record(self, out: "Tensor", inputs: Sequence["Tensor"], backward: BackwardFn, name: str) -> None:
        ids = [self.node_of(t) for t in inputs]
        if all(i is None for i in ids):
            return
        node = Node(len(self.nodes), tuple(-1 if i is None else i for i in ids), backward, name)
        self.nodes.append(node)
        out._tape, out._node = self, node.id

    def backward(self, loss: "Tensor") -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every recorded leaf."""
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self or loss._node is None:
            raise ValueError("loss was not produced under this tape")
        grads: dict[int, np.ndarray] = {loss._node: np.ones_like(loss.data)}
        for node in reversed(self.nodes[: loss._node + 1]):
            g = grads.pop(node.id, None)
            if g is None:
                continue
            if node.id in self.leaves:
                leaf = self.leaves[node.id]
                leaf.grad = g.astype(leaf.data.dtype) if leaf.grad is None else leaf.grad + g
                continue
            for i, gi in zip(node.inputs, node.backward(g)):
                if i < 0 or gi is None:
                    continue
                grads[i] = gi if i not in grads else grads[i] + gi


def _no_backward(g):
    return ()


def _active_tape() -> Optional[Tape]:
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, d in enumerate(shape):
        if d == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tensor:
    """N-dimensional array with an optional gradient slot."""

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype or default_dtype())
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._tape: Optional[Tape] = None
        self._node: Optional[int] = None

    # construction -------------------------------------------------------
    @classmethod
    def create(cls, shape: Sequence[int], init: str = "zeros", *, value: float = 0.0,
               low: float = 0.0, high: float = 1.0, mean: float = 0.0, std: float = 1.0,
               rng: Optional[np.random.Generator] = None, requires_grad: bool = False) -> "Tensor":
        shape = validate_shape(shape)
        dtype = default_dtype()
        if init == "zeros":
            data = np.zeros(shape, dtype)
        elif init == "constant":
            data = np.full(shape, value, dtype)
        elif init in ("uniform", "normal"):
            if rng is None:
                raise ValueError(f"{init} init requires an rng")
            if init == "uniform":
                data = rng.uniform(low, high, size=shape)
            else:
                data = rng.normal(mean, std, size=shape)
            data = data.astype(dtype)
        else:
            raise ValueError(f"unknown init '{init}'")
        return cls(data, requires_grad=requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other, self.dtype), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p: float):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def apply(name: str, out_data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """Wrap a forward result and record its backward rule on the active tape."""
    if not np.all(np.isfinite(out_data)):
        raise NonFiniteError(name)
    out = Tensor(out_data, dtype=out_data.dtype)
    tape = _active_tape()
    if tape is not None:
        tape.record(out, inputs, backward, name)
    return out


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(b, dtype=a.dtype)
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(a, dtype=b.dtype)
    return a, b


# elementwise ------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return apply("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return apply("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    return apply("mul", ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    return apply("div", ad / bd, (a, b),
                 lambda g: (_unbroadcast(g / bd, ad.shape),
                            _unbroadcast(-g * ad / (bd * bd), bd.shape)))


def power(a: Tensor, p: float) -> Tensor:
    ad = a.data
    return apply("pow", ad ** p, (a,), lambda g: (g * p * ad ** (p - 1),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return apply("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return apply("log", np.log(ad), (a,), lambda g: (g / ad,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return apply("sqrt", out, (a,), lambda g: (g / (2 * out),))


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return apply("sigmoid", s, (a,), lambda g: (g * s * (1 - s),))


def swish(a: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    x = a.data
    s = _sigmoid(x)
    return apply("swish", x * s, (a,), lambda g: (g * (s + x * s * (1 - s)),))


# reductions and shape ---------------------------------------------------

def _norm_axes(axis, ndim) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    shape = a.shape
    axes = _norm_axes(axis, a.ndim)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return apply("sum", np.sum(a.data, axis=axes, keepdims=keepdims), (a,), backward)


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    n = int(np.prod([a.shape[i] for i in axes]))
    return sum_(a, axes, keepdims) * (1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    src = a.shape
    return apply("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return apply("transpose", np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def getitem(a: Tensor, idx) -> Tensor:
    shape, dtype = a.shape, a.dtype

    def backward(g):
        full = np.zeros(shape, dtype)
        np.add.at(full, idx, g)
        return (full,)

    return apply("getitem", a.data[idx], (a,), backward)


def take(a: Tensor, indices: np.ndarray, axis: int) -> Tensor:
    """Gather along ``axis``; indices may repeat."""
    indices = np.asarray(indices)
    axis = axis % a.ndim
    shape, dtype = a.shape, a.dtype

    unique = len(np.unique(indices)) == indices.size

    def backward(g):
        full = np.zeros(shape, dtype)
        moved = np.moveaxis(full, axis, 0)
        if unique:
            moved[indices] = np.moveaxis(g, axis, 0)
        else:
            np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (full,)

    return apply("take", np.take(a.data, indices, axis=axis), (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = list(tensors)
    axis = axis % tensors[0].ndim
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return apply("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors,
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; leading dims broadcast like ``np.matmul``."""
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs operands of rank >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return apply("matmul", ad @ bd, (a, b), backward)
