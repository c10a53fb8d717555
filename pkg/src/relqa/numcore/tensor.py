"""Dense float64 tensors with a reverse-mode gradient tape.

A :class:`Tape` is activated with ``with Tape() as tape:``. Every op executed
while a tape is active and that touches a tensor with ``requires_grad`` is
recorded in creation order, so the recorded list is already topologically
sorted and ``tape.backward(loss)`` simply replays it in reverse.

Outside a tape, ops only compute values.
"""
from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from relqa.errors import DetachedError, NonFiniteError, ShapeError

_local = threading.local()

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def _stack() -> list[Tape]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> Tape | None:
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of differentiable ops for one training step."""

    def __init__(self, seed: int = 0):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], BackwardFn]] = []
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.consumed = False

    def __enter__(self) -> Tape:
        if self.consumed:
            raise DetachedError("tape already consumed")
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()

    def _record(self, out: Tensor, parents: tuple[Tensor, ...], fn: BackwardFn) -> None:
        self.nodes.append((out, parents, fn))

    def backward(self, loss: Tensor, wrt: Iterable[Tensor] | None = None):
        """Propagate d(loss)/d(leaf) through the recorded ops.

        Returns a dict mapping every reached leaf tensor to its gradient, or,
        when ``wrt`` is given, a list of gradients aligned with ``wrt``
        (zeros for leaves the loss does not depend on). The tape is consumed.
        """
        if self.consumed:
            raise DetachedError("tape already consumed")
        if loss._tape is not self:
            raise DetachedError("loss was not computed on this tape")
        if loss.data.size != 1:
            raise ShapeError(f"loss must be a scalar, got shape {loss.shape}")

        grads: dict[int, np.ndarray] = {}
        if loss.requires_grad:
            grads[id(loss)] = np.ones_like(loss.data)
        produced = {id(out) for out, _, _ in self.nodes}
        leaves: dict[int, Tensor] = {}
        for out, parents, fn in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for p, gp in zip(parents, fn(g)):
                if gp is None or not p.requires_grad:
                    continue
                key = id(p)
                if key not in produced:
                    leaves[key] = p
                prev = grads.get(key)
                grads[key] = gp if prev is None else prev + gp

        self.nodes = []
        self.consumed = True
        result = {}
        for key, leaf in leaves.items():
            g = grads[key]
            leaf.grad = g
            result[leaf] = g
        if wrt is None:
            return result
        return [result.get(t, np.zeros_like(t.data)) for t in wrt]


class Tensor:
    """A float64 array that can take part in a gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_tape", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite values in tensor {name or ''}".strip())
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._tape = active_tape()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> Tensor:
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(op: str, data: np.ndarray, parents: tuple[Tensor, ...], fn: BackwardFn) -> Tensor:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    tape = active_tape()
    out._tape = tape
    out.requires_grad = tape is not None and any(p.requires_grad for p in parents)
    if out.requires_grad:
        tape._record(out, parents, fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# --------------------------------------------------------------------- binary


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, B = a.data, b.data

    def back(g):
        return (g @ B.T if a.requires_grad else None, A.T @ g if b.requires_grad else None)

    return _result("matmul", A @ B, (a, b), back)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _result("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _result("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    A, B = a.data, b.data

    def back(g):
        return (_unbroadcast(g * B, A.shape) if a.requires_grad else None,
                _unbroadcast(g * A, B.shape) if b.requires_grad else None)

    return _result("mul", A * B, (a, b), back)


# ---------------------------------------------------------------------- unary


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # split by sign so neither branch overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _result("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _result("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


_ELEMENTWISE = {"sigmoid": sigmoid, "tanh": tanh, "add": add, "sub": sub, "mul": mul}


def elementwise(kind: str, a: Tensor, b: Tensor | None = None) -> Tensor:
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}") from None
    if kind in ("sigmoid", "tanh"):
        if b is not None:
            raise ValueError(f"{kind} is unary")
        return fn(a)
    if b is None:
        raise ValueError(f"{kind} needs two operands")
    return fn(a, b)


# ------------------------------------------------------------------ structure


def transpose(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs a matrix, got {a.shape}")
    return _result("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {src} to {shape}") from None
    return _result("reshape", out.copy(), (a,), lambda g: (g.reshape(src),))


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat of nothing")
    nd = parts[0].data.ndim
    ax = axis % nd
    for p in parts[1:]:
        if p.data.ndim != nd or any(
            p.shape[i] != parts[0].shape[i] for i in range(nd) if i != ax
        ):
            raise ShapeError(
                f"concat: mismatched extents {[q.shape for q in parts]} on axis {axis}"
            )
    sizes = [p.shape[ax] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def back(g):
        sl = [slice(None)] * nd
        grads = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl[ax] = slice(lo, hi)
            grads.append(g[tuple(sl)])
        return grads

    return _result("concat", np.concatenate([p.data for p in parts], axis=ax),
                   tuple(parts), back)


def take(a: Tensor, index, axis: int = 0) -> Tensor:
    """Select entries along ``axis`` (repeats allowed); gradient scatters back."""
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.intp)
    n = a.shape[axis]
    if idx.size and (idx.min() < -n or idx.max() >= n):
        raise IndexError(f"take: index out of range for extent {n}")
    out = np.take(a.data, idx, axis=axis)

    def back(g):
        full = np.zeros_like(a.data)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (full,)

    return _result("take", out, (a,), back)


def take_rows(a: Tensor, rows) -> Tensor:
    return take(a, rows, axis=0)


def split(a: Tensor, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    """Inverse of :func:`concat` for the given slice sizes."""
    a = as_tensor(a)
    if sum(sizes) != a.shape[axis]:
        raise ShapeError(f"split sizes {list(sizes)} do not cover extent {a.shape[axis]}")
    out, lo = [], 0
    for s in sizes:
        out.append(take(a, np.arange(lo, lo + s), axis=axis))
        lo += s
    return out


def broadcast_rows(v: Tensor, n: int) -> Tensor:
    """Repeat a 1 x d row n times."""
    v = as_tensor(v)
    if v.data.ndim != 2 or v.shape[0] != 1:
        raise ShapeError(f"broadcast_rows needs a 1 x d row, got {v.shape}")
    return take(v, np.zeros(n, dtype=np.intp), axis=0)


# ----------------------------------------------------------------- reductions


def sum_all(a: Tensor) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _result("sum", np.array(a.data.sum()), (a,),
                   lambda g: (np.full(shape, float(g)),))


def mean(parts: Sequence[Tensor]) -> Tensor:
    """Mean of same-shape tensors (used to average per-graph losses)."""
    if not parts:
        raise ShapeError("mean of nothing")
    total = parts[0]
    for p in parts[1:]:
        total = add(total, p)
    return mul(total, 1.0 / len(parts))


def max_along(a: Tensor, axis: int) -> Tensor:
    """Max over ``axis`` (kept as extent 1); gradient goes to the first argmax."""
    a = as_tensor(a)
    arg = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis)

    def back(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(arg, axis), g, axis=axis)
        return (full,)

    return _result("max", out, (a,), back)


def group_max(x: Tensor, groups: Sequence[Sequence[int]]) -> Tensor:
    """For a column of n scores, return a 1 x K row of per-group maxima."""
    x = as_tensor(x)
    flat = x.data.reshape(-1)
    winners = []
    for k, grp in enumerate(groups):
        if len(grp) == 0:
            raise ShapeError(f"group {k} is empty")
        grp = np.asarray(grp, dtype=np.intp)
        winners.append(int(grp[np.argmax(flat[grp])]))
    winners = np.asarray(winners, dtype=np.intp)
    out = flat[winners].reshape(1, -1)

    def back(g):
        full = np.zeros(flat.shape)
        np.add.at(full, winners, g.reshape(-1))
        return (full.reshape(x.shape),)

    return _result("group_max", out, (x,), back)


# ------------------------------------------------------------------- softmax


def softmax_rows(a: Tensor, mask=None) -> Tensor:
    """Row-wise softmax; entries where ``mask`` is False are exactly zero."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows needs a matrix, got {a.shape}")
    x = a.data
    if mask is None:
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError(f"mask shape {mask.shape} != logits shape {x.shape}")
        if not mask.any(axis=1).all():
            raise ValueError("softmax_rows: a row is fully masked")
        z = np.where(mask, x, -np.inf)
        z = z - z.max(axis=1, keepdims=True)
        e = np.where(mask, np.exp(np.where(mask, z, 0.0)), 0.0)
    out = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return _result("softmax", out, (a,), back)


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target] for a single row of K logits."""
    logits = as_tensor(logits)
    z = logits.data.reshape(-1)
    if not 0 <= target < z.size:
        raise IndexError(f"target {target} out of range for {z.size} classes")
    shifted = z - z.max()
    lse = np.log(np.exp(shifted).sum())
    p = np.exp(shifted - lse)
    loss = np.array(lse - shifted[target])
    shape = logits.shape

    def back(g):
        d = p.copy()
        d[target] -= 1.0
        return ((float(g) * d).reshape(shape),)

    return _result("cross_entropy", loss, (logits,), back)


# ------------------------------------------------------------ sparse & misc


def spmm(x: Tensor, src, dst, coef, n_out: int) -> Tensor:
    """out[dst[e]] += coef[e] * x[src[e]] for every entry e.

    Only listed entries contribute, so a row of the result depends on exactly
    the rows of ``x`` it is connected to.
    """
    x = as_tensor(x)
    src = np.asarray(src, dtype=np.intp)
    dst = np.asarray(dst, dtype=np.intp)
    coef = np.asarray(coef, dtype=np.float64)
    if not (src.shape == dst.shape == coef.shape):
        raise ShapeError("spmm: src, dst and coef must align")
    if src.size and (src.min() < 0 or src.max() >= x.shape[0]
                     or dst.min() < 0 or dst.max() >= n_out):
        raise IndexError("spmm: node index out of range")
    out = np.zeros((n_out, x.shape[1]))
    np.add.at(out, dst, coef[:, None] * x.data[src])

    def back(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, src, coef[:, None] * g[dst])
        return (gx,)

    return _result("spmm", out, (x,), back)


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    a = as_tensor(a)
    if p <= 0.0:
        return a
    keep = (rng.random(a.shape) >= p) / (1.0 - p)
    return _result("dropout", a.data * keep, (a,), lambda g: (g * keep,))
