"""Dense float64 tensors with a reverse-mode tape.

Operations record themselves on the active :class:`Tape` whenever one of
their inputs requires a gradient.  Outside a ``with Tape():`` block nothing
is recorded, which is how inference runs.

    with Tape() as tape:
        loss = tensor_sum(activate("sigmoid", x))
    tape.backward(loss)
"""

from __future__ import annotations

import contextvars
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, EmptySequenceError

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "constant",
    "affine",
    "activate",
    "sigmoid",
    "tanh",
    "relu",
    "add",
    "sub",
    "hadamard",
    "scale",
    "matmul",
    "matvec",
    "swap_last",
    "concat",
    "stack",
    "take",
    "gather_time",
    "embedding",
    "softmax_rows",
    "masked_mean",
    "masked_max",
    "tensor_sum",
    "weighted_sum",
    "nll",
]


class Tensor:
    """An n-dimensional float64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def zero_grad(self) -> None:
        self.grad = None

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return hadamard(self, other)

    def __rmul__(self, other):
        return hadamard(other, self)

    def __neg__(self):
        return hadamard(self, -1.0)


def constant(data) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data)


@dataclass
class _Record:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


_ACTIVE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "snelsd_active_tape", default=None
)


class Tape:
    """Ordered log of differentiable operations.

    Records are appended in execution order, so the list is already
    topologically sorted and the backward pass simply walks it in reverse.
    A tape belongs to the worker that created it.
    """

    def __init__(self):
        self.records: list[_Record] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


def _record(out: Tensor, inputs: Sequence[Tensor], fn) -> Tensor:
    tape = _ACTIVE.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.records.append(_Record(out, tuple(inputs), fn))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate ``grad`` on every leaf that ``loss`` depends on.

    Gradients accumulate into existing ``grad`` arrays, so a parameter used
    on several paths (or across several calls) receives the sum.
    """
    if loss.data.size != 1 or loss.ndim != 0:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    produced = {id(r.out) for r in tape.records}
    if id(loss) not in produced:
        if loss.requires_grad:
            _accumulate(loss, np.ones(()))
            return
        raise ContractError("loss was not recorded on this tape")

    pending: dict[int, np.ndarray] = {id(loss): np.ones(())}
    for rec in reversed(tape.records):
        g = pending.pop(id(rec.out), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in produced:
                if key in pending:
                    pending[key] = pending[key] + gi
                else:
                    pending[key] = gi
            else:
                _accumulate(inp, gi)


def _accumulate(leaf: Tensor, g: np.ndarray) -> None:
    g = np.broadcast_to(g, leaf.shape)
    if leaf.grad is None:
        leaf.grad = np.array(g, dtype=np.float64)
    else:
        leaf.grad = leaf.grad + g


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_same(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


# -- elementwise -----------------------------------------------------------


def add(a, b) -> Tensor:
    """Elementwise sum; also accepts a python scalar or a bias row."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        scalar = a.ndim == 0 or b.ndim == 0
        bias = b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]
        if not (scalar or bias):
            raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data + b.data)
    sa, sb = a.shape, b.shape

    def fn(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _record(out, (a, b), fn)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise DimensionError(f"sub: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data - b.data)
    sa, sb = a.shape, b.shape

    def fn(g):
        return _unbroadcast(g, sa), -_unbroadcast(g, sb)

    return _record(out, (a, b), fn)


def hadamard(a, b) -> Tensor:
    """Elementwise product of equal shapes (a python scalar also works)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise DimensionError(f"hadamard: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data * b.data)
    sa, sb = a.shape, b.shape

    def fn(g):
        return _unbroadcast(g * b.data, sa), _unbroadcast(g * a.data, sb)

    return _record(out, (a, b), fn)


def scale(x, s) -> Tensor:
    """Multiply each vector along the last axis of ``x`` by a scalar from ``s``.

    ``s`` has the leading (batch) shape; ``x`` may lack the batch axes, in
    which case it is broadcast across them (used for the learned constant
    blended into every row).
    """
    x, s = _as_tensor(x), _as_tensor(s)
    if x.ndim == 0:
        raise DimensionError("scale: x needs at least one axis")
    lead = x.shape[:-1]
    if lead and lead != s.shape:
        raise DimensionError(f"scale: shapes {x.shape} and {s.shape} do not conform")
    out = Tensor(x.data * s.data[..., None])
    sx = x.shape

    def fn(g):
        gx = _unbroadcast(g * s.data[..., None], sx)
        gs = (g * x.data).sum(axis=-1)
        return gx, gs

    return _record(out, (x, s), fn)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split on sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    y = _sigmoid(np.atleast_1d(x.data)).reshape(x.shape)
    out = Tensor(y)
    return _record(out, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    y = np.tanh(x.data)
    out = Tensor(y)
    return _record(out, (x,), lambda g: (g * (1.0 - y * y),))


def relu(x) -> Tensor:
    x = _as_tensor(x)
    on = x.data > 0
    out = Tensor(np.where(on, x.data, 0.0))
    return _record(out, (x,), lambda g: (g * on,))


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def activate(kind: str, x) -> Tensor:
    try:
        return _ACTIVATIONS[kind](x)
    except KeyError:
        raise ContractError(f"unknown activation {kind!r}") from None


# -- linear algebra --------------------------------------------------------


def affine(x, W, b=None) -> Tensor:
    """``x @ W.T + b`` over the last axis of ``x``; leading axes are batch."""
    x, W = _as_tensor(x), _as_tensor(W)
    if W.ndim != 2 or x.ndim == 0 or x.shape[-1] != W.shape[1]:
        raise DimensionError(f"affine: x {x.shape} does not fit W {W.shape}")
    if b is not None:
        b = _as_tensor(b)
        if b.shape != (W.shape[0],):
            raise DimensionError(f"affine: bias {b.shape} does not fit W {W.shape}")
    y = x.data @ W.data.T
    if b is not None:
        y = y + b.data
    out = Tensor(y)
    xshape = x.shape

    def fn(g):
        g2 = g.reshape(-1, W.shape[0])
        x2 = x.data.reshape(-1, W.shape[1])
        gx = (g2 @ W.data).reshape(xshape)
        gW = g2.T @ x2
        if b is None:
            return gx, gW
        return gx, gW, g2.sum(axis=0)

    inputs = (x, W) if b is None else (x, W, b)
    return _record(out, inputs, fn)


def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes (equal batch shapes)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim != a.ndim or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    out = Tensor(a.data @ b.data)

    def fn(g):
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return _record(out, (a, b), fn)


def matvec(z, u) -> Tensor:
    """Inner product of every vector along the last axis of ``z`` with ``u``."""
    z, u = _as_tensor(z), _as_tensor(u)
    if u.ndim != 1 or z.ndim == 0 or z.shape[-1] != u.shape[0]:
        raise DimensionError(f"matvec: shapes {z.shape} and {u.shape} do not conform")
    out = Tensor(z.data @ u.data)

    def fn(g):
        gz = g[..., None] * u.data
        gu = (g[..., None] * z.data).reshape(-1, u.shape[0]).sum(axis=0)
        return gz, gu

    return _record(out, (z, u), fn)


def swap_last(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.swapaxes(x.data, -1, -2))
    return _record(out, (x,), lambda g: (np.swapaxes(g, -1, -2),))


# -- structural ------------------------------------------------------------


def concat(parts: Sequence, axis: int = -1) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat: nothing to concatenate")
    ref = parts[0]
    ax = axis % ref.ndim if ref.ndim else 0
    for p in parts[1:]:
        if p.ndim != ref.ndim or p.shape[:ax] + p.shape[ax + 1:] != ref.shape[:ax] + ref.shape[ax + 1:]:
            raise DimensionError(f"concat: shapes {ref.shape} and {p.shape} do not conform")
    if len(parts) == 1:
        return parts[0]
    out = Tensor(np.concatenate([p.data for p in parts], axis=ax))
    bounds = np.cumsum([p.shape[ax] for p in parts])[:-1]

    def fn(g):
        return np.split(g, bounds, axis=ax)

    return _record(out, parts, fn)


def stack(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    for p in parts[1:]:
        if p.shape != parts[0].shape:
            raise DimensionError(f"stack: shapes {parts[0].shape} and {p.shape} differ")
    out = Tensor(np.stack([p.data for p in parts], axis=axis))

    def fn(g):
        return [np.take(g, i, axis=axis) for i in range(len(parts))]

    return _record(out, parts, fn)


def take(x, index: int, axis: int = 0) -> Tensor:
    """Select one slice along ``axis``, dropping that axis."""
    x = _as_tensor(x)
    out = Tensor(np.take(x.data, index, axis=axis))
    shape = x.shape

    def fn(g):
        full = np.zeros(shape)
        sl = [slice(None)] * len(shape)
        sl[axis] = index
        full[tuple(sl)] = g
        return (full,)

    return _record(out, (x,), fn)


def gather_time(x, index: np.ndarray) -> Tensor:
    """``out[b, t] = x[b, index[b, t]]`` for a ``[B, l, d]`` tensor."""
    x = _as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    if x.ndim != 3 or index.shape != x.shape[:2]:
        raise DimensionError(f"gather_time: x {x.shape} and index {index.shape} do not conform")
    rows = np.arange(x.shape[0])[:, None]
    out = Tensor(x.data[rows, index])
    shape = x.shape

    def fn(g):
        full = np.zeros(shape)
        np.add.at(full, (rows, index), g)
        return (full,)

    return _record(out, (x,), fn)


def embedding(table, ids) -> Tensor:
    """Row lookup: result has shape ``ids.shape + (dim,)``."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"embedding: table must be 2-D, got {table.shape}")
    out = Tensor(table.data[ids])
    shape = table.shape

    def fn(g):
        full = np.zeros(shape)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, shape[1]))
        return (full,)

    return _record(out, (table,), fn)


# -- normalisation and pooling ---------------------------------------------


def softmax_rows(e, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis, ignoring entries whose mask is 0.

    Masked entries receive probability exactly 0.  The row maximum is
    subtracted before exponentiation.
    """
    e = _as_tensor(e)
    if mask is None:
        valid = np.ones(e.shape, dtype=bool)
    else:
        valid = np.broadcast_to(np.asarray(mask) > 0, e.shape)
    if not valid.any(axis=-1).all():
        raise EmptySequenceError("softmax_rows: a row has no valid entries")
    z = np.where(valid, e.data, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    ez = np.where(valid, np.exp(z), 0.0)
    p = ez / ez.sum(axis=-1, keepdims=True)
    out = Tensor(p)

    def fn(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _record(out, (e,), fn)


def _pool_mask(seq: Tensor, mask, op: str) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if seq.ndim < 2 or mask.shape != seq.shape[:-1]:
        raise DimensionError(f"{op}: sequence {seq.shape} and mask {mask.shape} do not conform")
    if not ((mask == 0) | (mask == 1)).all():
        raise ContractError(f"{op}: mask entries must be 0 or 1")
    if (mask.sum(axis=-1) == 0).any():
        raise EmptySequenceError(f"{op}: mask selects no positions")
    return mask


def masked_mean(seq, mask) -> Tensor:
    """Mean over the time axis (second to last) counting only valid positions."""
    seq = _as_tensor(seq)
    mask = _pool_mask(seq, mask, "masked_mean")
    count = mask.sum(axis=-1)
    w = mask / count[..., None]
    out = Tensor((seq.data * w[..., None]).sum(axis=-2))

    def fn(g):
        return (g[..., None, :] * w[..., None],)

    return _record(out, (seq,), fn)


def masked_max(seq, mask) -> Tensor:
    """Max over the time axis restricted to valid positions.

    Ties resolve to the lowest position so the gradient route is fixed.
    """
    seq = _as_tensor(seq)
    mask = _pool_mask(seq, mask, "masked_max")
    z = np.where(mask[..., None] > 0, seq.data, -np.inf)
    arg = np.argmax(z, axis=-2)
    out = Tensor(np.take_along_axis(seq.data, arg[..., None, :], axis=-2)[..., 0, :])
    shape = seq.shape

    def fn(g):
        full = np.zeros(shape)
        np.put_along_axis(full, arg[..., None, :], g[..., None, :], axis=-2)
        return (full,)

    return _record(out, (seq,), fn)


# -- reductions and losses -------------------------------------------------


def tensor_sum(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.sum())
    shape = x.shape
    return _record(out, (x,), lambda g: (np.broadcast_to(g, shape),))


def weighted_sum(x, w: np.ndarray) -> Tensor:
    """``sum(x * w)`` for a constant weight array ``w``."""
    x = _as_tensor(x)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != x.shape:
        raise DimensionError(f"weighted_sum: shapes {x.shape} and {w.shape} differ")
    out = Tensor((x.data * w).sum())
    return _record(out, (x,), lambda g: (g * w,))


def nll(probs, labels, floor: float = 1e-12) -> Tensor:
    """Mean negative log-probability of the labelled classes.

    ``probs`` is ``[k]`` with a scalar label or ``[B, k]`` with ``B`` labels.
    Probabilities are clamped at ``floor`` before the log.
    """
    probs = _as_tensor(probs)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim not in (1, 2) or labels.shape != probs.shape[:-1]:
        raise DimensionError(f"nll: probs {probs.shape} and labels {labels.shape} do not conform")
    k = probs.shape[-1]
    if ((labels < 0) | (labels >= k)).any():
        raise ContractError(f"nll: label outside 0..{k - 1}")
    p2 = probs.data.reshape(-1, k)
    lab = labels.reshape(-1)
    rows = np.arange(lab.size)
    picked = p2[rows, lab]
    clamped = np.maximum(picked, floor)
    n = lab.size
    out = Tensor(-np.log(clamped).mean())

    def fn(g):
        full = np.zeros_like(p2)
        full[rows, lab] = np.where(picked > floor, -g / (clamped * n), 0.0)
        return (full.reshape(probs.shape),)

    return _record(out, (probs,), fn)
