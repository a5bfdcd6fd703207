"""Single-step recurrent units.

Every step function works on one vector (``[d]``) or on a batch of row
vectors (``[B, d]``); the batch axis is simply carried through.  Boundary
indicators are scalars, or ``[B]`` arrays in batch mode.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import ContractError
from .tensor import Tensor, activate, add, affine, concat, hadamard, matvec, scale, sigmoid, tanh

__all__ = [
    "LstmParams",
    "TreeLstmParams",
    "DetectParams",
    "DescribeParams",
    "lstm_step",
    "treelstm_node",
    "detect_step",
    "describe_step",
    "uniform_init",
]


def uniform_init(rng: np.random.Generator, rows: int, cols: int) -> Tensor:
    bound = np.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True)


def _zeros(n: int) -> Tensor:
    return Tensor(np.zeros(n), requires_grad=True)


class _Bundle:
    """Mixin giving dataclass parameter bundles a flat ``name -> Tensor`` view."""

    def named(self, prefix: str = ""):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, _Bundle):
                yield from value.named(f"{prefix}{f.name}.")
            else:
                yield f"{prefix}{f.name}", value

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named()]


@dataclass
class LstmParams(_Bundle):
    W_i: Tensor
    W_f: Tensor
    W_o: Tensor
    W_c: Tensor
    U_i: Tensor
    U_f: Tensor
    U_o: Tensor
    U_c: Tensor
    b_i: Tensor
    b_f: Tensor
    b_o: Tensor
    b_c: Tensor

    @classmethod
    def init(cls, d_in: int, d_h: int, rng: np.random.Generator) -> "LstmParams":
        W = {f"W_{g}": uniform_init(rng, d_h, d_in) for g in "ifoc"}
        U = {f"U_{g}": uniform_init(rng, d_h, d_h) for g in "ifoc"}
        b = {f"b_{g}": _zeros(d_h) for g in "ifoc"}
        return cls(**W, **U, **b)

    @property
    def d_in(self) -> int:
        return self.W_i.shape[1]

    @property
    def d_h(self) -> int:
        return self.W_i.shape[0]


@dataclass
class TreeLstmParams(_Bundle):
    W_i: Tensor
    W_f: Tensor
    W_o: Tensor
    W_c: Tensor
    U_iL: Tensor
    U_iR: Tensor
    U_fLL: Tensor
    U_fLR: Tensor
    U_fRL: Tensor
    U_fRR: Tensor
    U_oL: Tensor
    U_oR: Tensor
    U_cL: Tensor
    U_cR: Tensor
    b_i: Tensor
    b_fL: Tensor
    b_fR: Tensor
    b_o: Tensor
    b_u: Tensor

    @classmethod
    def init(cls, d_in: int, d_h: int, rng: np.random.Generator) -> "TreeLstmParams":
        kw = {f"W_{g}": uniform_init(rng, d_h, d_in) for g in "ifoc"}
        for name in ("U_iL", "U_iR", "U_fLL", "U_fLR", "U_fRL", "U_fRR", "U_oL", "U_oR", "U_cL", "U_cR"):
            kw[name] = uniform_init(rng, d_h, d_h)
        for name in ("b_i", "b_fL", "b_fR", "b_o", "b_u"):
            kw[name] = _zeros(d_h)
        return cls(**kw)

    @property
    def d_in(self) -> int:
        return self.W_i.shape[1]

    @property
    def d_h(self) -> int:
        return self.W_i.shape[0]


@dataclass
class DetectParams(_Bundle):
    W_i0: Tensor
    W_f0: Tensor
    W_p0: Tensor
    U_i0: Tensor
    U_f0: Tensor
    U_p0: Tensor
    b_i0: Tensor
    b_f0: Tensor
    b_p0: Tensor
    W_p1: Tensor
    b_p1: Tensor
    u_r: Tensor

    def __post_init__(self):
        d_p, d_in = self.W_p1.shape
        if self.u_r.shape != (d_p + d_in,):
            raise ContractError(f"u_r must have length {d_p + d_in}, got {self.u_r.shape}")

    @classmethod
    def init(cls, d_in: int, d_p: int, rng: np.random.Generator) -> "DetectParams":
        kw = {}
        for g in "ifp":
            kw[f"W_{g}0"] = uniform_init(rng, d_p, d_in)
            kw[f"U_{g}0"] = uniform_init(rng, d_p, d_p)
            kw[f"b_{g}0"] = _zeros(d_p)
        kw["W_p1"] = uniform_init(rng, d_p, d_in)
        kw["b_p1"] = _zeros(d_p)
        kw["u_r"] = Tensor(uniform_init(rng, 1, d_p + d_in).data[0], requires_grad=True)
        return cls(**kw)

    @property
    def d_in(self) -> int:
        return self.W_p1.shape[1]

    @property
    def d_p(self) -> int:
        return self.W_p1.shape[0]


@dataclass
class DescribeParams(_Bundle):
    lstm: LstmParams
    p_star: Tensor

    def __post_init__(self):
        if self.p_star.shape != (self.lstm.d_in,):
            raise ContractError(
                f"p_star must have length {self.lstm.d_in}, got {self.p_star.shape}"
            )

    @classmethod
    def init(cls, d_p: int, d_h: int, rng: np.random.Generator) -> "DescribeParams":
        return cls(LstmParams.init(d_p, d_h, rng), _zeros(d_p))


def _gate(x, W, h, U, b, kind="sigmoid"):
    return activate(kind, add(affine(x, W, b), affine(h, U)))


def lstm_step(x_t, h_prev, c_prev, theta: LstmParams):
    """One step of a standard (peephole-free) LSTM; returns ``(h_t, c_t)``."""
    i = _gate(x_t, theta.W_i, h_prev, theta.U_i, theta.b_i)
    f = _gate(x_t, theta.W_f, h_prev, theta.U_f, theta.b_f)
    o = _gate(x_t, theta.W_o, h_prev, theta.U_o, theta.b_o)
    u = _gate(x_t, theta.W_c, h_prev, theta.U_c, theta.b_c, "tanh")
    c = add(hadamard(f, c_prev), hadamard(i, u))
    h = hadamard(o, tanh(c))
    return h, c


def treelstm_node(x_t, left, right, theta: TreeLstmParams, candidate: str = "sigmoid"):
    """Binary Tree-LSTM node from its input vector and two child ``(h, c)`` pairs.

    ``x_t`` is ``None`` (treated as zeros) at internal nodes.  ``candidate``
    selects the activation of the memory candidate: ``"sigmoid"`` by
    default, or ``"tanh"`` for the more common variant.
    """
    (hL, cL), (hR, cR) = left, right
    if x_t is None:
        x_t = Tensor(np.zeros(theta.d_in))

    def gate(W, UL, UR, b, kind="sigmoid"):
        return activate(kind, add(add(affine(x_t, W, b), affine(hL, UL)), affine(hR, UR)))

    i = gate(theta.W_i, theta.U_iL, theta.U_iR, theta.b_i)
    fL = gate(theta.W_f, theta.U_fLL, theta.U_fLR, theta.b_fL)
    fR = gate(theta.W_f, theta.U_fRL, theta.U_fRR, theta.b_fR)
    o = gate(theta.W_o, theta.U_oL, theta.U_oR, theta.b_o)
    u = gate(theta.W_c, theta.U_cL, theta.U_cR, theta.b_u, candidate)
    c = add(add(hadamard(fL, cL), hadamard(fR, cR)), hadamard(i, u))
    h = hadamard(o, tanh(c))
    return h, c


def _check_unit_interval(name: str, r) -> Tensor:
    r = r if isinstance(r, Tensor) else Tensor(r)
    if not np.all((r.data >= 0.0) & (r.data <= 1.0)):
        raise ContractError(f"{name} must lie in [0, 1]")
    return r


def detect_step(x_t, x_next, r_prev, p_prev, theta: DetectParams):
    """Detection unit: fuse continuation and fresh-chunk states, score a boundary.

    Returns ``(p_t, r_t)`` where ``r_t`` is the probability that a chunk
    ends after the current word.  ``x_next`` is the following word vector,
    or zeros after the last word.
    """
    r_prev = _check_unit_interval("r_prev", r_prev)
    i0 = _gate(x_t, theta.W_i0, p_prev, theta.U_i0, theta.b_i0)
    f0 = _gate(x_t, theta.W_f0, p_prev, theta.U_f0, theta.b_f0)
    cand = _gate(x_t, theta.W_p0, p_prev, theta.U_p0, theta.b_p0, "tanh")
    p0 = add(hadamard(f0, p_prev), hadamard(i0, cand))
    p1 = tanh(affine(x_t, theta.W_p1, theta.b_p1))
    p_t = add(scale(p0, 1.0 - r_prev), scale(p1, r_prev))
    # no bias term in the boundary score
    r_t = sigmoid(matvec(concat([p_t, x_next]), theta.u_r))
    return p_t, r_t


def describe_step(p_t, r_t, h_prev, c_prev, theta: DescribeParams):
    """Description unit: an LSTM step on the blend ``(1 - r) p* + r p_t``."""
    r_t = _check_unit_interval("r_t", r_t)
    m = add(scale(theta.p_star, 1.0 - r_t), scale(p_t, r_t))
    return lstm_step(m, h_prev, c_prev, theta.lstm)
