"""Task heads: attention-based inference model for sentence pairs and a
pooled classifier for single sentences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cells import uniform_init
from .encoders import ChainLayer, EncoderOutput, _chain_layers, encode_chain
from .errors import ContractError, DimensionError, EmptySequenceError
from .tensor import (
    Tensor,
    affine,
    concat,
    hadamard,
    masked_max,
    masked_mean,
    matmul,
    relu,
    softmax_rows,
    sub,
    swap_last,
    tanh,
)

N_NLI_CLASSES = 3
N_SA_CLASSES = 5


def _zeros(n: int) -> Tensor:
    return Tensor(np.zeros(n), requires_grad=True)


@dataclass
class Mlp:
    """tanh hidden layer followed by a softmax output layer."""

    W_h: Tensor
    b_h: Tensor
    W_out: Tensor
    b_out: Tensor

    @classmethod
    def init(cls, d_in: int, d_hidden: int, n_classes: int, rng) -> "Mlp":
        return cls(
            uniform_init(rng, d_hidden, d_in),
            _zeros(d_hidden),
            uniform_init(rng, n_classes, d_hidden),
            _zeros(n_classes),
        )

    def named(self, prefix: str = ""):
        for name in ("W_h", "b_h", "W_out", "b_out"):
            yield prefix + name, getattr(self, name)

    def __call__(self, v: Tensor, dropout: Callable | None = None) -> Tensor:
        if dropout is not None:
            v = dropout(v)
        hidden = tanh(affine(v, self.W_h, self.b_h))
        return softmax_rows(affine(hidden, self.W_out, self.b_out))


def soft_align(a_bar: Tensor, b_bar: Tensor, mask_a: np.ndarray, mask_b: np.ndarray):
    """Dot-product attention in both directions.

    ``a_bar`` is ``[B, n_a, d]`` and ``b_bar`` is ``[B, n_b, d]``.  Each
    premise position attends over the valid hypothesis positions and vice
    versa.  Returns ``(a_tilde, b_tilde)`` with the shapes of the inputs.
    """
    if a_bar.shape[-1] != b_bar.shape[-1] or a_bar.shape[0] != b_bar.shape[0]:
        raise DimensionError(f"soft_align: shapes {a_bar.shape} and {b_bar.shape} do not conform")
    if (mask_a.sum(axis=-1) == 0).any() or (mask_b.sum(axis=-1) == 0).any():
        raise EmptySequenceError("soft_align: a sentence has no valid positions")
    e = matmul(a_bar, swap_last(b_bar))
    w_a = softmax_rows(e, mask_b[:, None, :])
    w_b = softmax_rows(swap_last(e), mask_a[:, None, :])
    return matmul(w_a, b_bar), matmul(w_b, a_bar)


def inference_collect(bar: Tensor, tilde: Tensor) -> Tensor:
    """``[bar; tilde; bar - tilde; bar * tilde]`` at each position."""
    if bar.shape != tilde.shape:
        raise DimensionError(f"inference_collect: shapes {bar.shape} and {tilde.shape} differ")
    return concat([bar, tilde, sub(bar, tilde), hadamard(bar, tilde)], axis=-1)


def pool(states: Tensor, mask: np.ndarray) -> tuple[Tensor, Tensor]:
    return masked_mean(states, mask), masked_max(states, mask)


class NliHead:
    """Alignment, inference collection, BLSTM composition, pooling, MLP.

    ``reduce_dim`` inserts a ReLU projection of the collected features
    before composition.  With ``late_joint_widths`` the two halves of a joint
    encoder are aligned and collected separately and only concatenated
    after that projection (which therefore must be set).
    """

    def __init__(
        self,
        d_enc: int,
        d_compose: int,
        rng: np.random.Generator,
        d_mlp: int | None = None,
        reduce_dim: int | None = None,
        late_joint_widths: tuple[int, ...] | None = None,
    ):
        self.late_joint_widths = late_joint_widths
        if late_joint_widths is not None and not reduce_dim:
            raise ContractError("late joint combination needs a reduction width")
        widths = late_joint_widths or (d_enc,)
        self.reduce: list[tuple[Tensor, Tensor]] = []
        if reduce_dim:
            self.reduce = [(uniform_init(rng, reduce_dim, 4 * w), _zeros(reduce_dim)) for w in widths]
            d_collected = reduce_dim * len(widths)
        else:
            d_collected = 4 * d_enc
        self.compose: list[ChainLayer] = _chain_layers(d_collected, d_compose, 1, True, rng)
        d_v = 4 * self.compose[-1].d_out
        self.mlp = Mlp.init(d_v, d_mlp or d_collected, N_NLI_CLASSES, rng)

    def named(self, prefix: str = ""):
        for i, (W, b) in enumerate(self.reduce):
            yield f"{prefix}reduce{i}.W", W
            yield f"{prefix}reduce{i}.b", b
        layer = self.compose[0]
        yield from layer.forward.named(f"{prefix}compose.fwd.")
        yield from layer.backward.named(f"{prefix}compose.bwd.")
        yield from self.mlp.named(f"{prefix}mlp.")

    def _collect(self, premise: EncoderOutput, hypothesis: EncoderOutput):
        if self.late_joint_widths is not None:
            pairs = list(zip(premise.parts, hypothesis.parts))
            if len(pairs) != len(self.reduce):
                raise ContractError("late joint combination needs a joint encoder output")
        else:
            pairs = [(premise, hypothesis)]
        m_a, m_b = [], []
        for k, (pa, hb) in enumerate(pairs):
            a_tilde, b_tilde = soft_align(pa.states, hb.states, pa.mask, hb.mask)
            ca = inference_collect(pa.states, a_tilde)
            cb = inference_collect(hb.states, b_tilde)
            if self.reduce:
                W, b = self.reduce[k]
                ca, cb = relu(affine(ca, W, b)), relu(affine(cb, W, b))
            m_a.append(ca)
            m_b.append(cb)
        return concat(m_a, axis=-1), concat(m_b, axis=-1)

    def __call__(self, premise: EncoderOutput, hypothesis: EncoderOutput, dropout=None) -> Tensor:
        return nli_forward(premise, hypothesis, self, dropout)


def nli_forward(premise: EncoderOutput, hypothesis: EncoderOutput, head: NliHead, dropout=None) -> Tensor:
    """Class probabilities ``[B, 3]`` for a batch of encoded sentence pairs."""
    m_a, m_b = head._collect(premise, hypothesis)
    v1 = encode_chain(m_a, premise.mask, head.compose).states
    v2 = encode_chain(m_b, hypothesis.mask, head.compose).states
    v1_ave, v1_max = pool(v1, premise.mask)
    v2_ave, v2_max = pool(v2, hypothesis.mask)
    v = concat([v1_ave, v2_ave, v1_max, v2_max], axis=-1)
    return head.mlp(v, dropout)


class SaHead:
    """Mean and max pooling of the sentence states into a 5-way MLP."""

    def __init__(self, d_enc: int, rng: np.random.Generator, d_mlp: int | None = None):
        self.mlp = Mlp.init(2 * d_enc, d_mlp or d_enc, N_SA_CLASSES, rng)

    def named(self, prefix: str = ""):
        yield from self.mlp.named(f"{prefix}mlp.")

    def __call__(self, sentence: EncoderOutput, dropout=None) -> Tensor:
        return sa_forward(sentence, self, dropout)


def sa_forward(sentence: EncoderOutput, head: SaHead, dropout=None) -> Tensor:
    """Class probabilities ``[B, 5]`` for a batch of encoded sentences."""
    v_ave, v_max = pool(sentence.states, sentence.mask)
    return head.mlp(concat([v_ave, v_max], axis=-1), dropout)
