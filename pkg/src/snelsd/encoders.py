"""Sentence encoders assembled from the recurrent cells.

All sequential encoders take an embedded batch ``x`` of shape ``[B, l, d]``
whose padded rows are zero, plus a ``[B, l]`` 0/1 mask, and return an
:class:`EncoderOutput` with one state per token.  Recurrent state is
carried unchanged through padding and padded output rows are zero, so a
sentence encodes identically alone or inside a batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cells import (
    DescribeParams,
    DetectParams,
    LstmParams,
    TreeLstmParams,
    describe_step,
    detect_step,
    lstm_step,
    treelstm_node,
)
from .data import ParseTree, SequenceBatch
from .errors import ConfigError, DimensionError, EmptySequenceError, MalformedTreeError
from .tensor import Tensor, add, concat, embedding, gather_time, scale, stack, take

CHAIN_KINDS = {
    "lstm1": (1, False),
    "blstm1": (1, True),
    "lstm2": (2, False),
    "blstm2": (2, True),
}
ENCODER_KINDS = tuple(CHAIN_KINDS) + ("tree", "snelsd")
JOINT_KINDS = ("none", "word-embedding", "blstm1")


@dataclass
class ChunkTrace:
    """Boundary indicators of one sentence, one per token."""

    r: list[float]

    def __post_init__(self):
        if not all(0.0 < v < 1.0 for v in self.r):
            raise ValueError("boundary indicators must lie strictly inside (0, 1)")

    def __len__(self) -> int:
        return len(self.r)

    def boundaries(self, threshold: float = 0.9) -> list[int]:
        return [i for i, v in enumerate(self.r) if v > threshold]


@dataclass
class EncoderOutput:
    states: Tensor
    mask: np.ndarray
    chunk: Tensor | None = None
    parts: list["EncoderOutput"] = field(default_factory=list)

    def __post_init__(self):
        if self.states.shape[:2] != self.mask.shape:
            raise DimensionError(
                f"states {self.states.shape} and mask {self.mask.shape} do not conform"
            )

    @property
    def width(self) -> int:
        return self.states.shape[-1]

    def chunk_traces(self) -> list[ChunkTrace]:
        if self.chunk is None:
            return []
        lengths = self.mask.sum(axis=1).astype(int)
        return [ChunkTrace([float(v) for v in row[:n]]) for row, n in zip(self.chunk.data, lengths)]


def embed(batch: SequenceBatch, table: Tensor, dropout: Callable | None = None) -> Tensor:
    """Look up word vectors and zero the padded rows."""
    x = embedding(table, batch.ids)
    if dropout is not None:
        x = dropout(x)
    return scale(x, batch.mask)


def _carry(new: Tensor, old: Tensor, m: np.ndarray) -> Tensor:
    return add(scale(new, m), scale(old, 1.0 - m))


def run_lstm(x: Tensor, mask: np.ndarray, theta: LstmParams) -> Tensor:
    B, L, _ = x.shape
    h = Tensor(np.zeros((B, theta.d_h)))
    c = Tensor(np.zeros((B, theta.d_h)))
    outs = []
    for t in range(L):
        h_new, c_new = lstm_step(take(x, t, axis=1), h, c, theta)
        m = mask[:, t]
        if m.all():
            h, c = h_new, c_new
            outs.append(h_new)
        else:
            h, c = _carry(h_new, h, m), _carry(c_new, c, m)
            outs.append(scale(h_new, m))
    return stack(outs, axis=1)


def reverse_index(mask: np.ndarray) -> np.ndarray:
    """Per-row time index that reverses the valid prefix and fixes padding."""
    B, L = mask.shape
    lengths = mask.sum(axis=1).astype(int)
    t = np.arange(L)[None, :]
    return np.where(t < lengths[:, None], lengths[:, None] - 1 - t, t)


@dataclass
class ChainLayer:
    forward: LstmParams
    backward: LstmParams | None = None

    @property
    def d_out(self) -> int:
        return self.forward.d_h * (2 if self.backward is not None else 1)


def encode_chain(x: Tensor, mask: np.ndarray, layers: list[ChainLayer]) -> EncoderOutput:
    """Stacked (bi)directional LSTM; each layer reads the one below."""
    if x.ndim != 3 or x.shape[:2] != mask.shape:
        raise DimensionError(f"input {x.shape} and mask {mask.shape} do not conform")
    if (mask.sum(axis=1) == 0).any():
        raise EmptySequenceError("empty sentence")
    h = x
    for layer in layers:
        fwd = run_lstm(h, mask, layer.forward)
        if layer.backward is None:
            h = fwd
            continue
        idx = reverse_index(mask)
        bwd = gather_time(run_lstm(gather_time(h, idx), mask, layer.backward), idx)
        h = concat([fwd, bwd], axis=-1)
    return EncoderOutput(h, mask)


def encode_snelsd(
    x: Tensor,
    mask: np.ndarray,
    detect: DetectParams,
    describe: DescribeParams,
    clamp_r: float | None = None,
) -> EncoderOutput:
    """Detection layer followed by description layer.

    Starts from ``r_0 = 1`` and ``p_0 = 0`` so the first word opens a chunk;
    the word after the last one is the zero vector.  ``clamp_r`` overrides
    every boundary indicator with a constant (a diagnostic).
    """
    if x.ndim != 3 or x.shape[:2] != mask.shape:
        raise DimensionError(f"input {x.shape} and mask {mask.shape} do not conform")
    if (mask.sum(axis=1) == 0).any():
        raise EmptySequenceError("empty sentence")
    B, L, d = x.shape
    r = Tensor(np.ones(B))
    p = Tensor(np.zeros((B, detect.d_p)))
    h = Tensor(np.zeros((B, describe.lstm.d_h)))
    c = Tensor(np.zeros((B, describe.lstm.d_h)))
    zeros_next = Tensor(np.zeros((B, d)))
    states, trace = [], []
    for t in range(L):
        x_next = scale(take(x, t + 1, axis=1), mask[:, t + 1]) if t + 1 < L else zeros_next
        p_new, r_new = detect_step(take(x, t, axis=1), x_next, r, p, detect)
        if clamp_r is not None:
            r_new = Tensor(np.full(B, float(clamp_r)))
        h_new, c_new = describe_step(p_new, r_new, h, c, describe)
        m = mask[:, t]
        if m.all():
            p, r, h, c = p_new, r_new, h_new, c_new
            states.append(h_new)
            trace.append(r_new)
        else:
            p, h, c = _carry(p_new, p, m), _carry(h_new, h, m), _carry(c_new, c, m)
            r = r_new * Tensor(m) + r * Tensor(1.0 - m)
            states.append(scale(h_new, m))
            trace.append(r_new * Tensor(m))
    return EncoderOutput(stack(states, axis=1), mask, stack(trace, axis=1))


def _tree_states(tree: ParseTree, leaves: list[Tensor], theta: TreeLstmParams, candidate: str, out: list):
    if tree.is_leaf:
        zero = Tensor(np.zeros(theta.d_h))
        return treelstm_node(leaves.pop(0), (zero, zero), (zero, zero), theta, candidate)
    if tree.left is None or tree.right is None:
        raise MalformedTreeError("internal node must have exactly two children")
    left = _tree_states(tree.left, leaves, theta, candidate, out)
    right = _tree_states(tree.right, leaves, theta, candidate, out)
    h, c = treelstm_node(None, left, right, theta, candidate)
    out.append(h)
    return h, c


def encode_tree(
    trees: list[ParseTree],
    leaf_ids: list[list[int]],
    table: Tensor,
    theta: TreeLstmParams,
    root_only: bool = False,
    candidate: str = "sigmoid",
    dropout: Callable | None = None,
) -> EncoderOutput:
    """Bottom-up Tree-LSTM.

    Returns the hidden states of all internal nodes in post-order, padded
    across the batch, or just the root state when ``root_only`` is set.
    """
    per_tree = []
    for tree, ids in zip(trees, leaf_ids):
        tree.validate()
        if not root_only and tree.is_leaf:
            raise MalformedTreeError("tree needs at least two leaves")
        vecs = embedding(table, ids)
        if dropout is not None:
            vecs = dropout(vecs)
        leaves = [take(vecs, i, axis=0) for i in range(len(ids))]
        internal: list[Tensor] = []
        root_h, _ = _tree_states(tree, leaves, theta, candidate, internal)
        per_tree.append([root_h] if root_only else internal)
    n = max(len(s) for s in per_tree)
    zero = Tensor(np.zeros(theta.d_h))
    mask = np.zeros((len(per_tree), n))
    rows = []
    for b, s in enumerate(per_tree):
        mask[b, : len(s)] = 1.0
        rows.append(stack(s + [zero] * (n - len(s)), axis=0))
    return EncoderOutput(stack(rows, axis=0), mask)


def encode_joint(primary: EncoderOutput, aux) -> EncoderOutput:
    """Per-position concatenation with word vectors or another encoder's states."""
    aux_out = aux if isinstance(aux, EncoderOutput) else EncoderOutput(aux, primary.mask)
    if aux_out.states.shape[:2] != primary.states.shape[:2]:
        raise DimensionError(
            f"joint: primary {primary.states.shape} and auxiliary {aux_out.states.shape} "
            "cover different positions"
        )
    return EncoderOutput(
        concat([primary.states, aux_out.states], axis=-1),
        primary.mask,
        primary.chunk,
        parts=[primary, aux_out],
    )


class SentenceEncoder:
    """Parameters and dispatch for one encoder configuration.

    ``kind`` is one of ``lstm1, blstm1, lstm2, blstm2, tree, snelsd``;
    ``joint`` adds a per-position concatenation with the word vectors or
    with a one-layer BLSTM.
    """

    def __init__(
        self,
        kind: str,
        d_in: int,
        d_h: int,
        rng: np.random.Generator,
        joint: str = "none",
        tree_candidate: str = "sigmoid",
    ):
        if kind not in ENCODER_KINDS:
            raise ConfigError(f"unknown encoder {kind!r}")
        if joint not in JOINT_KINDS:
            raise ConfigError(f"unknown joint mode {joint!r}")
        if joint != "none" and kind == "tree":
            raise ConfigError("the tree encoder cannot run in joint mode")
        self.kind, self.joint = kind, joint
        self.d_in, self.d_h = d_in, d_h
        self.tree_candidate = tree_candidate
        self.chain: list[ChainLayer] = []
        self.tree: TreeLstmParams | None = None
        self.detect: DetectParams | None = None
        self.describe: DescribeParams | None = None
        self.aux: list[ChainLayer] = []
        if kind in CHAIN_KINDS:
            layers, bi = CHAIN_KINDS[kind]
            self.chain = _chain_layers(d_in, d_h, layers, bi, rng)
        elif kind == "tree":
            self.tree = TreeLstmParams.init(d_in, d_h, rng)
        else:
            self.detect = DetectParams.init(d_in, d_h, rng)
            self.describe = DescribeParams.init(d_h, d_h, rng)
        if joint == "blstm1":
            self.aux = _chain_layers(d_in, d_h, 1, True, rng)

    @property
    def d_out(self) -> int:
        if self.kind in CHAIN_KINDS:
            base = self.chain[-1].d_out
        else:
            base = self.d_h
        extra = {"none": 0, "word-embedding": self.d_in, "blstm1": 2 * self.d_h}[self.joint]
        return base + extra

    @property
    def has_chunks(self) -> bool:
        return self.kind == "snelsd"

    def named(self, prefix: str = ""):
        for i, layer in enumerate(self.chain):
            yield from layer.forward.named(f"{prefix}layer{i}.fwd.")
            if layer.backward is not None:
                yield from layer.backward.named(f"{prefix}layer{i}.bwd.")
        if self.tree is not None:
            yield from self.tree.named(f"{prefix}tree.")
        if self.detect is not None:
            yield from self.detect.named(f"{prefix}detect.")
            yield from self.describe.named(f"{prefix}describe.")
        for i, layer in enumerate(self.aux):
            yield from layer.forward.named(f"{prefix}aux{i}.fwd.")
            yield from layer.backward.named(f"{prefix}aux{i}.bwd.")

    def encode(
        self,
        batch: SequenceBatch,
        table: Tensor,
        dropout: Callable | None = None,
        root_only: bool = False,
        clamp_r: float | None = None,
    ) -> EncoderOutput:
        if self.kind == "tree":
            if batch.trees is None:
                raise ConfigError("the tree encoder needs parse trees in the input")
            return encode_tree(
                batch.trees, batch.leaf_ids, table, self.tree, root_only, self.tree_candidate, dropout
            )
        x = embed(batch, table, dropout)
        if self.kind == "snelsd":
            out = encode_snelsd(x, batch.mask, self.detect, self.describe, clamp_r)
        else:
            out = encode_chain(x, batch.mask, self.chain)
        if self.joint == "word-embedding":
            return encode_joint(out, x)
        if self.joint == "blstm1":
            return encode_joint(out, encode_chain(x, batch.mask, self.aux))
        return out


def _chain_layers(d_in: int, d_h: int, layers: int, bidirectional: bool, rng) -> list[ChainLayer]:
    if layers not in (1, 2):
        raise ConfigError("chain encoders have 1 or 2 layers")
    out = []
    width = d_in
    for _ in range(layers):
        fwd = LstmParams.init(width, d_h, rng)
        bwd = LstmParams.init(width, d_h, rng) if bidirectional else None
        out.append(ChainLayer(fwd, bwd))
        width = out[-1].d_out
    return out
