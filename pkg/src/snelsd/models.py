"""Full task models: embedding table + sentence encoder + task head."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .config import RunConfig
from .data import NliBatch, SaBatch, SequenceBatch
from .encoders import EncoderOutput, SentenceEncoder
from .heads import NliHead, SaHead
from .optim import dropout as apply_dropout
from .tensor import Tensor


class _Model:
    config: RunConfig
    embedding: Tensor
    encoder: SentenceEncoder

    def named_parameters(self) -> dict[str, Tensor]:
        params = {"embedding": self.embedding}
        params.update(self.encoder.named("encoder."))
        params.update(self.head.named("head."))
        return params

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def _dropouts(self, train: bool, rng) -> tuple[Callable | None, Callable | None]:
        rate = self.config.dropout or 0.0
        if not train or rate == 0.0:
            return None, None
        fn = lambda x: apply_dropout(x, rate, "train", rng)  # noqa: E731
        return (fn if self.config.dropout_embedding else None, fn if self.config.dropout_mlp else None)

    def encode(self, batch: SequenceBatch, dropout=None, clamp_r=None, root_only=False) -> EncoderOutput:
        return self.encoder.encode(batch, self.embedding, dropout, root_only=root_only, clamp_r=clamp_r)


class NliModel(_Model):
    """Sentence-pair classifier over entailment / neutral / contradiction."""

    def __init__(self, config: RunConfig, embedding: Tensor):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.embedding = embedding
        self.encoder = SentenceEncoder(
            config.encoder,
            embedding.shape[1],
            config.hidden,
            rng,
            joint=config.joint_with,
            tree_candidate=config.tree_candidate,
        )
        late = None
        if config.late_joint:
            aux = self.encoder.d_out - _primary_width(self.encoder)
            late = (_primary_width(self.encoder), aux)
        self.head = NliHead(
            self.encoder.d_out,
            config.compose_hidden,
            rng,
            d_mlp=config.mlp_hidden,
            reduce_dim=config.reduce_dim,
            late_joint_widths=late,
        )

    def forward(self, batch: NliBatch, train: bool = False, rng=None) -> Tensor:
        emb_drop, mlp_drop = self._dropouts(train, rng)
        premise = self.encode(batch.premise, emb_drop)
        hypothesis = self.encode(batch.hypothesis, emb_drop)
        return self.head(premise, hypothesis, mlp_drop)

    def chunk_source(self, batch: NliBatch) -> SequenceBatch:
        return batch.hypothesis


class SaModel(_Model):
    """Five-way sentence sentiment classifier."""

    def __init__(self, config: RunConfig, embedding: Tensor):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.embedding = embedding
        self.encoder = SentenceEncoder(
            config.encoder,
            embedding.shape[1],
            config.hidden,
            rng,
            joint=config.joint_with,
            tree_candidate=config.tree_candidate,
        )
        self.head = SaHead(self.encoder.d_out, rng, d_mlp=config.mlp_hidden)

    def forward(self, batch: SaBatch, train: bool = False, rng=None) -> Tensor:
        emb_drop, mlp_drop = self._dropouts(train, rng)
        sentence = self.encode(batch.sentence, emb_drop, root_only=self.config.encoder == "tree")
        return self.head(sentence, mlp_drop)

    def chunk_source(self, batch: SaBatch) -> SequenceBatch:
        return batch.sentence


def _primary_width(encoder: SentenceEncoder) -> int:
    if encoder.kind == "snelsd" or encoder.kind == "tree":
        return encoder.d_h
    return encoder.chain[-1].d_out


def build_model(config: RunConfig, embedding: Tensor):
    return NliModel(config, embedding) if config.task == "nli" else SaModel(config, embedding)
