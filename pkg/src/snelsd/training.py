"""Training and evaluation loops shared by the command line and the tests."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig
from .data import (
    NLI_LABELS,
    SA_LABELS,
    NliExample,
    Vocab,
    batchify,
    load_embeddings,
    load_snli,
    load_sst,
    random_embeddings,
    sst_examples,
)
from .errors import ConfigError
from .models import build_model
from .optim import Adadelta, Adam, cross_entropy
from .tensor import Tape, Tensor

log = logging.getLogger(__name__)

EVAL_BATCH = 256


def load_examples(config: RunConfig, split: str):
    path = config.data_path(split)
    if path is None:
        return None
    if config.task == "nli":
        examples = load_snli(path, lowercase=config.lowercase)
        if config.encoder == "tree" and any(
            ex.premise_tree is None or ex.hypothesis_tree is None for ex in examples
        ):
            raise ConfigError(f"{split}: the tree encoder needs binary parse fields in the input")
        return examples
    return sst_examples(load_sst(path, lowercase=config.lowercase))


def example_tokens(examples) -> list[list[str]]:
    out = []
    for ex in examples:
        if isinstance(ex, NliExample):
            out.append(ex.premise)
            out.append(ex.hypothesis)
            for t in (ex.premise_tree, ex.hypothesis_tree):
                if t is not None:
                    out.append(t.leaves())
        else:
            out.append(ex.tokens)
    return out


def n_classes(task: str) -> int:
    return len(NLI_LABELS) if task == "nli" else len(SA_LABELS)


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray
    predictions: np.ndarray
    loss: float


def evaluate(model, examples, vocab: Vocab, batch_size: int = EVAL_BATCH) -> EvalResult:
    """Accuracy and confusion matrix (rows = gold, columns = predicted)."""
    k = n_classes(model.config.task)
    confusion = np.zeros((k, k), dtype=np.int64)
    preds, total_loss, n = [], 0.0, 0
    for batch in batchify(examples, vocab, batch_size):
        probs = model.forward(batch, train=False)
        guess = probs.data.argmax(axis=-1)
        np.add.at(confusion, (batch.labels, guess), 1)
        preds.append(guess)
        total_loss += float(cross_entropy(probs, batch.labels).data) * len(batch.labels)
        n += len(batch.labels)
    accuracy = float(np.trace(confusion)) / max(n, 1)
    return EvalResult(accuracy, confusion, np.concatenate(preds) if preds else np.zeros(0, int), total_loss / max(n, 1))


class Trainer:
    """Owns a model, its optimizer and the per-epoch metrics history."""

    def __init__(self, config: RunConfig, train_examples, vocab: Vocab, embedding: Tensor | None = None):
        self.config = config.resolved()
        self.train_examples = list(train_examples)
        self.vocab = vocab
        if embedding is None:
            embedding = random_embeddings(vocab, self.config.embed_dim, self.config.seed, self.config.oov_std)
        self.model = build_model(self.config, embedding)
        params = self.model.parameters()
        c = self.config
        if c.optimizer == "adam":
            self.optimizer = Adam(params, c.lr, c.beta1, c.beta2, c.eps)
        else:
            self.optimizer = Adadelta(params, c.rho, c.eps, c.lr)
        self.rng = np.random.default_rng(c.seed + 1)
        self.epoch = 0
        self.history: list[dict] = []

    def train_epoch(self) -> dict:
        c = self.config
        self.epoch += 1
        batches = batchify(self.train_examples, self.vocab, c.batch_size, seed=c.seed + self.epoch, shuffle=True)
        total_loss, correct, n = 0.0, 0, 0
        for batch in batches:
            self.optimizer.zero_grad()
            with Tape() as tape:
                probs = self.model.forward(batch, train=True, rng=self.rng)
                loss = cross_entropy(probs, batch.labels)
            tape.backward(loss)
            self.optimizer.step()
            size = len(batch.labels)
            total_loss += float(loss.data) * size
            correct += int((probs.data.argmax(axis=-1) == batch.labels).sum())
            n += size
        return {"epoch": self.epoch, "train_loss": total_loss / n, "train_acc": correct / n}

    def evaluate(self, examples) -> EvalResult:
        return evaluate(self.model, examples, self.vocab)

    def checkpoint(self) -> Checkpoint:
        tensors = {f"param.{k}": v.data.copy() for k, v in self.model.named_parameters().items()}
        for k, v in self.optimizer.state_arrays().items():
            tensors[f"optim.{k}"] = np.array(v, dtype=np.float64)
        return Checkpoint(self.config, list(self.vocab.itos), tensors, self.epoch, list(self.history))

    def fit(self, dev_examples=None, log_path=None, checkpoint_path=None, on_epoch=None) -> list[dict]:
        """Run the configured number of epochs.

        Each epoch appends one JSON record to ``log_path``.  The checkpoint
        is rewritten whenever dev accuracy improves (or every epoch when
        there is no dev set).  Stops early once ``target_train_acc`` is met.
        """
        best = -1.0
        log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
        try:
            for _ in range(self.config.epochs):
                record = self.train_epoch()
                if self.config.target_train_acc is not None:
                    record["train_eval_acc"] = self.evaluate(self.train_examples).accuracy
                if dev_examples:
                    record["dev_acc"] = self.evaluate(dev_examples).accuracy
                self.history.append(record)
                if log_fh:
                    log_fh.write(json.dumps(record, sort_keys=True) + "\n")
                    log_fh.flush()
                log.info("epoch %d %s", self.epoch, record)
                score = record.get("dev_acc", record.get("train_eval_acc", record["train_acc"]))
                if checkpoint_path and (not dev_examples or score > best):
                    best = max(best, score)
                    save_checkpoint(checkpoint_path, self.checkpoint())
                if on_epoch:
                    on_epoch(record)
                target = self.config.target_train_acc
                if target is not None and record["train_eval_acc"] >= target:
                    break
        finally:
            if log_fh:
                log_fh.close()
        return self.history


def restore(ckpt: Checkpoint):
    """Rebuild the model stored in a checkpoint; returns ``(model, vocab)``."""
    vocab = Vocab(ckpt.vocab[2:])
    params = ckpt.params()
    table = params["embedding"]
    model = build_model(ckpt.config, Tensor(table.copy(), requires_grad=True))
    named = model.named_parameters()
    if set(named) != set(params):
        raise ConfigError("checkpoint parameters do not match the configured model")
    for name, tensor in named.items():
        if tensor.shape != params[name].shape:
            raise ConfigError(f"{name}: checkpoint shape {params[name].shape} vs model {tensor.shape}")
        tensor.data = params[name].copy()
    return model, vocab


def restore_trainer(ckpt: Checkpoint, train_examples) -> Trainer:
    vocab = Vocab(ckpt.vocab[2:])
    trainer = Trainer(ckpt.config, train_examples, vocab, Tensor(ckpt.params()["embedding"].copy(), requires_grad=True))
    for name, tensor in trainer.model.named_parameters().items():
        tensor.data[...] = ckpt.params()[name]
    trainer.optimizer.load_state_arrays(ckpt.optimizer_state())
    trainer.epoch = ckpt.epoch
    trainer.history = list(ckpt.history)
    return trainer


def prepare(config: RunConfig):
    """Load corpora and embeddings for a config; returns trainer and dev/test examples."""
    config = config.resolved()
    train = load_examples(config, "train")
    if not train:
        raise ConfigError("no training data (set train)")
    dev = load_examples(config, "dev")
    test = load_examples(config, "test")
    vocab = Vocab.build(example_tokens(train), config.min_count)
    emb_path = config.data_path("embeddings")
    if emb_path is not None:
        table = load_embeddings(emb_path, vocab, config.embed_dim, config.seed, config.oov_std)
    else:
        table = random_embeddings(vocab, config.embed_dim, config.seed, config.oov_std)
    return Trainer(config, train, vocab, table), dev, test


def load_model(path):
    ckpt = load_checkpoint(Path(path))
    model, vocab = restore(ckpt)
    return ckpt, model, vocab
