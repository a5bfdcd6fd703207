"""Corpus readers, vocabulary, embedding tables and padded batches.

Formats understood:

* NLI pairs: one JSON object per line with ``sentence1``, ``sentence2`` and
  ``gold_label`` (the distributed SNLI ``.jsonl`` files).  Optional
  ``sentence1_binary_parse`` / ``sentence2_binary_parse`` fields feed the
  tree encoder.
* Sentiment trees: one bracketed, labelled binary tree per line, e.g.
  ``(3 (2 no) (4 movement))``.
* Embeddings: plain text, a token followed by ``dim`` floats per line.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, EmptySequenceError, MalformedTreeError, ParseError
from .tensor import Tensor

NLI_LABELS = ("entailment", "neutral", "contradiction")
SA_LABELS = ("very negative", "negative", "neutral", "positive", "very positive")
NO_CONSENSUS = ("-", "−")

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1


# -- trees -----------------------------------------------------------------


@dataclass
class ParseTree:
    """Binary constituency tree; leaves carry a token, internal nodes two children."""

    label: int | None = None
    token: str | None = None
    left: "ParseTree | None" = None
    right: "ParseTree | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.token is not None

    def leaves(self) -> list[str]:
        if self.is_leaf:
            return [self.token]
        return self.left.leaves() + self.right.leaves()

    def internal_count(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + self.left.internal_count() + self.right.internal_count()

    def render(self) -> str:
        if self.is_leaf:
            if self.label is None:
                return self.token
            return f"({self.label} {self.token})"
        inner = f"{self.left.render()} {self.right.render()}"
        if self.label is None:
            return f"( {inner} )"
        return f"({self.label} {inner})"

    def validate(self) -> None:
        if self.is_leaf:
            if self.left is not None or self.right is not None:
                raise MalformedTreeError("leaf node with children")
            return
        if self.left is None or self.right is None:
            raise MalformedTreeError("internal node must have exactly two children")
        self.left.validate()
        self.right.validate()


_TREE_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def parse_tree(text: str, labeled: bool = True) -> ParseTree:
    """Parse one bracketed binary tree.

    With ``labeled`` every bracket opens with an integer sentiment label
    (0..4).  Without it (SNLI binary parses) bare tokens may appear as
    children and unary brackets are collapsed.
    """
    toks = _TREE_TOKEN.findall(text)
    if not toks:
        raise MalformedTreeError("empty tree")
    pos = 0

    def peek():
        return toks[pos] if pos < len(toks) else None

    def advance():
        nonlocal pos
        if pos >= len(toks):
            raise MalformedTreeError("unbalanced parentheses")
        tok = toks[pos]
        pos += 1
        return tok

    def node() -> ParseTree:
        if advance() != "(":
            raise MalformedTreeError("expected '('")
        label = None
        if labeled:
            raw = advance()
            if raw in "()" or not re.fullmatch(r"-?\d+", raw):
                raise MalformedTreeError(f"expected integer label, got {raw!r}")
            label = int(raw)
            if not 0 <= label <= 4:
                raise MalformedTreeError(f"label {label} outside 0..4")
        children: list[ParseTree] = []
        while peek() != ")":
            tok = peek()
            if tok is None:
                raise MalformedTreeError("unbalanced parentheses")
            if tok == "(":
                children.append(node())
            else:
                advance()
                children.append(ParseTree(token=tok))
        advance()
        if labeled:
            if len(children) == 1 and children[0].is_leaf and children[0].label is None:
                return ParseTree(label=label, token=children[0].token)
            if len(children) != 2:
                raise MalformedTreeError(f"node with {len(children)} children")
            return ParseTree(label=label, left=children[0], right=children[1])
        if len(children) == 1:
            return children[0]
        if len(children) != 2:
            raise MalformedTreeError(f"node with {len(children)} children")
        return ParseTree(left=children[0], right=children[1])

    if toks[0] != "(":
        if not labeled and len(toks) == 1:
            return ParseTree(token=toks[0])
        raise MalformedTreeError("tree must start with '('")
    tree = node()
    if pos != len(toks):
        raise MalformedTreeError("unbalanced parentheses")
    return tree


# -- examples --------------------------------------------------------------


@dataclass
class NliExample:
    premise: list[str]
    hypothesis: list[str]
    label: int
    premise_tree: ParseTree | None = None
    hypothesis_tree: ParseTree | None = None

    def __post_init__(self):
        if not self.premise or not self.hypothesis:
            raise EmptySequenceError("NLI sentences must be nonempty")
        if not 0 <= self.label < len(NLI_LABELS):
            raise DataError(f"label {self.label} outside 0..{len(NLI_LABELS) - 1}")


@dataclass
class SaExample:
    tokens: list[str]
    label: int
    tree: ParseTree | None = None


def _lower(tree: ParseTree) -> ParseTree:
    if tree.is_leaf:
        return ParseTree(label=tree.label, token=tree.token.lower())
    return ParseTree(label=tree.label, left=_lower(tree.left), right=_lower(tree.right))


def load_snli(path, lowercase: bool = False) -> list[NliExample]:
    """Read an NLI ``.jsonl`` file, dropping pairs without annotator consensus."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                s1, s2, gold = rec["sentence1"], rec["sentence2"], rec["gold_label"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"malformed record ({exc})", lineno) from None
            if gold in NO_CONSENSUS:
                continue
            if gold not in NLI_LABELS:
                raise DataError(f"line {lineno}: unknown label {gold!r}")
            if lowercase:
                s1, s2 = s1.lower(), s2.lower()
            trees = []
            for key in ("sentence1_binary_parse", "sentence2_binary_parse"):
                raw = rec.get(key)
                if raw is None:
                    trees.append(None)
                    continue
                try:
                    t = parse_tree(raw, labeled=False)
                except MalformedTreeError as exc:
                    raise ParseError(f"{key}: {exc}", lineno) from None
                trees.append(_lower(t) if lowercase else t)
            try:
                examples.append(
                    NliExample(s1.split(), s2.split(), NLI_LABELS.index(gold), trees[0], trees[1])
                )
            except EmptySequenceError:
                raise ParseError("empty sentence", lineno) from None
    return examples


def load_sst(path, sentence_level_only: bool = True, lowercase: bool = False) -> list[ParseTree]:
    """Read one labelled binary tree per line.

    Only root labels are used for training when ``sentence_level_only`` is
    set; phrase labels stay on the nodes either way so trees round-trip.
    """
    trees = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                tree = parse_tree(line, labeled=True)
            except MalformedTreeError as exc:
                raise ParseError(str(exc), lineno) from None
            trees.append(_lower(tree) if lowercase else tree)
    return trees


def sst_examples(trees: Iterable[ParseTree]) -> list[SaExample]:
    return [SaExample(t.leaves(), t.label, t) for t in trees]


def write_snli(path, examples: Sequence[NliExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            rec = {
                "gold_label": NLI_LABELS[ex.label],
                "sentence1": " ".join(ex.premise),
                "sentence2": " ".join(ex.hypothesis),
            }
            if ex.premise_tree is not None and ex.hypothesis_tree is not None:
                rec["sentence1_binary_parse"] = ex.premise_tree.render()
                rec["sentence2_binary_parse"] = ex.hypothesis_tree.render()
            fh.write(json.dumps(rec) + "\n")


def write_sst(path, trees: Sequence[ParseTree]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trees:
            fh.write(t.render() + "\n")


# -- vocabulary and embeddings ---------------------------------------------


class Vocab:
    """Token <-> id map with reserved padding (0) and unknown (1) entries.

    Ids are assigned by descending frequency, ties broken alphabetically,
    so the same corpus always yields the same map.
    """

    def __init__(self, tokens: Sequence[str]):
        self.itos = [PAD, UNK] + [t for t in tokens if t not in (PAD, UNK)]
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise DataError("duplicate tokens in vocabulary")

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]], min_count: int = 1) -> "Vocab":
        counts = Counter(tok for sent in sentences for tok in sent)
        ranked = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
        return cls(ranked)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.itos[i] for i in ids]


def random_embeddings(vocab: Vocab, dim: int, seed: int, std: float = 0.1) -> Tensor:
    rng = np.random.default_rng(seed)
    table = rng.normal(0.0, std, size=(len(vocab), dim))
    table[PAD_ID] = 0.0
    return Tensor(table, requires_grad=True, name="embedding")


def load_embeddings(path, vocab: Vocab, dim: int, seed: int, std: float = 0.1) -> Tensor:
    """Embedding table for ``vocab``: file vectors where present, Gaussian otherwise.

    Lines are split from the right, so tokens containing spaces survive.
    The padding row is always zero.
    """
    table = random_embeddings(vocab, dim, seed, std).data
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").rstrip().split(" ")
            if not line.strip():
                continue
            if len(parts) < dim + 1:
                raise ParseError(f"expected a token and {dim} floats", lineno)
            token = " ".join(parts[:-dim])
            try:
                vec = np.array([float(v) for v in parts[-dim:]])
            except ValueError:
                raise ParseError(f"expected a token and {dim} floats", lineno) from None
            idx = vocab.stoi.get(token)
            if idx is not None and idx != PAD_ID:
                table[idx] = vec
    table[PAD_ID] = 0.0
    return Tensor(table, requires_grad=True, name="embedding")


# -- batches ---------------------------------------------------------------


@dataclass
class SequenceBatch:
    """Padded token ids with a validity mask; ``trees`` is set for tree input."""

    ids: np.ndarray
    mask: np.ndarray
    lengths: np.ndarray
    trees: list[ParseTree] | None = None
    leaf_ids: list[list[int]] | None = None

    @classmethod
    def from_tokens(cls, sentences: Sequence[Sequence[str]], vocab: Vocab, trees=None) -> "SequenceBatch":
        batch = cls.from_ids([vocab.encode(s) for s in sentences], trees=trees)
        if trees is not None:
            batch.leaf_ids = [vocab.encode(t.leaves()) for t in trees]
        return batch

    @classmethod
    def from_ids(cls, id_lists: Sequence[Sequence[int]], pad_to: int | None = None, trees=None) -> "SequenceBatch":
        lengths = np.array([len(s) for s in id_lists], dtype=np.int64)
        if lengths.size == 0 or (lengths == 0).any():
            raise EmptySequenceError("batch contains an empty sentence")
        width = max(int(lengths.max()), pad_to or 0)
        ids = np.full((len(id_lists), width), PAD_ID, dtype=np.int64)
        mask = np.zeros((len(id_lists), width))
        for row, seq in enumerate(id_lists):
            ids[row, : len(seq)] = seq
            mask[row, : len(seq)] = 1.0
        return cls(ids, mask, lengths, None if trees is None else list(trees))

    @property
    def size(self) -> int:
        return self.ids.shape[0]


@dataclass
class NliBatch:
    premise: SequenceBatch
    hypothesis: SequenceBatch
    labels: np.ndarray


@dataclass
class SaBatch:
    sentence: SequenceBatch
    labels: np.ndarray


def _chunks(items: list, batch_size: int) -> list[list]:
    return [items[i : i + batch_size] for i in range(0, len(items), batch_size)]


def batchify(examples, vocab: Vocab, batch_size: int, seed: int = 0, shuffle: bool = False) -> list:
    """Group examples into padded batches; the final partial batch is kept."""
    if batch_size < 1:
        raise DataError("batch_size must be at least 1")
    examples = list(examples)
    if shuffle:
        order = np.random.default_rng(seed).permutation(len(examples))
        examples = [examples[i] for i in order]
    batches = []
    for group in _chunks(examples, batch_size):
        labels = np.array([ex.label for ex in group], dtype=np.int64)
        if isinstance(group[0], NliExample):
            p_trees = [ex.premise_tree for ex in group]
            h_trees = [ex.hypothesis_tree for ex in group]
            have = all(t is not None for t in p_trees + h_trees)
            batches.append(
                NliBatch(
                    SequenceBatch.from_tokens([ex.premise for ex in group], vocab, p_trees if have else None),
                    SequenceBatch.from_tokens([ex.hypothesis for ex in group], vocab, h_trees if have else None),
                    labels,
                )
            )
        else:
            trees = [ex.tree for ex in group]
            have = all(t is not None for t in trees)
            batches.append(SaBatch(SequenceBatch.from_tokens([ex.tokens for ex in group], vocab, trees if have else None), labels))
    return batches


def corpus_format(path) -> str:
    """``"nli"`` for JSON-lines pair files, ``"sa"`` for bracketed trees."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            s = line.lstrip()
            if not s:
                continue
            if s.startswith("{"):
                return "nli"
            if s.startswith("("):
                return "sa"
            break
    raise DataError(f"{Path(path).name}: unrecognised corpus format")
