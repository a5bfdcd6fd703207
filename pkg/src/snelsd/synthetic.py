"""Small synthetic corpora for smoke runs and overfitting checks."""

from __future__ import annotations

import numpy as np

from .data import NliExample, ParseTree


def random_binary_tree(tokens: list[str], rng: np.random.Generator, label: int | None = None, inner: int | None = None) -> ParseTree:
    """Random binary bracketing of ``tokens``; ``label`` goes on the root,
    ``inner`` on every other node (both ``None`` for unlabelled trees)."""

    def build(lo: int, hi: int, root: bool) -> ParseTree:
        node_label = label if root else inner
        if hi - lo == 1:
            return ParseTree(label=node_label, token=tokens[lo])
        split = int(rng.integers(lo + 1, hi))
        return ParseTree(label=node_label, left=build(lo, split, False), right=build(split, hi, False))

    return build(0, len(tokens), True)


def synthetic_nli(n_pairs: int = 64, vocab_size: int = 50, seed: int = 0, trees: bool = False) -> list[NliExample]:
    """Pairs whose label follows from token overlap.

    entailment: the hypothesis is a span of the premise; contradiction:
    such a span preceded by a negation word; neutral: words absent from
    the premise.  Labels cycle so the classes are balanced.
    """
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(vocab_size - 1)]
    neg = "not"
    out = []
    for k in range(n_pairs):
        label = k % 3
        premise = list(rng.choice(words, size=int(rng.integers(4, 8)), replace=False))
        span = int(rng.integers(2, 4))
        if label == 2 or label == 0:
            start = int(rng.integers(0, len(premise) - span + 1))
            hyp = premise[start : start + span]
            if label == 2:
                hyp = [neg] + hyp
        else:
            others = [w for w in words if w not in premise]
            hyp = list(rng.choice(others, size=span, replace=False))
        pt = random_binary_tree(premise, rng) if trees else None
        ht = random_binary_tree(hyp, rng) if trees else None
        out.append(NliExample([str(w) for w in premise], [str(w) for w in hyp], label, pt, ht))
    return out


def synthetic_sa(n_sentences: int = 40, n_fillers: int = 30, seed: int = 0) -> list[ParseTree]:
    """Labelled trees where one class-specific cue word fixes the sentiment."""
    rng = np.random.default_rng(seed)
    fillers = [f"f{i}" for i in range(n_fillers)]
    cues = {c: [f"c{c}a", f"c{c}b"] for c in range(5)}
    out = []
    for k in range(n_sentences):
        label = k % 5
        body = list(rng.choice(fillers, size=int(rng.integers(3, 7)), replace=True))
        body.insert(int(rng.integers(0, len(body) + 1)), cues[label][int(rng.integers(0, 2))])
        out.append(random_binary_tree([str(w) for w in body], rng, label=label, inner=2))
    return out
