import json
import os
from pathlib import Path

import numpy as np
import pytest

from snelsd.data import (
    NLI_LABELS,
    PAD_ID,
    UNK_ID,
    NliExample,
    SequenceBatch,
    Vocab,
    batchify,
    corpus_format,
    load_embeddings,
    load_snli,
    load_sst,
    parse_tree,
    random_embeddings,
    sst_examples,
    write_snli,
    write_sst,
)
from snelsd.errors import DataError, EmptySequenceError, MalformedTreeError, ParseError

SNLI_FIXTURE = [
    {"gold_label": "entailment", "sentence1": "A man plays a guitar .", "sentence2": "A man plays music ."},
    {"gold_label": "-", "sentence1": "Two dogs run .", "sentence2": "Animals are outside ."},
    {"gold_label": "contradiction", "sentence1": "A woman sleeps .", "sentence2": "A woman is running ."},
]

SST_FIXTURE = (
    "(3 (2 no) (4 movement))\n"
    "(1 (2 (2 The) (2 film)) (1 (1 (2 is) (1 dull)) (2 .)))\n"
    "(4 (3 (2 a) (4 masterpiece)) (2 !))\n"
)


@pytest.fixture
def snli_file(tmp_path):
    path = tmp_path / "snli.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in SNLI_FIXTURE), encoding="utf-8")
    return path


class TestSnli:
    def test_drops_no_consensus(self, snli_file):
        examples = load_snli(snli_file)
        assert len(examples) == 2
        assert [e.label for e in examples] == [0, 2]
        assert examples[0].hypothesis == ["A", "man", "plays", "music", "."]

    def test_unicode_minus_dropped(self, tmp_path):
        path = tmp_path / "s.jsonl"
        recs = [dict(SNLI_FIXTURE[0], gold_label="−"), SNLI_FIXTURE[2]]
        path.write_text("".join(json.dumps(r) + "\n" for r in recs), encoding="utf-8")
        assert len(load_snli(path)) == 1

    def test_label_order(self):
        assert NLI_LABELS == ("entailment", "neutral", "contradiction")

    def test_lowercase_flag(self, snli_file):
        assert load_snli(snli_file)[0].premise[0] == "A"
        assert load_snli(snli_file, lowercase=True)[0].premise[0] == "a"

    def test_malformed_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(SNLI_FIXTURE[0]) + "\n{not json\n", encoding="utf-8")
        with pytest.raises(ParseError, match="line 2"):
            load_snli(path)

    def test_missing_field(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"sentence1": "a", "gold_label": "neutral"}) + "\n", encoding="utf-8")
        with pytest.raises(ParseError, match="line 1"):
            load_snli(path)

    def test_unknown_label(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(dict(SNLI_FIXTURE[0], gold_label="maybe")) + "\n", encoding="utf-8")
        with pytest.raises(DataError):
            load_snli(path)

    def test_binary_parses_and_round_trip(self, tmp_path):
        rec = dict(
            SNLI_FIXTURE[0],
            sentence1_binary_parse="( ( A man ) ( plays ( a guitar ) ) )",
            sentence2_binary_parse="( ( A man ) ( plays music ) )",
        )
        path = tmp_path / "p.jsonl"
        path.write_text(json.dumps(rec) + "\n", encoding="utf-8")
        ex = load_snli(path)[0]
        assert ex.premise_tree.leaves() == ["A", "man", "plays", "a", "guitar"]
        assert ex.premise_tree.internal_count() == 4
        out = tmp_path / "out.jsonl"
        write_snli(out, [ex])
        again = load_snli(out)[0]
        assert again.premise_tree.render() == ex.premise_tree.render()

    def test_empty_sentence_rejected(self):
        with pytest.raises(EmptySequenceError):
            NliExample([], ["a"], 0)


class TestSst:
    def test_example_tree(self):
        t = parse_tree("(3 (2 no) (4 movement))")
        assert t.label == 3
        assert t.leaves() == ["no", "movement"]

    def test_round_trip_byte_exact(self, tmp_path):
        src = tmp_path / "in.txt"
        src.write_text(SST_FIXTURE, encoding="utf-8")
        dst = tmp_path / "out.txt"
        write_sst(dst, load_sst(src))
        assert dst.read_bytes() == src.read_bytes()

    def test_sentence_level_examples(self, tmp_path):
        src = tmp_path / "in.txt"
        src.write_text(SST_FIXTURE, encoding="utf-8")
        examples = sst_examples(load_sst(src))
        assert [e.label for e in examples] == [3, 1, 4]
        assert examples[1].tokens == ["The", "film", "is", "dull", "."]

    @pytest.mark.parametrize(
        "text,match",
        [
            ("(5 (2 a) (2 b))", "outside 0..4"),
            ("(3 (2 a) (2 b)", "unbalanced"),
            ("(3 (2 a) (2 b) (2 c))", "3 children"),
            ("(x (2 a) (2 b))", "integer label"),
        ],
    )
    def test_malformed(self, text, match):
        with pytest.raises(MalformedTreeError, match=match):
            parse_tree(text)

    def test_error_carries_line_number(self, tmp_path):
        src = tmp_path / "in.txt"
        src.write_text("(3 (2 a) (2 b))\n(5 (2 a) (2 b))\n", encoding="utf-8")
        with pytest.raises(ParseError, match="line 2"):
            load_sst(src)

    def test_format_sniffing(self, tmp_path, snli_file):
        src = tmp_path / "in.txt"
        src.write_text(SST_FIXTURE, encoding="utf-8")
        assert corpus_format(src) == "sa"
        assert corpus_format(snli_file) == "nli"


class TestVocab:
    def test_reserved_and_ordering(self):
        v = Vocab.build([["b", "a", "b"], ["c", "a", "b"]])
        assert v.itos == ["<pad>", "<unk>", "b", "a", "c"]
        assert v.encode(["a", "zzz"]) == [3, UNK_ID]
        assert v.decode([2, 4]) == ["b", "c"]

    def test_stable(self):
        sents = [["x", "y"], ["y", "z", "x"]]
        assert Vocab.build(sents).itos == Vocab.build(list(reversed(sents))).itos

    def test_min_count(self):
        v = Vocab.build([["a", "a", "b"]], min_count=2)
        assert "b" not in v and "a" in v

    def test_bijective(self):
        v = Vocab.build([["a", "b", "c"]])
        assert all(v.stoi[t] == i for i, t in enumerate(v.itos))


class TestEmbeddings:
    def test_rows_copied(self, tmp_path):
        vocab = Vocab(["cat", "dog"])
        path = tmp_path / "emb.txt"
        path.write_text("cat 0.5 -1.25 2\ndog 1e-3 0 -7.5\nbird 9 9 9\n", encoding="utf-8")
        table = load_embeddings(path, vocab, 3, seed=0).data
        assert table[vocab.stoi["cat"]].tolist() == [0.5, -1.25, 2.0]
        assert table[vocab.stoi["dog"]].tolist() == [1e-3, 0.0, -7.5]
        assert not table[PAD_ID].any()

    def test_token_with_space(self, tmp_path):
        vocab = Vocab(["New York"])
        path = tmp_path / "emb.txt"
        path.write_text("New York 1 2\n", encoding="utf-8")
        assert load_embeddings(path, vocab, 2, seed=0).data[2].tolist() == [1.0, 2.0]

    def test_oov_rows_seeded_gaussian(self, tmp_path):
        vocab = Vocab([f"w{i}" for i in range(400)])
        path = tmp_path / "emb.txt"
        path.write_text("w0 " + " ".join(["1"] * 300) + "\n", encoding="utf-8")
        a = load_embeddings(path, vocab, 300, seed=3).data
        b = load_embeddings(path, vocab, 300, seed=3).data
        np.testing.assert_array_equal(a, b)
        oov = a[3:]
        assert abs(oov.mean()) < 0.005
        assert abs(oov.std() - 0.1) < 0.005
        assert abs(oov[0].mean()) < 4 * 0.1 / np.sqrt(300)

    def test_wrong_float_count(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("a 1 2 3\nb 1 2\n", encoding="utf-8")
        with pytest.raises(ParseError, match="line 2"):
            load_embeddings(path, Vocab(["a", "b"]), 3, seed=0)

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("a 1 x 3\n", encoding="utf-8")
        with pytest.raises(ParseError, match="line 1"):
            load_embeddings(path, Vocab(["a"]), 3, seed=0)

    def test_random_table(self):
        t = random_embeddings(Vocab(["a"]), 4, seed=1)
        assert t.requires_grad and not t.data[PAD_ID].any()


class TestBatching:
    def examples(self, n=5):
        return [NliExample([f"p{i}"] * (i + 1), ["h"], i % 3) for i in range(n)]

    def test_sizes(self):
        ex = self.examples()
        vocab = Vocab.build([e.premise + e.hypothesis for e in ex])
        batches = batchify(ex, vocab, 2)
        assert [b.labels.size for b in batches] == [2, 2, 1]

    def test_order_preserved_without_shuffle(self):
        ex = self.examples()
        vocab = Vocab.build([e.premise for e in ex])
        labels = np.concatenate([b.labels for b in batchify(ex, vocab, 2)])
        assert labels.tolist() == [e.label for e in ex]

    def test_shuffle_deterministic(self):
        ex = self.examples(9)
        vocab = Vocab.build([e.premise for e in ex])
        a = [b.premise.ids.tolist() for b in batchify(ex, vocab, 4, seed=3, shuffle=True)]
        b = [b.premise.ids.tolist() for b in batchify(ex, vocab, 4, seed=3, shuffle=True)]
        c = [b.premise.ids.tolist() for b in batchify(ex, vocab, 4, seed=4, shuffle=True)]
        assert a == b and a != c

    def test_mask_and_pad_invariants(self):
        ex = self.examples()
        vocab = Vocab.build([e.premise for e in ex])
        for b in batchify(ex, vocab, 3):
            sb = b.premise
            for row, n in enumerate(sb.lengths):
                assert sb.mask[row].tolist() == [1.0] * n + [0.0] * (sb.mask.shape[1] - n)
            assert (sb.ids[sb.mask == 0] == PAD_ID).all()

    def test_bad_batch_size(self):
        with pytest.raises(DataError):
            batchify(self.examples(), Vocab([]), 0)

    def test_empty_sentence(self):
        with pytest.raises(EmptySequenceError):
            SequenceBatch.from_ids([[2], []])


def _data_root():
    root = os.environ.get("SNELSD_DATA_ROOT")
    return Path(root) if root else None


def _count_lines(path):
    return len(load_snli(path)) if path.suffix == ".jsonl" else len(load_sst(path))


@pytest.mark.slow
@pytest.mark.parametrize(
    "relpath,expected",
    [
        ("snli_1.0/snli_1.0_train.jsonl", 549_367),
        ("snli_1.0/snli_1.0_dev.jsonl", 9_842),
        ("snli_1.0/snli_1.0_test.jsonl", 9_824),
        ("trees/train.txt", 8_544),
        ("trees/dev.txt", 1_101),
        ("trees/test.txt", 2_210),
    ],
)
def test_official_split_counts(relpath, expected):
    root = _data_root()
    if root is None or not (root / relpath).exists():
        pytest.skip(f"official corpus file {relpath} not available under SNELSD_DATA_ROOT")
    assert _count_lines(root / relpath) == expected
