"""Tokenizer, embedding table, sentence vectors, state matrices."""

import numpy as np
import pytest

from chatdqn import (
    StateMatrix,
    embed_history,
    embed_sentence,
    load_embeddings,
    tokenize,
)

from conftest import make_table


# ---------------------------------------------------------------------------
# tokenize


def test_tokenize_strips_edge_punctuation_and_lowercases():
    assert tokenize("Hello, what are doing today?") == [
        "hello", "what", "are", "doing", "today",
    ]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_keeps_interior_apostrophe():
    assert tokenize("I'm good.") == ["i'm", "good"]


def test_tokenize_drops_pure_punctuation_tokens():
    assert tokenize("well ... ok !!") == ["well", "ok"]


def test_tokenize_interior_punctuation_survives():
    # only token EDGES are stripped
    assert tokenize('say "a.b" now') == ["say", "a.b", "now"]


# ---------------------------------------------------------------------------
# embed_sentence


def test_embed_single_word():
    table = make_table({"hi": [1.0, 0.0]})
    sv = embed_sentence(["hi"], table)
    assert np.allclose(sv.values, [1.0, 0.0])
    assert sv.word_count == 1


def test_embed_mean_of_two():
    table = make_table({"hi": [1.0, 0.0], "yo": [0.0, 2.0]})
    sv = embed_sentence(["hi", "yo"], table)
    assert np.allclose(sv.values, [0.5, 1.0])
    assert sv.word_count == 2


def test_embed_all_oov_is_zero():
    table = make_table({"hi": [1.0, 0.0]})
    sv = embed_sentence(["zzz"], table)
    assert np.all(sv.values == 0.0)
    assert sv.word_count == 0


def test_embed_skips_oov_tokens():
    table = make_table({"hi": [2.0, 4.0]})
    sv = embed_sentence(["hi", "zzz"], table)
    assert np.allclose(sv.values, [2.0, 4.0])  # mean over in-vocab only
    assert sv.word_count == 1


def test_embed_permutation_invariant():
    rng = np.random.default_rng(0)
    words = {f"w{i}": rng.normal(size=4).tolist() for i in range(6)}
    table = make_table(words)
    toks = list(words)
    a = embed_sentence(toks, table).values
    b = embed_sentence(toks[::-1], table).values
    assert np.allclose(a, b)


def test_embed_bounded_by_max_coefficient():
    rng = np.random.default_rng(1)
    words = {f"w{i}": rng.normal(size=5).tolist() for i in range(8)}
    table = make_table(words)
    bound = np.abs(table.matrix).max()
    sv = embed_sentence(list(words), table)
    assert np.all(np.abs(sv.values) <= bound + 1e-12)


# ---------------------------------------------------------------------------
# embed_history


def test_history_padding():
    table = make_table({"a": [1.0, 0.0], "b": [0.0, 1.0]})
    sm = embed_history(["a", "b"], table, max_len=50)
    assert isinstance(sm, StateMatrix)
    assert sm.rows.shape == (50, 2)
    assert sm.filled == 2
    assert np.allclose(sm.rows[0], [1.0, 0.0])
    assert np.allclose(sm.rows[1], [0.0, 1.0])
    assert np.all(sm.rows[2:] == 0.0)


def test_history_truncation_keeps_most_recent():
    # 60 distinct one-word sentences; rows must hold sentences 11..60
    entries = {f"w{i:02d}": [float(i), 0.0] for i in range(60)}
    table = make_table(entries)
    history = [f"w{i:02d}" for i in range(60)]
    sm = embed_history(history, table, max_len=50)
    assert sm.filled == 50
    assert sm.rows[0, 0] == 10.0  # sentence index 10 is the 11th sentence
    assert sm.rows[49, 0] == 59.0


def test_history_empty():
    table = make_table({"a": [1.0]})
    sm = embed_history([], table, max_len=50)
    assert sm.filled == 0
    assert np.all(sm.rows == 0.0)


def test_history_rows_match_embed_sentence():
    table = make_table({"a": [1.0, 3.0], "b": [2.0, -1.0]})
    history = ["a b", "b", "a"]
    sm = embed_history(history, table, max_len=10)
    for i, s in enumerate(history):
        ref = embed_sentence(tokenize(s), table).values
        assert np.allclose(sm.rows[i], ref)


# ---------------------------------------------------------------------------
# load_embeddings


def test_load_embeddings_roundtrip(tmp_path):
    p = tmp_path / "emb.txt"
    p.write_text("hi 1.0 2.0\nyo -0.5 0.25\n", encoding="utf-8")
    table = load_embeddings(str(p), dim=2)
    assert table.dim == 2
    assert np.allclose(table.lookup("hi"), [1.0, 2.0])
    assert np.allclose(table.lookup("yo"), [-0.5, 0.25])
    assert table.lookup("nope") is None


def test_load_embeddings_dim_mismatch_names_line(tmp_path):
    p = tmp_path / "emb.txt"
    p.write_text("hi 1.0 2.0\nbad 1.0\n", encoding="utf-8")
    with pytest.raises(ValueError, match="line 2"):
        load_embeddings(str(p), dim=2)


def test_load_embeddings_non_numeric(tmp_path):
    p = tmp_path / "emb.txt"
    p.write_text("hi 1.0 x\n", encoding="utf-8")
    with pytest.raises(ValueError, match="line 1"):
        load_embeddings(str(p), dim=2)
