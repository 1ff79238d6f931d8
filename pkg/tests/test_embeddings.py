import numpy as np
import pytest

from stacksql.embeddings import (
    EmbeddingFormatError,
    embed_sequence,
    embed_words_mean,
    load_vectors,
    tokenize,
)


def test_tokenize_punctuation_and_case():
    assert tokenize("Return the SALARY!") == ["return", "the", "salary"]


def test_tokenize_underscore_split():
    assert tokenize("dept_name") == ["dept", "name"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_load_vectors_basic(tmp_path):
    p = tmp_path / "vecs.txt"
    p.write_text("a 1 2 3 4\nb 0 0 0 1\nc -1 0.5 2 3\n")
    emb = load_vectors(p)
    assert emb.dim == 4
    assert len(emb) == 3
    assert np.array_equal(emb.lookup("a"), [1, 2, 3, 4])


def test_load_vectors_limit(tmp_path):
    p = tmp_path / "vecs.txt"
    p.write_text("a 1 2\nb 3 4\nc 5 6\n")
    emb = load_vectors(p, limit=1)
    assert len(emb) == 1
    assert np.array_equal(emb.lookup("b"), np.zeros(2))


def test_load_vectors_inconsistent_dim(tmp_path):
    p = tmp_path / "vecs.txt"
    p.write_text("a 1 2 3\nb 1 2\n")
    with pytest.raises(EmbeddingFormatError):
        load_vectors(p)


def test_load_vectors_missing_file():
    with pytest.raises(OSError):
        load_vectors("/nonexistent/vectors.txt")


def test_embed_sequence_mixed(tmp_path):
    p = tmp_path / "vecs.txt"
    p.write_text("known 1 1\n")
    emb = load_vectors(p)
    out = embed_sequence(emb, ["known", "unknown", "known"])
    assert len(out) == 3
    assert np.array_equal(out[0], [1, 1])
    assert np.array_equal(out[1], [0, 0])


def test_embed_sequence_length_always_matches(embeddings):
    for tokens in ([], ["salary"], ["xyzzy", "salary", "qqq"]):
        assert len(embed_sequence(embeddings, tokens)) == len(tokens)


def test_lookup_does_not_mutate(embeddings):
    before = len(embeddings)
    v1 = embeddings.lookup("salary")
    v2 = embeddings.lookup("salary")
    assert np.array_equal(v1, v2)
    assert len(embeddings) == before


def test_embed_words_mean(tmp_path):
    p = tmp_path / "vecs.txt"
    p.write_text("a 2 0\nb 0 2\n")
    emb = load_vectors(p)
    assert np.array_equal(embed_words_mean(emb, ["a", "b"]), [1, 1])
    assert np.array_equal(embed_words_mean(emb, []), [0, 0])
