"""Shared encoder machinery: BiLSTM encodings, conditional attention, heads.

Forward functions return (output, cache); the matching backward consumes
the cache and upstream gradients.  Everything is composed manually per
module (no autodiff tape); the compositions are validated end to end by
central-difference gradient checks.
"""

import numpy as np

from stacksql.embeddings import embed_sequence, embed_words_mean
from stacksql.numerics import ShapeError, bilstm_forward, matmul, sigmoid, softmax_rows
from stacksql.numerics.lstm import (
    bilstm_batch_backward,
    bilstm_batch_forward,
    bilstm_final_rows,
    bilstm_final_rows_backward,
)

# ---------------------------------------------------------------------------
# Conditional attention
# ---------------------------------------------------------------------------


def conditional(h1, h2, w):
    """Attention-weighted summary of h1 conditioned on h2.

    A = softmax_rows(h2 @ w @ h1.T); returns A @ h1 with one output row per
    h2 row, each a convex combination of h1's rows.
    """
    out, _ = conditional_forward(h1, h2, w)
    return out


def conditional_forward(h1, h2, w):
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    if h1.ndim != 2 or h2.ndim != 2 or w.ndim != 2:
        raise ShapeError("conditional expects 2-D operands")
    if h1.shape[1] != w.shape[1] or h2.shape[1] != w.shape[0]:
        raise ShapeError(
            f"conditional dims: h1 {h1.shape}, h2 {h2.shape}, w {w.shape}"
        )
    scores = h2 @ w @ h1.T
    attn = softmax_rows(scores)
    out = attn @ h1
    return out, (h1, h2, w, attn)


def conditional_backward(cache, dout):
    h1, h2, w, attn = cache
    dattn = dout @ h1.T
    dh1 = attn.T @ dout
    # softmax backward, row-wise
    dscores = attn * (dattn - (dattn * attn).sum(axis=1, keepdims=True))
    dh2 = dscores @ h1 @ w.T
    dw = h2.T @ dscores @ h1
    dh1 += dscores.T @ (h2 @ w)
    return dh1, dh2, dw


# ---------------------------------------------------------------------------
# Score heads
# ---------------------------------------------------------------------------


def prob_head(u, v, mode="softmax"):
    """Probability vector from a score embedding.

    Candidate heads: u is (k, d) with one row per candidate and v is (d,);
    scores are tanh(u) @ v.  softmax over candidates for single-choice
    heads, per-candidate sigmoid for set heads.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 2 or v.ndim != 1 or u.shape[1] != v.shape[0]:
        raise ShapeError(f"prob_head dims: u {u.shape}, v {v.shape}")
    scores = np.tanh(u) @ v
    if mode == "softmax":
        return softmax_rows(scores[None, :])[0]
    if mode == "sigmoid":
        return sigmoid(scores)
    raise ValueError(f"unknown head mode {mode!r}")


def cand_scores_forward(U, v):
    """Per-candidate scores tanh(U) @ v for a (k, d) embedding matrix."""
    tU = np.tanh(U)
    return tU @ v, (tU, v)


def cand_scores_backward(cache, dscores):
    tU, v = cache
    dtU = np.outer(dscores, v)
    dU = dtU * (1.0 - tU * tU)
    dv = tU.T @ dscores
    return dU, dv


def class_scores_forward(u, V):
    """Fixed-class scores V @ tanh(u) for a (d,) embedding and (C, d) head."""
    tu = np.tanh(u)
    return V @ tu, (tu, V)


def class_scores_backward(cache, dscores):
    tu, V = cache
    dV = np.outer(dscores, tu)
    du = (V.T @ dscores) * (1.0 - tu * tu)
    return du, dV


# ---------------------------------------------------------------------------
# Sequence encodings (single-example conveniences)
# ---------------------------------------------------------------------------


def encode_question(lstm_params, emb, tokens):
    """One row per question token, width 2 * hidden_dim."""
    if not tokens:
        raise ShapeError("cannot encode an empty question")
    return bilstm_forward(lstm_params, np.stack(embed_sequence(emb, list(tokens))))


def history_embedding(emb, history):
    """History tokens to input vectors; multi-word tokens are mean-pooled."""
    return [embed_words_mean(emb, list(words)) for words in history]


def encode_history(lstm_params, emb, history):
    """One row per history token; an empty history is a single zero row."""
    if not history:
        return np.zeros((1, lstm_params.output_dim))
    return bilstm_forward(lstm_params, np.stack(history_embedding(emb, history)))


def encode_token_sequences_final(lstm_params, emb, word_seqs):
    """Final-state row per word sequence (columns, keywords); (k, 2h)."""
    if not word_seqs:
        raise ShapeError("no sequences to encode")
    lengths = np.array([max(len(ws), 1) for ws in word_seqs])
    T = int(lengths.max())
    x = np.zeros((len(word_seqs), T, emb.dim))
    for i, ws in enumerate(word_seqs):
        for t, word in enumerate(ws):
            x[i, t] = emb.lookup(word)
    out, cache = bilstm_batch_forward(lstm_params, x, lengths)
    return bilstm_final_rows(out, lengths), (cache, lengths, T)


def encode_token_sequences_final_backward(lstm_params, cache_bundle, drows):
    cache, lengths, T = cache_bundle
    dout = bilstm_final_rows_backward(drows, lengths, T)
    _, grads = bilstm_batch_backward(lstm_params, cache, dout)
    return grads


def encode_column(lstm_params, emb, schema, col):
    """Table-aware column row: final BiLSTM state over the column's
    table/name/type/key word sequence."""
    from stacksql.schema import column_token_sequence

    rows, _ = encode_token_sequences_final(lstm_params, emb, [column_token_sequence(schema, col)])
    return rows[0]
