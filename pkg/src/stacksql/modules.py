"""The nine prediction modules driving SQL generation.

Every module owns a private parameter set (two to four BiLSTM encoders,
attention matrices, projections, score heads); nothing is shared across
modules.  Each decision conditions on a question encoding, the decoding
history encoding, and, where applicable, an encoding of keyword rows, of
all schema columns, or of one already-chosen column.

Two head layouts cover all modules:

* candidate heads score one row per candidate embedding (set-operation
  keywords, clause keywords, schema columns);
* class heads score a fixed label set from a pooled embedding (counts,
  operators, aggregators, root/terminal, and/or, direction, having).

Single-choice heads train with softmax cross-entropy; set heads with
summed per-candidate sigmoid BCE plus a count head.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from stacksql.config import ModelConfig
from stacksql.embeddings import embed_sequence, embed_words_mean
from stacksql.encoders import (
    cand_scores_backward,
    cand_scores_forward,
    class_scores_backward,
    class_scores_forward,
    conditional_backward,
    conditional_forward,
    history_embedding,
)
from stacksql.numerics import (
    dropout_mask,
    sigmoid_bce,
    softmax_ce,
    uniform_init,
)
from stacksql.numerics.lstm import (
    BiLstmParams,
    LstmParams,
    bilstm_batch_backward,
    bilstm_batch_forward,
    bilstm_final_rows,
    bilstm_final_rows_backward,
    init_bilstm,
)
from stacksql.schema import column_token_sequence
from stacksql.sqlast import AGGREGATORS, DIRECTIONS, OPERATORS

IUEN_NAMES = ("none", "intersect", "union", "except")
IUEN_ROWS = (("none",), ("intersect",), ("union",), ("except",))
KW_NAMES = ("select", "where", "group", "order")
KW_ROWS = (("select",), ("where",), ("group", "by"), ("order", "by"))
KW_OPTIONAL = ("where", "group", "order")  # rows 1..3; select is implied
RT_NAMES = ("root", "terminal")
ANDOR_NAMES = ("and", "or")
HAVING_NAMES = ("none", "having")
DAL_NAMES = DIRECTIONS

CHECKPOINT_VERSION = 1

_LSTM_FIELDS = ("fwd.wx", "fwd.wh", "fwd.b", "bwd.wx", "bwd.wh", "bwd.b")


@dataclass(frozen=True)
class ModuleSpec:
    """Static description of one module's heads and inputs."""

    name: str
    x_kind: str  # "mkw" | "kw" | "col" | "cs" | None
    counts: tuple  # count-head values, or None
    num_terms: tuple
    val_kind: str  # "cand-softmax" | "cand-sigmoid" | "class-softmax" | "class-sigmoid"
    val_names: tuple  # class-head labels; None for candidate heads
    val_terms: tuple
    attention: bool = True

    @property
    def encoders(self):
        roles = ["q", "hs"]
        if self.x_kind in ("col", "cs"):
            roles.append("col")
        if self.x_kind in ("kw", "mkw"):
            roles.append("kw")
        return tuple(roles)


def module_specs(cfg):
    """The nine modules, sized from the configured caps."""
    return {
        "iuen": ModuleSpec(
            "iuen", "mkw", None, (), "cand-softmax", None, ("q", "hs", "x")
        ),
        "kw": ModuleSpec(
            "kw", "kw", tuple(range(cfg.kw_cap + 1)), ("q", "hs"),
            "cand-sigmoid", None, ("q", "hs", "x"),
        ),
        "col": ModuleSpec(
            "col", "col", tuple(range(1, cfg.col_cap + 1)), ("q", "hs"),
            "cand-sigmoid", None, ("q", "hs", "x"),
        ),
        "op": ModuleSpec(
            "op", "cs", tuple(range(1, cfg.op_cap + 1)), ("q", "hs", "x"),
            "class-sigmoid", OPERATORS, ("q", "hs", "x"),
        ),
        "agg": ModuleSpec(
            "agg", "cs", tuple(range(cfg.agg_cap + 1)), ("q", "hs", "x"),
            "class-sigmoid", AGGREGATORS, ("q", "hs", "x"),
        ),
        "root_terminal": ModuleSpec(
            "root_terminal", "cs", None, (), "class-softmax", RT_NAMES, ("q", "hs", "x")
        ),
        "andor": ModuleSpec(
            "andor", None, None, (), "class-softmax", ANDOR_NAMES, ("q", "hs"),
            attention=False,
        ),
        "dal": ModuleSpec(
            "dal", "cs", None, (), "class-softmax", DAL_NAMES, ("q", "hs", "x")
        ),
        "having": ModuleSpec(
            "having", "cs", None, (), "class-softmax", HAVING_NAMES, ("q", "hs", "x")
        ),
    }


@dataclass
class ModuleExample:
    """One supervised decision for one module."""

    question: tuple
    history: tuple  # word tuples, teacher-forced gold path
    db_id: str
    x_col: int = None  # conditioning column for cs modules
    gold_count: int = None  # count value (not class index)
    gold_set: tuple = ()  # candidate indices for set heads
    gold_choice: int = None  # label index for single-choice heads
    clause: str = None


@dataclass
class ModuleDecision:
    module: str
    targets: tuple
    count: int = None
    scores: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


def bilstm_view(params, prefix):
    return BiLstmParams(
        fwd=LstmParams(
            params[f"{prefix}.fwd.wx"], params[f"{prefix}.fwd.wh"], params[f"{prefix}.fwd.b"]
        ),
        bwd=LstmParams(
            params[f"{prefix}.bwd.wx"], params[f"{prefix}.bwd.wh"], params[f"{prefix}.bwd.b"]
        ),
    )


def init_module_params(spec, cfg, rng):
    d = cfg.encoding_dim
    params = {}
    for prefix in spec.encoders:
        bl = init_bilstm(rng, cfg.embedding_dim, cfg.hidden_dim)
        params[f"{prefix}.fwd.wx"] = bl.fwd.wx
        params[f"{prefix}.fwd.wh"] = bl.fwd.wh
        params[f"{prefix}.fwd.b"] = bl.fwd.b
        params[f"{prefix}.bwd.wx"] = bl.bwd.wx
        params[f"{prefix}.bwd.wh"] = bl.bwd.wh
        params[f"{prefix}.bwd.b"] = bl.bwd.b

    def mat():
        return uniform_init(rng, (d, d), d)

    if spec.counts is not None:
        if spec.attention:
            params["attn.num.q"] = mat()
            params["attn.num.hs"] = mat()
        for t in spec.num_terms:
            params[f"proj.num.{t}"] = mat()
        params["head.num"] = uniform_init(rng, (len(spec.counts), d), d)
    if spec.attention:
        params["attn.val.q"] = mat()
        params["attn.val.hs"] = mat()
    for t in spec.val_terms:
        params[f"proj.val.{t}"] = mat()
    if spec.val_kind.startswith("cand"):
        params["head.val"] = uniform_init(rng, (d,), d)
    else:
        params["head.val"] = uniform_init(rng, (len(spec.val_names), d), d)
    return params


def init_model_set(cfg, seed):
    """Fresh parameters for all nine modules; no arrays are shared."""
    specs = module_specs(cfg)
    names = sorted(specs)
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {
        name: init_module_params(specs[name], cfg, np.random.default_rng(child))
        for name, child in zip(names, children)
    }


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_params(path, module_name, params, cfg):
    meta = {
        "container": "stacksql-module",
        "version": CHECKPOINT_VERSION,
        "module": module_name,
        "hidden_dim": cfg.hidden_dim,
        "embedding_dim": cfg.embedding_dim,
        "shapes": {k: list(v.shape) for k, v in params.items()},
    }
    payload = dict(params)
    payload["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **payload)


def load_params(path, expect_module=None):
    data = np.load(path)
    meta = json.loads(bytes(data["__meta__"]).decode())
    if meta.get("container") != "stacksql-module":
        raise ValueError(f"{path}: not a module checkpoint")
    if meta["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {meta['version']}")
    if expect_module is not None and meta["module"] != expect_module:
        raise ValueError(f"{path}: holds {meta['module']!r}, expected {expect_module!r}")
    params = {k: data[k] for k in data.files if k != "__meta__"}
    for k, shape in meta["shapes"].items():
        if list(params[k].shape) != shape:
            raise ValueError(f"{path}: array {k} has shape {params[k].shape}, expected {shape}")
    return meta, params


# ---------------------------------------------------------------------------
# Head computation (per example)
# ---------------------------------------------------------------------------


def _class_head_forward(params, spec, head, HQ, HHS, X, x_pooled):
    """u = sum_t proj_t @ pooled(term_t); scores = head @ tanh(u)."""
    terms = spec.num_terms if head == "num" else spec.val_terms
    d = HQ.shape[1]
    u = np.zeros(d)
    cache = {"terms": {}, "head": head}
    for t in terms:
        if t == "x":
            u += params[f"proj.{head}.x"] @ x_pooled
            cache["x_pooled"] = x_pooled
            continue
        H = HQ if t == "q" else HHS
        if spec.attention:
            cond, ccache = conditional_forward(H, X, params[f"attn.{head}.{t}"])
            pooled = cond.mean(axis=0)
            cache["terms"][t] = ("attn", ccache, cond.shape[0], pooled)
        else:
            pooled = H.mean(axis=0)
            cache["terms"][t] = ("mean", None, H.shape[0], pooled)
        u += params[f"proj.{head}.{t}"] @ pooled
    scores, scache = class_scores_forward(u, params[f"head.{head}"])
    cache["scores"] = scache
    return scores, cache


def _class_head_backward(params, spec, cache, dscores, grads, dHQ, dHHS, dX):
    head = cache["head"]
    du, dV = class_scores_backward(cache["scores"], dscores)
    grads[f"head.{head}"] += dV
    for t, (kind, ccache, nrows, pooled) in cache["terms"].items():
        grads[f"proj.{head}.{t}"] += np.outer(du, pooled)
        dpooled = params[f"proj.{head}.{t}"].T @ du
        dspread = np.tile(dpooled / nrows, (nrows, 1))
        if kind == "attn":
            dH, dXc, dW = conditional_backward(ccache, dspread)
            grads[f"attn.{head}.{t}"] += dW
            dX += dXc
        else:
            dH = dspread
        if t == "q":
            dHQ += dH
        else:
            dHHS += dH
    if "x_pooled" in cache:
        grads[f"proj.{head}.x"] += np.outer(du, cache["x_pooled"])
        return params[f"proj.{head}.x"].T @ du
    return None


def _cand_head_forward(params, spec, HQ, HHS, X):
    """U = sum_t cond_t @ proj_t.T + X @ proj_x.T; scores = tanh(U) @ v."""
    U = np.zeros_like(X)
    cache = {"terms": {}}
    for t in spec.val_terms:
        if t == "x":
            U += X @ params["proj.val.x"].T
            continue
        H = HQ if t == "q" else HHS
        cond, ccache = conditional_forward(H, X, params[f"attn.val.{t}"])
        cache["terms"][t] = (ccache, cond)
        U += cond @ params[f"proj.val.{t}"].T
    scores, scache = cand_scores_forward(U, params["head.val"])
    cache["scores"] = scache
    cache["X"] = X
    return scores, cache


def _cand_head_backward(params, spec, cache, dscores, grads, dHQ, dHHS, dX):
    dU, dv = cand_scores_backward(cache["scores"], dscores)
    grads["head.val"] += dv
    for t, (ccache, cond) in cache["terms"].items():
        grads[f"proj.val.{t}"] += dU.T @ cond
        dcond = dU @ params[f"proj.val.{t}"]
        dH, dXc, dW = conditional_backward(ccache, dcond)
        grads[f"attn.val.{t}"] += dW
        dX += dXc
        if t == "q":
            dHQ += dH
        else:
            dHHS += dH
    if "x" in spec.val_terms:
        grads["proj.val.x"] += dU.T @ cache["X"]
        dX += dU @ params["proj.val.x"]


def _forward_example(spec, params, HQ, HHS, X, x_pooled):
    out = {}
    if spec.counts is not None:
        out["num"] = _class_head_forward(params, spec, "num", HQ, HHS, X, x_pooled)
    if spec.val_kind.startswith("cand"):
        out["val"] = _cand_head_forward(params, spec, HQ, HHS, X)
    else:
        out["val"] = _class_head_forward(params, spec, "val", HQ, HHS, X, x_pooled)
    return out


def _example_loss(spec, heads, ex):
    """Loss and per-head score gradients for one example."""
    loss = 0.0
    dscores = {}
    if spec.counts is not None:
        scores, _ = heads["num"]
        idx = spec.counts.index(ex.gold_count)
        l, d = softmax_ce(scores, idx)
        loss += l
        dscores["num"] = d
    scores, _ = heads["val"]
    if spec.val_kind.endswith("softmax"):
        l, d = softmax_ce(scores, ex.gold_choice)
        loss += l
        dscores["val"] = d
    else:
        k = scores.shape[0]
        labels = np.zeros(k)
        for i in ex.gold_set:
            labels[i] = 1.0
        if spec.name == "kw":
            # SELECT (row 0) is implied, never scored as a choice
            l, dpart = sigmoid_bce(scores[1:], labels[1:])
            d = np.zeros(k)
            d[1:] = dpart
        else:
            l, d = sigmoid_bce(scores, labels)
        loss += l
        dscores["val"] = d
    return loss, dscores


# ---------------------------------------------------------------------------
# Batched training loss
# ---------------------------------------------------------------------------


def _embed_questions(emb, questions):
    lengths = np.array([max(len(q), 1) for q in questions])
    T = int(lengths.max())
    x = np.zeros((len(questions), T, emb.dim))
    for b, q in enumerate(questions):
        for t, tok in enumerate(q):
            x[b, t] = emb.lookup(tok)
    return x, lengths


def _embed_histories(emb, histories):
    lengths = np.array([max(len(h), 1) for h in histories])
    T = int(lengths.max())
    x = np.zeros((len(histories), T, emb.dim))
    nonempty = np.array([1.0 if h else 0.0 for h in histories])
    for b, h in enumerate(histories):
        for t, vec in enumerate(history_embedding(emb, h)):
            x[b, t] = vec
    return x, lengths, nonempty


def _unique_index(values):
    """Deduplicate hashable values; returns (unique list, index per value).

    Examples in one batch frequently share a question (several decisions
    per query) and the empty history, so encoders run once per distinct
    sequence and gradients accumulate over the sharers.
    """
    uniq = []
    where = {}
    index = []
    for v in values:
        if v not in where:
            where[v] = len(uniq)
            uniq.append(v)
        index.append(where[v])
    return uniq, index


def _mask(rng, shape, rate):
    if rng is None or rate == 0.0:
        return None
    return dropout_mask(rng, shape, rate)


def _apply(mask, arr):
    return arr if mask is None else arr * mask


def loss_and_grads(spec, params, examples, emb, schemas, cfg, rng=None):
    """Mean loss over a batch and gradients for every parameter.

    rng enables inverted dropout on the encoder outputs (training mode);
    None disables it (evaluation and gradient checking).
    """
    B = len(examples)
    if B == 0:
        raise ValueError("empty batch")
    grads = {k: np.zeros_like(v) for k, v in params.items()}

    # question encodings, one run per distinct question
    uniq_q, q_index = _unique_index([ex.question for ex in examples])
    xq, lq = _embed_questions(emb, uniq_q)
    q_lstm = bilstm_view(params, "q")
    HQ_all, q_cache = bilstm_batch_forward(q_lstm, xq, lq)
    mq = _mask(rng, HQ_all.shape, cfg.dropout)
    HQ_eff = _apply(mq, HQ_all)

    # history encodings, one run per distinct history (empty = zero row)
    uniq_h, h_index = _unique_index([ex.history for ex in examples])
    xh, lh, h_nonempty = _embed_histories(emb, uniq_h)
    hs_lstm = bilstm_view(params, "hs")
    HHS_all, h_cache = bilstm_batch_forward(hs_lstm, xh, lh)
    HHS_all = HHS_all * h_nonempty[:, None, None]
    mh = _mask(rng, HHS_all.shape, cfg.dropout)
    HHS_eff = _apply(mh, HHS_all)

    # X encodings
    x_ctx = _encode_x_forward(spec, params, examples, emb, schemas, cfg, rng)

    dHQ_eff = np.zeros_like(HQ_eff)
    dHHS_eff = np.zeros_like(HHS_eff)
    total = 0.0
    for b, ex in enumerate(examples):
        qi = q_index[b]
        hi = h_index[b]
        HQ = HQ_eff[qi, : lq[qi]]
        HHS = HHS_eff[hi, : lh[hi]]
        X, x_pooled = x_ctx.example_x(b, ex)
        heads = _forward_example(spec, params, HQ, HHS, X, x_pooled)
        loss, dscores = _example_loss(spec, heads, ex)
        total += loss
        dHQ = np.zeros_like(HQ)
        dHHS = np.zeros_like(HHS)
        dX = np.zeros_like(X) if X is not None else None
        if "num" in dscores:
            dxp = _class_head_backward(
                params, spec, heads["num"][1], dscores["num"], grads, dHQ, dHHS, dX
            )
            if dxp is not None:
                x_ctx.add_pooled_grad(b, ex, dxp)
        if spec.val_kind.startswith("cand"):
            _cand_head_backward(params, spec, heads["val"][1], dscores["val"], grads, dHQ, dHHS, dX)
        else:
            dxp = _class_head_backward(
                params, spec, heads["val"][1], dscores["val"], grads, dHQ, dHHS, dX
            )
            if dxp is not None:
                x_ctx.add_pooled_grad(b, ex, dxp)
        dHQ_eff[qi, : lq[qi]] += dHQ
        dHHS_eff[hi, : lh[hi]] += dHHS
        if dX is not None:
            x_ctx.add_matrix_grad(b, ex, dX)

    # encoder backward passes
    dHQ_raw = _apply(mq, dHQ_eff)
    _, q_grads = bilstm_batch_backward(q_lstm, q_cache, dHQ_raw)
    _add_lstm_grads(grads, "q", q_grads)

    dHHS_raw = _apply(mh, dHHS_eff) * h_nonempty[:, None, None]
    _, h_grads = bilstm_batch_backward(hs_lstm, h_cache, dHHS_raw)
    _add_lstm_grads(grads, "hs", h_grads)

    x_ctx.backward(grads)

    for k in grads:
        grads[k] /= B
    return total / B, grads


def _add_lstm_grads(grads, prefix, lstm_grads):
    for k, v in lstm_grads.items():
        grads[f"{prefix}.{k}"] += v


class _XContext:
    """Forward X encodings per x_kind plus gradient accumulation."""

    def __init__(self, spec, params, cfg):
        self.spec = spec
        self.params = params
        self.cfg = cfg
        self.kind = spec.x_kind
        self.rows = None  # kw/mkw rows or cs rows
        self.cache = None
        self.mask = None
        self.drows = None
        self.index = None  # cs: example -> distinct-column row
        self.per_schema = {}  # db_id -> [rows, cache, mask, drows]

    def example_x(self, b, ex):
        if self.kind in ("kw", "mkw"):
            return self.rows, None
        if self.kind == "col":
            return self.per_schema[ex.db_id][0], None
        if self.kind == "cs":
            i = self.index[b]
            return self.rows[i : i + 1], self.rows[i]
        return None, None

    def add_matrix_grad(self, b, ex, dX):
        if self.kind in ("kw", "mkw"):
            self.drows += dX
        elif self.kind == "col":
            self.per_schema[ex.db_id][3] += dX
        elif self.kind == "cs":
            self.drows[self.index[b]] += dX[0]

    def add_pooled_grad(self, b, ex, dxp):
        # only cs modules feed a pooled x row into class heads
        self.drows[self.index[b]] += dxp

    def backward(self, grads):
        raise NotImplementedError


def _encode_x_forward(spec, params, examples, emb, schemas, cfg, rng):
    from stacksql.encoders import (
        encode_token_sequences_final,
        encode_token_sequences_final_backward,
    )

    ctx = _XContext(spec, params, cfg)
    kind = spec.x_kind
    if kind is None:
        ctx.backward = lambda grads: None
        return ctx
    lstm = bilstm_view(params, "kw" if kind in ("kw", "mkw") else "col")

    if kind in ("kw", "mkw"):
        word_rows = KW_ROWS if kind == "kw" else IUEN_ROWS
        rows, cache = encode_token_sequences_final(lstm, emb, list(word_rows))
        ctx.mask = _mask(rng, rows.shape, cfg.dropout)
        ctx.rows = _apply(ctx.mask, rows)
        ctx.cache = cache
        ctx.drows = np.zeros_like(rows)

        def backward(grads):
            draw = _apply(ctx.mask, ctx.drows)
            _add_lstm_grads(grads, "kw", encode_token_sequences_final_backward(lstm, cache, draw))

        ctx.backward = backward
        return ctx

    if kind == "col":
        # all schemas' columns in one padded batch, sliced per db afterwards
        db_ids = []
        seqs = []
        slices = {}
        for ex in examples:
            if ex.db_id in slices:
                continue
            s = schemas[ex.db_id]
            start = len(seqs)
            seqs.extend(column_token_sequence(s, i) for i in range(len(s.columns)))
            slices[ex.db_id] = (start, len(seqs))
            db_ids.append(ex.db_id)
        rows, cache = encode_token_sequences_final(lstm, emb, seqs)
        mask = _mask(rng, rows.shape, cfg.dropout)
        rows_eff = _apply(mask, rows)
        drows = np.zeros_like(rows)
        for db_id in db_ids:
            lo, hi = slices[db_id]
            ctx.per_schema[db_id] = [rows_eff[lo:hi], None, None, drows[lo:hi]]

        def backward(grads):
            draw = _apply(mask, drows)
            _add_lstm_grads(grads, "col", encode_token_sequences_final_backward(lstm, cache, draw))

        ctx.backward = backward
        return ctx

    # cs: one run per distinct conditioning column
    uniq, ctx.index = _unique_index([(ex.db_id, ex.x_col) for ex in examples])
    seqs = [column_token_sequence(schemas[db], col) for db, col in uniq]
    rows, cache = encode_token_sequences_final(lstm, emb, seqs)
    ctx.mask = _mask(rng, rows.shape, cfg.dropout)
    ctx.rows = _apply(ctx.mask, rows)
    ctx.cache = cache
    ctx.drows = np.zeros_like(rows)

    def backward(grads):
        draw = _apply(ctx.mask, ctx.drows)
        _add_lstm_grads(grads, "col", encode_token_sequences_final_backward(lstm, cache, draw))

    ctx.backward = backward
    return ctx


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


class IncrementalHistoryEncoder:
    """Exact BiLSTM history encoding for append-only histories.

    Within one decode the history only grows, so per-token gate inputs and
    the forward-direction recurrence advance incrementally; only the
    backward-direction recurrence (which depends on the whole suffix) is
    recomputed per call.  Matches encode_history to fp tolerance.
    """

    _GROW = 64

    def __init__(self, params, emb):
        from stacksql.numerics.lstm import seq_forward  # noqa: F401  (resolved here once)

        self.p = params
        self.emb = emb
        self.n = 0
        h = params.hidden_dim
        self._cap = self._GROW
        self.xg_f = np.zeros((self._cap, 4 * h))
        self.xg_b = np.zeros((self._cap, 4 * h))
        self.fwd_rows = np.zeros((self._cap, h))
        self._h = np.zeros(h)
        self._c = np.zeros(h)
        self._whf_t = np.ascontiguousarray(params.fwd.wh.T)
        self._whb_t = np.ascontiguousarray(params.bwd.wh.T)
        self._memo = None  # (length, encoding); histories often repeat length

    def _grow(self, need):
        while self._cap < need:
            self._cap *= 2
        for name in ("xg_f", "xg_b", "fwd_rows"):
            old = getattr(self, name)
            new = np.zeros((self._cap, old.shape[1]))
            new[: old.shape[0]] = old
            setattr(self, name, new)

    def encode(self, history):
        from stacksql.numerics.lstm import seq_forward

        n = len(history)
        if n == 0:
            return np.zeros((1, 2 * self.p.hidden_dim))
        if n < self.n:
            raise ValueError("history shrank; it must be append-only within one decode")
        if self._memo is not None and self._memo[0] == n:
            return self._memo[1]
        if n > self._cap:
            self._grow(n)
        if n > self.n:
            xs = np.stack(
                [embed_words_mean(self.emb, list(history[i])) for i in range(self.n, n)]
            )
            self.xg_f[self.n : n] = xs @ self.p.fwd.wx.T + self.p.fwd.b
            self.xg_b[self.n : n] = xs @ self.p.bwd.wx.T + self.p.bwd.b
            rows, self._h, self._c = seq_forward(
                np.ascontiguousarray(self.xg_f[self.n : n]), self._whf_t, self._h, self._c
            )
            self.fwd_rows[self.n : n] = rows
            self.n = n
        zero = np.zeros(self.p.hidden_dim)
        hs_rev, _, _ = seq_forward(
            np.ascontiguousarray(self.xg_b[:n][::-1]), self._whb_t, zero, zero
        )
        out = np.concatenate([self.fwd_rows[:n], hs_rev[::-1]], axis=1)
        self._memo = (n, out)
        return out


def _top_n(scores, n, among=None):
    """Indices of the n best scores, stable so ties go to lower indices."""
    idx = np.arange(len(scores)) if among is None else np.asarray(among)
    order = np.argsort(-scores[idx], kind="stable")
    return tuple(int(idx[i]) for i in order[:n])


def predict(spec, params, HQ, HHS, X, x_pooled):
    """Greedy decision from precomputed encodings (no dropout)."""
    heads = _forward_example(spec, params, HQ, HHS, X, x_pooled)
    scores = {name: h[0] for name, h in heads.items()}
    count = None
    if spec.counts is not None:
        count = spec.counts[int(np.argmax(scores["num"]))]
    sv = scores["val"]
    name = spec.name
    if name == "iuen":
        targets = (IUEN_NAMES[int(np.argmax(sv))],)
    elif name == "kw":
        rows = _top_n(sv, count, among=[1, 2, 3])
        targets = tuple(KW_NAMES[r] for r in rows)
    elif name == "col":
        targets = _top_n(sv, count)
    elif name == "op":
        targets = tuple(OPERATORS[i] for i in _top_n(sv, count))
    elif name == "agg":
        targets = tuple(AGGREGATORS[i] for i in _top_n(sv, count)) if count else ()
    else:
        targets = (spec.val_names[int(np.argmax(sv))],)
    return ModuleDecision(module=name, targets=targets, count=count, scores=scores)


class InferenceSession:
    """Caches per-question and per-schema encodings for one decode.

    Parameters are frozen at inference time, so question, column, and
    keyword encodings are computed once per module; only the history is
    re-encoded at every invocation.
    """

    def __init__(self, models, cfg, emb, schema, question):
        self.models = models
        self.cfg = cfg
        self.emb = emb
        self.schema = schema
        self.question = tuple(question) or ("",)
        self.specs = module_specs(cfg)
        self._hq = {}
        self._x = {}
        self._cs = {}
        self._hs = {}

    def _question_enc(self, name):
        if name not in self._hq:
            from stacksql.encoders import encode_question

            self._hq[name] = encode_question(
                bilstm_view(self.models[name], "q"), self.emb, self.question
            )
        return self._hq[name]

    def _x_table(self, name):
        if name not in self._x:
            from stacksql.encoders import encode_token_sequences_final

            spec = self.specs[name]
            lstm_prefix = "kw" if spec.x_kind in ("kw", "mkw") else "col"
            lstm = bilstm_view(self.models[name], lstm_prefix)
            if spec.x_kind in ("kw", "mkw"):
                seqs = list(KW_ROWS if spec.x_kind == "kw" else IUEN_ROWS)
            else:
                seqs = [
                    column_token_sequence(self.schema, i)
                    for i in range(len(self.schema.columns))
                ]
            rows, _ = encode_token_sequences_final(lstm, self.emb, seqs)
            self._x[name] = rows
        return self._x[name]

    def _cs_row(self, name, col):
        key = (name, col)
        if key not in self._cs:
            from stacksql.encoders import encode_token_sequences_final

            lstm = bilstm_view(self.models[name], "col")
            rows, _ = encode_token_sequences_final(
                lstm, self.emb, [column_token_sequence(self.schema, col)]
            )
            self._cs[key] = rows[0]
        return self._cs[key]

    def run(self, name, history, x_col=None):
        spec = self.specs[name]
        params = self.models[name]
        HQ = self._question_enc(name)
        if name not in self._hs:
            self._hs[name] = IncrementalHistoryEncoder(bilstm_view(params, "hs"), self.emb)
        HHS = self._hs[name].encode(history)
        X, x_pooled = None, None
        if spec.x_kind in ("kw", "mkw", "col"):
            X = self._x_table(name)
        elif spec.x_kind == "cs":
            row = self._cs_row(name, x_col)
            X = row[None, :]
            x_pooled = row
        return predict(spec, params, HQ, HHS, X, x_pooled)


class NeuralPolicy:
    """Greedy decode policy backed by the trained modules."""

    def __init__(self, models, cfg, emb, schema, question):
        self.session = InferenceSession(models, cfg, emb, schema, question)

    def _history(self, ctx):
        return ctx.history.snapshot()

    def iuen(self, ctx):
        return self.session.run("iuen", self._history(ctx)).targets[0]

    def kw(self, ctx):
        return self.session.run("kw", self._history(ctx)).targets

    def col(self, ctx):
        return self.session.run("col", self._history(ctx)).targets

    def agg(self, ctx):
        return self.session.run("agg", self._history(ctx), x_col=ctx.col).targets

    def op(self, ctx):
        return self.session.run("op", self._history(ctx), x_col=ctx.col).targets

    def root_terminal(self, ctx):
        return self.session.run("root_terminal", self._history(ctx), x_col=ctx.col).targets[0]

    def andor(self, ctx):
        return self.session.run("andor", self._history(ctx)).targets[0]

    def having(self, ctx):
        decision = self.session.run("having", self._history(ctx), x_col=ctx.col).targets[0]
        return decision == "having"

    def dal(self, ctx):
        return self.session.run("dal", self._history(ctx), x_col=ctx.col).targets[0]
