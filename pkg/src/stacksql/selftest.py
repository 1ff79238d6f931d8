"""Self-diagnostics: per-module gradient checks and grammar fuzzing.

Gradient checks run every module's full training loss against central
finite differences on small instances (hidden 4, encoding width 8).
The decode fuzz initializes all nine modules randomly at the production
width and drives full decodes over the bundled toy schemas, asserting
termination, the depth cap, and parse/serialize round-trips.
"""

import time

import numpy as np

from stacksql.config import ModelConfig
from stacksql.datafiles import toy_embeddings_path, toy_tables_path
from stacksql.embeddings import WordEmbeddings, load_vectors
from stacksql.modules import (
    ModuleExample,
    init_model_set,
    init_module_params,
    loss_and_grads,
    module_specs,
)
from stacksql.numerics import grad_check
from stacksql.schema import _schema_from_record, load_schema_file
from stacksql.sqlast import normalize_values, parse, serialize
from stacksql.training import decode_with_models

SELFTEST_CFG = ModelConfig(hidden_dim=4, embedding_dim=6, dropout=0.3)

_VOCAB = [
    "alpha", "beta", "gamma", "delta", "select", "where", "group", "by",
    "order", "having", "none", "intersect", "union", "except", "t", "a",
    "b", "c", "number", "text", "primary", "value", "root", "and", "or",
    "asc", "desc", "limit", "all", "*", "=", ">", "<", "max", "count",
]


def selftest_embeddings(seed=17):
    rng = np.random.default_rng(seed)
    emb = WordEmbeddings(dim=SELFTEST_CFG.embedding_dim)
    for w in _VOCAB:
        emb.vectors[w] = rng.normal(0.0, 0.5, size=emb.dim)
    return emb


def selftest_schema():
    return _schema_from_record(
        {
            "db_id": "mini",
            "table_names_original": ["t"],
            "column_names_original": [[-1, "*"], [0, "a"], [0, "b"], [0, "c"]],
            "column_types": ["text", "number", "text", "number"],
            "primary_keys": [1],
            "foreign_keys": [],
        }
    )


def selftest_examples(name):
    """Two supervised examples per module, exercising both heads."""
    q1 = ("alpha", "beta", "gamma")
    q2 = ("delta", "alpha")
    h1 = (("select",), ("a",))
    h2 = ()
    common = dict(db_id="mini")
    table = {
        "iuen": [
            ModuleExample(q1, h2, gold_choice=2, **common),
            ModuleExample(q2, h1, gold_choice=0, **common),
        ],
        "kw": [
            ModuleExample(q1, (("none",),), gold_count=2, gold_set=(1, 3), **common),
            ModuleExample(q2, (("none",),), gold_count=0, gold_set=(), **common),
        ],
        "col": [
            ModuleExample(q1, h1, gold_count=2, gold_set=(1, 3), **common),
            ModuleExample(q2, h1, gold_count=1, gold_set=(2,), **common),
        ],
        "op": [
            ModuleExample(q1, h1, x_col=1, gold_count=2, gold_set=(1, 2), **common),
            ModuleExample(q2, h1, x_col=3, gold_count=1, gold_set=(0,), **common),
        ],
        "agg": [
            ModuleExample(q1, h1, x_col=1, gold_count=1, gold_set=(4,), **common),
            ModuleExample(q2, h1, x_col=3, gold_count=0, gold_set=(), **common),
        ],
        "root_terminal": [
            ModuleExample(q1, h1, x_col=1, gold_choice=0, **common),
            ModuleExample(q2, h1, x_col=2, gold_choice=1, **common),
        ],
        "andor": [
            ModuleExample(q1, h1, gold_choice=1, **common),
            ModuleExample(q2, h1, gold_choice=0, **common),
        ],
        "dal": [
            ModuleExample(q1, h1, x_col=1, gold_choice=2, **common),
            ModuleExample(q2, h1, x_col=3, gold_choice=0, **common),
        ],
        "having": [
            ModuleExample(q1, h1, x_col=1, gold_choice=1, **common),
            ModuleExample(q2, h1, x_col=1, gold_choice=0, **common),
        ],
    }
    return table[name]


def module_instance(name, seed=11):
    spec = module_specs(SELFTEST_CFG)[name]
    params = init_module_params(spec, SELFTEST_CFG, np.random.default_rng(seed))
    return spec, params


def run_grad_checks(h=1e-3, log=None, seed=11):
    """Full-loss gradient check for all nine modules; returns name -> error."""
    log = log or (lambda msg: None)
    emb = selftest_embeddings()
    schemas = {"mini": selftest_schema()}
    errors = {}
    for name in sorted(module_specs(SELFTEST_CFG)):
        spec, params = module_instance(name, seed=seed)
        examples = selftest_examples(name)

        def loss_fn(p):
            return loss_and_grads(spec, p, examples, emb, schemas, SELFTEST_CFG)

        t0 = time.time()
        err = grad_check(loss_fn, params, h=h)
        errors[name] = err
        log(f"grad check {name:14s} max rel err {err:.2e} ({time.time() - t0:.1f}s)")
    return errors


def _fuzz_questions(emb, rng, n):
    vocab = sorted(emb.vectors)
    questions = []
    for _ in range(n):
        k = int(rng.integers(3, 9))
        idx = rng.integers(0, len(vocab), size=k)
        questions.append(tuple(vocab[i] for i in idx))
    return questions


def run_decode_fuzz(n=1000, seed=1234, cfg=None, reinit_every=125, log=None):
    """Decode n questions with randomly initialized modules over the toy
    schemas; every output must round-trip through parse(serialize(.)).

    The grammar properties under test (termination, depth cap, validity)
    do not depend on encoder width, and untrained random modules wander
    into very wide generation trees, so the default fuzz config narrows
    the encoders and tightens the invocation safety valve; recursion depth
    and per-clause count caps stay at their production defaults.
    Returns (ok, seconds, max_depth_seen).
    """
    log = log or (lambda msg: None)
    cfg = cfg or ModelConfig(hidden_dim=30, max_invocations=60)
    schemas = load_schema_file(toy_tables_path())
    emb = load_vectors(toy_embeddings_path())
    rng = np.random.default_rng(seed)
    db_ids = sorted(schemas)
    questions = _fuzz_questions(emb, rng, n)
    t0 = time.time()
    ok = 0
    max_depth_seen = 0
    models = None
    cache = None
    for i in range(n):
        if i % reinit_every == 0:
            models = init_model_set(cfg, seed=seed + i)
            cache = {}
        schema = schemas[db_ids[i % len(db_ids)]]
        result = decode_with_models(models, cfg, emb, schema, questions[i], shared_cache=cache)
        for inv in result.invocations:
            if inv.depth > cfg.max_depth:
                raise AssertionError("decode exceeded the depth cap")
            max_depth_seen = max(max_depth_seen, inv.depth)
        text = serialize(result.query, schema)
        back = parse(text, schema)
        if normalize_values(back) == result.query:
            ok += 1
        if (i + 1) % 200 == 0:
            log(f"fuzz {i + 1}/{n} decodes, {time.time() - t0:.1f}s")
    return ok, time.time() - t0, max_depth_seen
