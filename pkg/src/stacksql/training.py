"""Supervised example extraction and per-module training.

Teacher forcing: gold trees are walked by the forced-decode engine, so
every recorded invocation carries exactly the history the decoder would
have produced on the gold path.  Each module trains separately on its own
examples with its own optimizer state; modules never share parameters.
"""

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from stacksql.config import ModelConfig, TrainConfig
from stacksql.decoder import UnsupportedGoldError, decode, forced_decode
from stacksql.embeddings import tokenize
from stacksql.modules import (
    ANDOR_NAMES,
    DAL_NAMES,
    IUEN_NAMES,
    KW_NAMES,
    RT_NAMES,
    ModuleExample,
    NeuralPolicy,
    bilstm_view,
    init_module_params,
    loss_and_grads,
    module_specs,
    predict,
    save_params,
)
from stacksql.numerics import adam_step, init_adam
from stacksql.sqlast import (
    AGGREGATORS,
    OPERATORS,
    ResolutionError,
    UnsupportedSqlError,
    parse,
)

_KW_ROW = {"where": 1, "group": 2, "order": 3}


@dataclass
class CorpusItem:
    db_id: str
    question: str
    query: str
    tokens: tuple
    gold: object  # SqlQuery


@dataclass
class ExtractionStats:
    total: int = 0
    used: int = 0
    skipped: dict = field(default_factory=dict)

    def skip(self, reason):
        self.skipped[reason] = self.skipped.get(reason, 0) + 1


def load_corpus(path, schemas):
    """Read question/query JSON lines, parsing gold SQL against each schema.

    Unparseable or unsupported rows are skipped and counted.
    """
    items = []
    stats = ExtractionStats()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            stats.total += 1
            rec = json.loads(line)
            db_id = rec["db_id"]
            if db_id not in schemas:
                stats.skip("unknown_db")
                continue
            try:
                gold = parse(rec["query"], schemas[db_id])
            except (UnsupportedSqlError, ResolutionError):
                stats.skip("unparseable_gold")
                continue
            items.append(
                CorpusItem(
                    db_id=db_id,
                    question=rec["question"],
                    query=rec["query"],
                    tokens=tuple(tokenize(rec["question"])),
                    gold=gold,
                )
            )
            stats.used += 1
    return items, stats


def _invocation_to_example(inv, item):
    """Map one gold-forced invocation to a supervised example."""
    common = dict(
        question=item.tokens,
        history=inv.history,
        db_id=item.db_id,
        clause=inv.clause,
        x_col=inv.col,
    )
    d = inv.decision
    if inv.module == "iuen":
        return ModuleExample(gold_choice=IUEN_NAMES.index(d), **common)
    if inv.module == "kw":
        rows = tuple(sorted(_KW_ROW[k] for k in d))
        return ModuleExample(gold_count=len(rows), gold_set=rows, **common)
    if inv.module == "col":
        return ModuleExample(gold_count=len(d), gold_set=tuple(d), **common)
    if inv.module == "op":
        idx = tuple(OPERATORS.index(o) for o in d)
        return ModuleExample(gold_count=len(idx), gold_set=idx, **common)
    if inv.module == "agg":
        idx = tuple(AGGREGATORS.index(a) for a in d)
        return ModuleExample(gold_count=len(idx), gold_set=idx, **common)
    if inv.module == "root_terminal":
        return ModuleExample(gold_choice=RT_NAMES.index(d), **common)
    if inv.module == "andor":
        return ModuleExample(gold_choice=ANDOR_NAMES.index(d), **common)
    if inv.module == "dal":
        return ModuleExample(gold_choice=DAL_NAMES.index(d), **common)
    if inv.module == "having":
        return ModuleExample(gold_choice=1 if d else 0, **common)
    raise ValueError(f"unknown module {inv.module!r}")


def extract_examples(items, schemas, cfg=None):
    """Per-module supervised examples from gold trees (pre-order walk)."""
    cfg = cfg or ModelConfig()
    examples = {name: [] for name in module_specs(cfg)}
    stats = ExtractionStats(total=len(items))
    for item in items:
        try:
            result = forced_decode(item.gold, schemas[item.db_id], cfg, question=item.tokens)
        except UnsupportedGoldError:
            stats.skip("not_decodable")
            continue
        for inv in result.invocations:
            if inv.forced:
                continue
            examples[inv.module].append(_invocation_to_example(inv, item))
        stats.used += 1
    return examples, stats


def _module_seed(seed, name):
    names = sorted(module_specs(ModelConfig()))
    return np.random.SeedSequence((seed, names.index(name)))


def train_module(name, examples, schemas, emb, tcfg):
    """Train one module; returns (params, per-epoch mean losses)."""
    if not examples:
        raise ValueError(f"no training examples for module {name!r}")
    cfg = tcfg.model
    spec = module_specs(cfg)[name]
    seeds = _module_seed(tcfg.seed, name).spawn(3)
    params = init_module_params(spec, cfg, np.random.default_rng(seeds[0]))
    shuffle_rng = np.random.default_rng(seeds[1])
    dropout_rng = np.random.default_rng(seeds[2])
    state = init_adam(params, lr=tcfg.learning_rate)
    losses = []
    n = len(examples)
    for _ in range(tcfg.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, tcfg.batch_size):
            batch = [examples[i] for i in order[start : start + tcfg.batch_size]]
            loss, grads = loss_and_grads(
                spec, params, batch, emb, schemas, cfg, rng=dropout_rng
            )
            adam_step(state, params, grads)
            epoch_loss += loss * len(batch)
        losses.append(epoch_loss / n)
    return params, losses


def evaluate_module(name, params, examples, schemas, emb, cfg):
    """Per-head accuracy: argmax for count/choice heads, exact set (at the
    gold count) for set-valued heads."""
    from stacksql.encoders import encode_history
    from stacksql.modules import InferenceSession, _forward_example, _top_n

    spec = module_specs(cfg)[name]
    num_hits = 0
    val_hits = 0
    total = 0
    sessions = {}
    for ex in examples:
        key = (ex.db_id, ex.question)
        if key not in sessions:
            sessions[key] = InferenceSession(
                {name: params}, cfg, emb, schemas[ex.db_id], ex.question
            )
        session = sessions[key]
        HQ = session._question_enc(name)
        HHS = encode_history(bilstm_view(params, "hs"), emb, ex.history)
        X, x_pooled = None, None
        if spec.x_kind in ("kw", "mkw", "col"):
            X = session._x_table(name)
        elif spec.x_kind == "cs":
            row = session._cs_row(name, ex.x_col)
            X = row[None, :]
            x_pooled = row
        heads = _forward_example(spec, params, HQ, HHS, X, x_pooled)
        total += 1
        if spec.counts is not None:
            pred_count = spec.counts[int(np.argmax(heads["num"][0]))]
            if pred_count == ex.gold_count:
                num_hits += 1
        sv = heads["val"][0]
        if spec.val_kind.endswith("softmax"):
            if int(np.argmax(sv)) == ex.gold_choice:
                val_hits += 1
        else:
            among = [1, 2, 3] if name == "kw" else None
            got = set(_top_n(sv, len(ex.gold_set), among=among))
            if got == set(ex.gold_set):
                val_hits += 1
    out = {"val": val_hits / total if total else 0.0, "examples": total}
    if spec.counts is not None:
        out["num"] = num_hits / total if total else 0.0
    return out


def _train_worker(args):
    name, examples, schemas, emb, tcfg = args
    t0 = time.time()
    params, losses = train_module(name, examples, schemas, emb, tcfg)
    return name, params, losses, time.time() - t0


def train_all(items, schemas, emb, tcfg, out_dir=None, jobs=1, log=None):
    """Train all nine modules; optionally write checkpoints and loss CSVs."""
    log = log or (lambda msg: None)
    examples, stats = extract_examples(items, schemas, tcfg.model)
    for name, exs in sorted(examples.items()):
        log(f"extracted {len(exs):4d} examples for {name}")
    if stats.skipped:
        log(f"skipped gold queries: {stats.skipped}")
    jobs_args = [
        (name, exs, schemas, emb, tcfg) for name, exs in sorted(examples.items()) if exs
    ]
    models = {}
    curves = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for name, params, losses, took in pool.map(_train_worker, jobs_args):
                models[name] = params
                curves[name] = losses
                log(f"trained {name} in {took:.1f}s, final loss {losses[-1]:.4f}")
    else:
        for args in jobs_args:
            name, params, losses, took = _train_worker(args)
            models[name] = params
            curves[name] = losses
            log(f"trained {name} in {took:.1f}s, final loss {losses[-1]:.4f}")
    if out_dir is not None:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, params in models.items():
            save_params(out / f"{name}.npz", name, params, tcfg.model)
            with open(out / f"{name}_loss.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["epoch", "loss"])
                for i, loss in enumerate(curves[name]):
                    writer.writerow([i, f"{loss:.6f}"])
    return models, curves, examples, stats


def decode_with_models(models, cfg, emb, schema, question_tokens, shared_cache=None):
    """Greedy decode of one question with trained modules.

    shared_cache (a plain dict) carries the per-schema column and keyword
    encodings across decodes; parameters are frozen at inference time, so
    sharing them is purely a speed-up.
    """
    policy = NeuralPolicy(models, cfg, emb, schema, question_tokens)
    if shared_cache is not None:
        per_db = shared_cache.setdefault(schema.db_id, {"x": {}, "cs": {}})
        policy.session._x = per_db["x"]
        policy.session._cs = per_db["cs"]
    return decode(question_tokens, schema, policy, cfg)
