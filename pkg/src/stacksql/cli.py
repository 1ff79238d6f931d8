"""Command-line entry point: train, decode, eval, augment, selftest.

All file I/O is JSON or JSON lines; every output artifact embeds the
effective configuration and seed.  Exit codes: 0 success, 1 data or
check failure (with a diagnostic), 2 usage errors (argparse).
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from stacksql.config import ModelConfig, TrainConfig
from stacksql.datafiles import starter_patterns_path, toy_embeddings_path
from stacksql.embeddings import load_vectors, tokenize
from stacksql.metrics import (
    HardnessThresholds,
    build_report,
    format_report_table,
)
from stacksql.schema import SchemaFormatError, load_schema_file
from stacksql.sqlast import (
    ResolutionError,
    StructureError,
    UnsupportedSqlError,
    parse,
    serialize,
)

EMBEDDINGS_ENV = "STACKSQL_EMBEDDINGS"


class DataError(RuntimeError):
    """Bad input data; reported as a diagnostic with exit code 1."""


def _embeddings_path(args):
    if getattr(args, "embeddings", None):
        return args.embeddings
    env = os.environ.get(EMBEDDINGS_ENV)
    if env:
        return env
    return toy_embeddings_path()


def _model_config(args):
    kw = {}
    for field in (
        "hidden_dim",
        "dropout",
        "max_depth",
        "col_cap",
        "op_cap",
        "agg_cap",
        "max_invocations",
    ):
        v = getattr(args, field, None)
        if v is not None:
            kw[field] = v
    emb = load_vectors(_embeddings_path(args))
    cfg = ModelConfig(embedding_dim=emb.dim, **kw)
    return cfg, emb


def _config_echo(args, cfg):
    return {
        "seed": args.seed,
        "hidden_dim": cfg.hidden_dim,
        "dropout": cfg.dropout,
        "embedding_dim": cfg.embedding_dim,
        "max_depth": cfg.max_depth,
        "col_cap": cfg.col_cap,
        "op_cap": cfg.op_cap,
        "agg_cap": cfg.agg_cap,
        "max_invocations": cfg.max_invocations,
        "embeddings": _embeddings_path(args),
    }


def _load_schemas(path):
    try:
        return load_schema_file(path)
    except (OSError, SchemaFormatError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot load schemas from {path}: {exc}") from exc


def _add_model_flags(p):
    p.add_argument("--embeddings", help=f"vector file (default ${EMBEDDINGS_ENV} or bundled)")
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--col-cap", dest="col_cap", type=int)
    p.add_argument("--op-cap", dest="op_cap", type=int)
    p.add_argument("--agg-cap", dest="agg_cap", type=int)
    p.add_argument("--max-invocations", dest="max_invocations", type=int)
    p.add_argument("--seed", type=int, default=20)


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args):
    from stacksql.training import load_corpus, train_all

    cfg, emb = _model_config(args)
    schemas = _load_schemas(args.tables)
    items, lstats = load_corpus(args.corpus, schemas)
    if not items:
        raise DataError(f"no usable corpus rows in {args.corpus} (skipped: {lstats.skipped})")
    tcfg = TrainConfig(
        batch_size=args.batch_size,
        epochs=args.epochs,
        learning_rate=args.lr,
        seed=args.seed,
        model=cfg,
    )
    t0 = time.time()
    models, curves, examples, estats = train_all(
        items, schemas, emb, tcfg, out_dir=args.out_dir, jobs=args.jobs, log=print
    )
    summary = {
        "config": _config_echo(args, cfg),
        "batch_size": tcfg.batch_size,
        "epochs": tcfg.epochs,
        "learning_rate": tcfg.learning_rate,
        "corpus_rows": lstats.total,
        "corpus_used": lstats.used,
        "corpus_skipped": lstats.skipped,
        "extraction_skipped": estats.skipped,
        "examples_per_module": {k: len(v) for k, v in examples.items()},
        "final_loss": {k: v[-1] for k, v in curves.items()},
        "seconds": round(time.time() - t0, 2),
    }
    out = Path(args.out_dir) / "train_summary.json"
    out.write_text(json.dumps(summary, indent=2, sort_keys=True))
    print(f"wrote checkpoints and loss curves to {args.out_dir} ({summary['seconds']}s)")
    return 0


# ---------------------------------------------------------------------------
# decode
# ---------------------------------------------------------------------------


def _load_models(checkpoint_dir, cfg):
    from stacksql.modules import load_params, module_specs

    models = {}
    for name in module_specs(cfg):
        path = Path(checkpoint_dir) / f"{name}.npz"
        if not path.exists():
            raise DataError(f"missing checkpoint {path}")
        meta, params = load_params(path, expect_module=name)
        if meta["hidden_dim"] != cfg.hidden_dim:
            raise DataError(
                f"{path}: checkpoint hidden_dim {meta['hidden_dim']} != configured {cfg.hidden_dim}"
            )
        models[name] = params
    return models


def cmd_decode(args):
    from stacksql.training import decode_with_models

    cfg, emb = _model_config(args)
    schemas = _load_schemas(args.tables)
    models = _load_models(args.checkpoints, cfg)
    cache = {}
    out_lines = []
    traces = []
    with open(args.questions) as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    for row in rows:
        db_id = row["db_id"]
        if db_id not in schemas:
            raise DataError(f"question references unknown db_id {db_id!r}")
        schema = schemas[db_id]
        tokens = tuple(tokenize(row["question"]))
        result = decode_with_models(models, cfg, emb, schema, tokens, shared_cache=cache)
        out_lines.append(serialize(result.query, schema))
        if args.trace:
            traces.append(
                {
                    "db_id": db_id,
                    "question": row["question"],
                    "sql": out_lines[-1],
                    "steps": [
                        {
                            "popped": s.popped,
                            "module": s.module,
                            "decision": s.decision,
                            "stack_size": s.stack_size,
                        }
                        for s in result.trace
                    ],
                }
            )
    Path(args.out).write_text("".join(line + "\n" for line in out_lines))
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(json.dumps({"config": _config_echo(args, cfg)}) + "\n")
            for t in traces:
                fh.write(json.dumps(t) + "\n")
    print(f"decoded {len(out_lines)} questions to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def cmd_eval(args):
    cfg, emb = _model_config(args)
    schemas = _load_schemas(args.tables)
    with open(args.gold) as fh:
        gold_rows = [json.loads(line) for line in fh if line.strip()]
    with open(args.pred) as fh:
        pred_lines = [line.rstrip("\n") for line in fh if line.strip()]
    if len(gold_rows) != len(pred_lines):
        raise DataError(
            f"{len(gold_rows)} gold rows but {len(pred_lines)} predictions"
        )
    pairs = []
    skipped = {}
    for row, pred_sql in zip(gold_rows, pred_lines):
        schema = schemas.get(row["db_id"])
        if schema is None:
            skipped["unknown_db"] = skipped.get("unknown_db", 0) + 1
            continue
        try:
            gold = parse(row["query"], schema)
        except (UnsupportedSqlError, ResolutionError, StructureError):
            skipped["unparseable_gold"] = skipped.get("unparseable_gold", 0) + 1
            continue
        try:
            pred = parse(pred_sql, schema)
        except (UnsupportedSqlError, ResolutionError, StructureError):
            skipped["unparseable_pred"] = skipped.get("unparseable_pred", 0) + 1
            continue
        pairs.append((pred, gold, schema))
    if not pairs:
        raise DataError("no evaluable pairs")
    thresholds = HardnessThresholds(
        easy_max=args.easy_max,
        medium_max=args.medium_max,
        hard_max=args.hard_max,
        nested_extra_min=args.nested_extra_min,
    )
    report = build_report(
        pairs,
        thresholds,
        extra={"config": _config_echo(args, cfg), "skipped": skipped},
    )
    Path(args.report).write_text(json.dumps(report, indent=2, sort_keys=True))
    if args.text_table:
        print(format_report_table(report))
    print(f"exact match {report['exact_match']:.3f} over {report['count']} pairs -> {args.report}")
    return 0


# ---------------------------------------------------------------------------
# augment
# ---------------------------------------------------------------------------


def cmd_augment(args):
    from stacksql.augment import canonicalize, group_and_rank, load_patterns, refill, save_patterns

    cfg, emb = _model_config(args)
    schemas = _load_schemas(args.tables)
    if args.mine_corpus:
        if not args.review:
            raise DataError("--mine-corpus requires --review OUTPUT for the candidate dump")
        from stacksql.training import load_corpus

        items, _ = load_corpus(args.mine_corpus, schemas)
        skeletons = []
        flagged = 0
        for item in items:
            pattern, flags = canonicalize(item.question, item.gold, schemas[item.db_id])
            if flags:
                flagged += 1
            skeletons.append(pattern)
        ranked, stats = group_and_rank(skeletons, top_k=args.top_k)
        save_patterns(args.review, ranked, stats)
        print(
            f"mined {len(skeletons)} skeletons -> {len(ranked)} complex patterns "
            f"({flagged} with unmatched slots) -> {args.review}"
        )
        return 0
    patterns = load_patterns(args.patterns or starter_patterns_path())
    rows, stats = refill(patterns, schemas, per_table=args.per_table, seed=args.seed)
    with open(args.out, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    meta = {
        "config": _config_echo(args, cfg),
        "per_table": args.per_table,
        "patterns": len(patterns),
        "generated": stats.generated,
        "skipped_unfillable": stats.skipped_unfillable,
        "tables_without_fill": stats.tables_without_fill,
    }
    Path(str(args.out) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    print(f"generated {stats.generated} pairs -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------


def cmd_selftest(args):
    from stacksql.selftest import run_decode_fuzz, run_grad_checks

    failures = []
    errors = run_grad_checks(log=print)
    for name, err in sorted(errors.items()):
        status = "PASS" if err <= 1e-4 else "FAIL"
        if status == "FAIL":
            failures.append(f"grad check {name}: {err:.2e}")
        print(f"{status} grad-check {name} ({err:.2e})")
    n = args.fuzz
    ok, seconds, max_depth = run_decode_fuzz(n=n, seed=args.seed, log=print)
    status = "PASS" if ok == n else "FAIL"
    if ok != n:
        failures.append(f"fuzz: {ok}/{n} grammatical")
    print(f"{status} decode-fuzz {ok}/{n} grammatical in {seconds:.1f}s (max depth {max_depth})")
    if failures:
        for f in failures:
            print(f"FAILED: {f}", file=sys.stderr)
        return 1
    print("selftest OK")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stacksql",
        description="Grammar-guided text-to-SQL: train, decode, evaluate, augment.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train all nine modules on a corpus")
    p.add_argument("--corpus", required=True, help="JSON lines {db_id, question, query}")
    p.add_argument("--tables", required=True, help="schema file (tables.json layout)")
    p.add_argument("--out-dir", required=True, help="checkpoint output directory")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--jobs", type=int, default=1, help="parallel module-training workers")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="decode questions into SQL")
    p.add_argument("--tables", required=True)
    p.add_argument("--questions", required=True, help="JSON lines {db_id, question}")
    p.add_argument("--checkpoints", required=True)
    p.add_argument("--out", required=True, help="output file, one SQL string per line")
    p.add_argument("--trace", help="optional JSON-lines decode trace output")
    _add_model_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="score predictions against gold queries")
    p.add_argument("--gold", required=True, help="JSON lines {db_id, question, query}")
    p.add_argument("--pred", required=True, help="one SQL string per line, aligned with gold")
    p.add_argument("--tables", required=True)
    p.add_argument("--report", required=True, help="JSON report output path")
    p.add_argument("--text-table", action="store_true", help="print a plain-text table")
    p.add_argument("--easy-max", type=int, default=1)
    p.add_argument("--medium-max", type=int, default=2)
    p.add_argument("--hard-max", type=int, default=4)
    p.add_argument("--nested-extra-min", type=int, default=3)
    _add_model_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("augment", help="generate question-SQL pairs by slot refilling")
    p.add_argument("--tables", required=True)
    p.add_argument("--patterns", help="pattern file (default: bundled starter patterns)")
    p.add_argument("--out", help="JSON lines corpus output")
    p.add_argument("--per-table", dest="per_table", type=int, default=10)
    p.add_argument("--mine-corpus", dest="mine_corpus", help="mine candidate patterns from a corpus")
    p.add_argument("--review", help="candidate pattern dump for --mine-corpus")
    p.add_argument("--top-k", dest="top_k", type=int, default=50)
    _add_model_flags(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("selftest", help="gradient checks and grammar fuzzing")
    p.add_argument("--fuzz", type=int, default=1000, help="number of fuzz decodes")
    _add_model_flags(p)
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "augment" and not (args.out or args.mine_corpus):
        parser.error("augment requires --out (refill) or --mine-corpus/--review (mining)")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
