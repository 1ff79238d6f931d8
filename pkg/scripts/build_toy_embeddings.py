"""Regenerate the bundled 50-dim word vector file.

Collects the vocabulary of the toy corpus, toy schemas, starter patterns,
and the fixed SQL surface words, then writes seeded random vectors in the
plain text format (token followed by its components).  Run from the repo
root:

    python3 scripts/build_toy_embeddings.py
"""

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from stacksql.embeddings import tokenize  # noqa: E402

DIM = 50
SEED = 7

SURFACE_WORDS = [
    # clause keywords and structural words seen in histories
    "select", "where", "group", "order", "by", "having", "limit",
    "intersect", "union", "except", "none", "and", "or", "asc", "desc",
    "root", "value", "all", "*",
    # operators
    "=", ">", "<", ">=", "<=", "!=", "like", "not", "in", "between",
    # aggregators
    "max", "min", "sum", "count", "avg",
    # column types and key flags
    "text", "number", "time", "boolean", "others", "primary", "foreign",
]


def collect_vocab(data_dir):
    vocab = set(SURFACE_WORDS)
    corpus = (data_dir / "toy_corpus.jsonl").read_text().splitlines()
    for line in corpus:
        if not line.strip():
            continue
        rec = json.loads(line)
        vocab.update(tokenize(rec["question"]))
        vocab.update(tokenize(rec["query"]))
    tables = json.loads((data_dir / "toy_tables.json").read_text())
    for db in tables:
        for t in db["table_names_original"]:
            vocab.update(tokenize(t))
        for _, name in db["column_names_original"]:
            if name != "*":
                vocab.update(tokenize(name))
    patterns = json.loads((data_dir / "starter_patterns.json").read_text())
    for p in patterns["patterns"]:
        for qt in p["question_templates"]:
            for tok in qt:
                if not tok.startswith("⟨"):
                    vocab.update(tokenize(tok))
    return sorted(vocab)


def main():
    data_dir = Path(__file__).resolve().parent.parent / "src" / "stacksql" / "data"
    vocab = collect_vocab(data_dir)
    rng = np.random.default_rng(SEED)
    out = data_dir / f"toy_embeddings_{DIM}d.txt"
    with out.open("w", encoding="utf-8") as fh:
        for tok in vocab:
            vec = rng.normal(0.0, 0.3, size=DIM)
            comps = " ".join(f"{v:.5f}" for v in vec)
            fh.write(f"{tok} {comps}\n")
    print(f"wrote {len(vocab)} vectors of dim {DIM} to {out}")


if __name__ == "__main__":
    main()
