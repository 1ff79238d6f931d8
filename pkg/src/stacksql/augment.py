"""Cross-domain data augmentation: universal question-SQL patterns with
typed slots, refilled against new schemas.

A pattern pairs one SQL template with a list of question templates; slot
markers (⟨TAB0⟩, ⟨COL0⟩, ⟨VAL0⟩) correspond one-to-one between the two
sides.  The canonicalizer mines candidate patterns from labeled pairs for
review; the curated pattern file remains the source of truth.  Refilling
samples typed columns per table, so a string column never lands in a
number slot.
"""

import json
import re
from dataclasses import dataclass, field

import numpy as np

from stacksql.embeddings import tokenize
from stacksql.schema import column_label
from stacksql.sqlast import SqlQuery, Value, parse, serialize

SLOT_OPEN = "⟨"  # ⟨
SLOT_CLOSE = "⟩"  # ⟩

_SLOT_RE = re.compile(rf"{SLOT_OPEN}(TAB|COL|VAL)(\d+){SLOT_CLOSE}")

# placeholder literals by column type
VALUE_BY_TYPE = {"number": "1", "text": "value", "time": "2018", "boolean": "value", "others": "value"}

SQL_KEYWORDS = {
    "select", "from", "where", "group", "by", "having", "order", "limit",
    "join", "on", "as", "intersect", "union", "except", "and", "or", "in",
    "not", "like", "between", "desc", "asc", "max", "min", "sum", "count", "avg",
}


class PatternError(ValueError):
    """Pattern file entry is malformed."""


@dataclass
class Pattern:
    sql_template: str
    question_templates: list
    slots: dict  # slot id -> {"kind", "col_type", "table"}
    frequency: int = 1

    def slot_ids(self):
        return sorted(self.slots)

    def validate(self):
        sql_slots = {m.group(1) + m.group(2) for m in _SLOT_RE.finditer(self.sql_template)}
        if sql_slots != set(self.slots):
            raise PatternError(
                f"slot mismatch: sql uses {sorted(sql_slots)}, specs define {sorted(self.slots)}"
            )
        for qt in self.question_templates:
            for tok in qt:
                m = _SLOT_RE.fullmatch(tok)
                if m and m.group(1) + m.group(2) not in self.slots:
                    raise PatternError(f"question slot {tok} missing from sql template")
        for sid, spec in self.slots.items():
            if spec["kind"] not in ("table", "column", "value"):
                raise PatternError(f"slot {sid}: unknown kind {spec['kind']!r}")
        return self


@dataclass
class PatternStats:
    pattern_id: int
    frequency: int
    complexity: tuple  # (token length, keyword count)


def load_patterns(path):
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    patterns = []
    for rec in data["patterns"]:
        patterns.append(
            Pattern(
                sql_template=rec["sql_template"],
                question_templates=[list(q) for q in rec["question_templates"]],
                slots=dict(rec["slots"]),
            ).validate()
        )
    return patterns


def save_patterns(path, patterns, stats=None):
    payload = {
        "version": 1,
        "patterns": [
            {
                "sql_template": p.sql_template,
                "question_templates": p.question_templates,
                "slots": p.slots,
            }
            for p in patterns
        ],
    }
    if stats is not None:
        payload["stats"] = [
            {"pattern_id": s.pattern_id, "frequency": s.frequency, "complexity": list(s.complexity)}
            for s in stats
        ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2)


# ---------------------------------------------------------------------------
# Canonicalization (pattern mining)
# ---------------------------------------------------------------------------


def _replace_span(tokens, span_words, slot_token, used):
    """Replace the first unused occurrence of span_words inside tokens."""
    n = len(span_words)
    for i in range(len(tokens) - n + 1):
        if i in used:
            continue
        if tokens[i : i + n] == list(span_words) and not any(
            j in used for j in range(i, i + n)
        ):
            return tokens[:i] + [slot_token] + tokens[i + n :], set(range(i, i + n)) | used
    return None, used


def canonicalize(question, gold, schema):
    """Skeleton pattern from one labeled pair.

    Replaces table/column names and literals with numbered slots in both
    the SQL and the question; question mentions that cannot be located are
    flagged rather than failed.
    """
    table_slots = {}
    col_slots = {}
    val_slots = {}

    def table_slot(t):
        if t not in table_slots:
            table_slots[t] = f"TAB{len(table_slots)}"
        return f"{SLOT_OPEN}{table_slots[t]}{SLOT_CLOSE}"

    def col_slot(c):
        if schema.columns[c].table_index < 0:
            return "*"
        if c not in col_slots:
            col_slots[c] = f"COL{len(col_slots)}"
        return f"{SLOT_OPEN}{col_slots[c]}{SLOT_CLOSE}"

    def val_slot(v):
        key = v.text
        if key not in val_slots:
            val_slots[key] = f"VAL{len(val_slots)}"
        return f"{SLOT_OPEN}{val_slots[key]}{SLOT_CLOSE}"

    sql_template = serialize(
        gold, schema, col_name=lambda c: col_slot(c), table_name=lambda t: table_slot(t),
        value_text=lambda v: val_slot(v),
    )
    tokens = list(tokenize(question)) if isinstance(question, str) else list(question)
    used = set()
    flags = []
    for c, sid in col_slots.items():
        words = list(schema.columns[c].name_words)
        tokens2, used = _replace_span(tokens, words, f"{SLOT_OPEN}{sid}{SLOT_CLOSE}", used)
        if tokens2 is None:
            flags.append(f"column {column_label(schema, c)} not found in question")
        else:
            tokens = tokens2
    for t, sid in table_slots.items():
        words = list(schema.table_words[t])
        tokens2, used = _replace_span(tokens, words, f"{SLOT_OPEN}{sid}{SLOT_CLOSE}", used)
        if tokens2 is None:
            flags.append(f"table {schema.tables[t]} not found in question")
        else:
            tokens = tokens2
    for text, sid in val_slots.items():
        tokens2, used = _replace_span(tokens, tokenize(text), f"{SLOT_OPEN}{sid}{SLOT_CLOSE}", used)
        if tokens2 is None:
            flags.append(f"value {text!r} not found in question")
        else:
            tokens = tokens2

    slots = {}
    for t, sid in table_slots.items():
        slots[sid] = {"kind": "table"}
    for c, sid in col_slots.items():
        col = schema.columns[c]
        slots[sid] = {
            "kind": "column",
            "col_type": col.col_type,
            "table": table_slots.get(col.table_index),
        }
    for text, sid in val_slots.items():
        slots[sid] = {"kind": "value", "col_type": "number" if text.isdigit() else "text"}
    return Pattern(sql_template=sql_template, question_templates=[tokens], slots=slots), flags


def template_complexity(sql_template):
    toks = sql_template.lower().split()
    kw = sum(1 for t in toks if t.strip("(),") in SQL_KEYWORDS)
    return (len(toks), kw)


def _is_complex(p, min_keywords):
    length, kw = template_complexity(p.sql_template)
    upper = p.sql_template.upper()
    nested = "( SELECT" in upper or "(SELECT" in upper
    setop = any(w in upper for w in (" INTERSECT ", " UNION ", " EXCEPT "))
    return kw >= min_keywords or nested or setop


def group_and_rank(skeletons, min_keywords=3, top_k=50):
    """Merge equal SQL templates, drop simple ones, rank by frequency."""
    merged = {}
    order = []
    for p in skeletons:
        key = p.sql_template
        if key not in merged:
            merged[key] = Pattern(p.sql_template, [], dict(p.slots), frequency=0)
            order.append(key)
        tgt = merged[key]
        for qt in p.question_templates:
            if qt not in tgt.question_templates:
                tgt.question_templates.append(qt)
        tgt.frequency += 1
    ranked = []
    for key in order:
        p = merged[key]
        if not _is_complex(p, min_keywords):
            continue
        ranked.append(p)
    ranked.sort(key=lambda p: (-p.frequency, p.sql_template))
    ranked = ranked[:top_k]
    stats = [
        PatternStats(i, p.frequency, template_complexity(p.sql_template))
        for i, p in enumerate(ranked)
    ]
    return ranked, stats


# ---------------------------------------------------------------------------
# Refilling
# ---------------------------------------------------------------------------


@dataclass
class RefillStats:
    generated: int = 0
    skipped_unfillable: int = 0
    tables_without_fill: int = 0


def _fill_pattern(pattern, schema, table_index, rng):
    """Slot assignment for one (pattern, table); None when unfillable."""
    fillers = {}
    by_type = {}
    for sid in pattern.slot_ids():
        spec = pattern.slots[sid]
        if spec["kind"] == "table":
            fillers[sid] = ("table", table_index)
        elif spec["kind"] == "value":
            fillers[sid] = ("value", VALUE_BY_TYPE.get(spec.get("col_type", "text"), "value"))
    taken = set()
    for sid in pattern.slot_ids():
        spec = pattern.slots[sid]
        if spec["kind"] != "column":
            continue
        want = spec.get("col_type")
        pool = by_type.get(want)
        if pool is None:
            pool = [
                i
                for i, c in enumerate(schema.columns)
                if c.table_index == table_index and c.col_type == want
            ]
            by_type[want] = pool
        candidates = [i for i in pool if i not in taken]
        if not candidates:
            return None
        pick = candidates[int(rng.integers(len(candidates)))]
        taken.add(pick)
        fillers[sid] = ("column", pick)
    return fillers


def _render(pattern, fillers, schema, rng):
    def sql_text(sid):
        kind, v = fillers[sid]
        if kind == "table":
            return schema.tables[v]
        if kind == "column":
            return schema.columns[v].orig_name
        return v

    def question_text(sid):
        kind, v = fillers[sid]
        if kind == "table":
            return " ".join(schema.table_words[v])
        if kind == "column":
            return " ".join(schema.columns[v].name_words)
        return v

    sql = _SLOT_RE.sub(lambda m: sql_text(m.group(1) + m.group(2)), pattern.sql_template)
    qt = pattern.question_templates[int(rng.integers(len(pattern.question_templates)))]
    words = []
    for tok in qt:
        m = _SLOT_RE.fullmatch(tok)
        words.append(question_text(m.group(1) + m.group(2)) if m else tok)
    return " ".join(words), sql


def refill(patterns, schemas, per_table=10, seed=0, details=False):
    """Generate (question, SQL) pairs by slot refilling, per table.

    Deterministic under a fixed seed: every (schema, table) position draws
    from its own derived RNG stream regardless of iteration interleaving.
    Returns (rows, stats); each row is {"db_id", "question", "query"} and
    is guaranteed to parse against its schema.  details=True adds a
    "slots" record per row (slot id -> kind, constraint, chosen filler)
    for exhaustive type-safety auditing.
    """
    rows = []
    stats = RefillStats()
    for si, db_id in enumerate(sorted(schemas)):
        schema = schemas[db_id]
        for table_index in range(len(schema.tables)):
            rng = np.random.default_rng(np.random.SeedSequence((seed, si, table_index)))
            filled_here = 0
            for _ in range(per_table):
                pattern = patterns[int(rng.integers(len(patterns)))]
                fillers = _fill_pattern(pattern, schema, table_index, rng)
                if fillers is None:
                    stats.skipped_unfillable += 1
                    continue
                question, sql = _render(pattern, fillers, schema, rng)
                parse(sql, schema)  # must always succeed; fails loudly if not
                row = {"db_id": db_id, "question": question, "query": sql}
                if details:
                    row["slots"] = {
                        sid: {
                            "kind": kind,
                            "constraint": pattern.slots[sid].get("col_type"),
                            "filled_type": (
                                schema.columns[v].col_type if kind == "column" else None
                            ),
                            "filler": (
                                column_label(schema, v)
                                if kind == "column"
                                else (schema.tables[v] if kind == "table" else v)
                            ),
                        }
                        for sid, (kind, v) in fillers.items()
                    }
                rows.append(row)
                stats.generated += 1
                filled_here += 1
            if filled_here == 0:
                stats.tables_without_fill += 1
    return rows, stats
