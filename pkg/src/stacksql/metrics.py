"""Set-match evaluation: clause decomposition, component F1, exact match,
and hardness levels.

Queries are decomposed into five component bags (SELECT, WHERE, GROUP BY,
ORDER BY, KEYWORDS).  Bags are canonical sorted tuples, so bag equality is
plain tuple equality; ordering inside a clause never matters.  Condition
literals are excluded everywhere; nested subqueries decompose recursively
into structural markers.  Set-operation operands merge into one bag set,
with the set-operation keyword recorded in KEYWORDS.

HAVING conditions live in the GROUP BY component (tagged items), since the
evaluation defines five components and HAVING is part of the grouped
clause.  Hardness cutoffs are configurable and echoed into every report;
they are documented defaults, not canonical values.
"""

from dataclasses import dataclass, field

from stacksql.schema import column_label
from stacksql.sqlast import SqlQuery


@dataclass(frozen=True)
class ComponentSets:
    select: tuple
    where: tuple
    group_by: tuple
    order_by: tuple
    keywords: tuple

    COMPONENTS = ("select", "where", "group_by", "order_by", "keywords")

    def component(self, name):
        return getattr(self, name)


@dataclass(frozen=True)
class HardnessThresholds:
    """Score cutoffs; the score counts clauses beyond SELECT, extra select
    items, conditions, and aggregators."""

    easy_max: int = 1
    medium_max: int = 2
    hard_max: int = 4
    nested_extra_min: int = 3  # nesting/set-op plus this score -> extra hard

    def as_dict(self):
        return {
            "easy_max": self.easy_max,
            "medium_max": self.medium_max,
            "hard_max": self.hard_max,
            "nested_extra_min": self.nested_extra_min,
        }


HARDNESS_LEVELS = ("easy", "medium", "hard", "extra hard")


def _rhs_marker(rhs, schema):
    if isinstance(rhs, SqlQuery):
        sub = decompose(rhs, schema)
        return ("sub", sub.select, sub.where, sub.group_by, sub.order_by, sub.keywords)
    return "value"


def _cond_items(conds, schema):
    return [
        (column_label(schema, c.col), c.agg, c.op, _rhs_marker(c.rhs, schema))
        for c in conds or []
    ]


def _decompose_single(q, schema):
    select = [(agg, column_label(schema, col)) for agg, col in q.select]
    where = [
        (label, op, marker) for label, _agg, op, marker in _cond_items(q.where, schema)
    ]
    group = []
    keywords = []
    aggs = []
    if q.where:
        keywords.append("where")
        keywords.extend(c.op for c in q.where)
    if q.group:
        keywords.append("group by")
        group.extend(("col", column_label(schema, c)) for c in q.group.cols)
        if q.group.having:
            keywords.append("having")
            keywords.extend(c.op for c in q.group.having)
            group.extend(("having",) + item for item in _cond_items(q.group.having, schema))
    order = []
    if q.order:
        keywords.append("order by")
        if "limit" in q.order.direction:
            keywords.append("limit")
        order.extend(
            (agg, column_label(schema, col), q.order.direction) for agg, col in q.order.items
        )
    return select, where, group, order, keywords


def decompose(q, schema):
    """Canonical component bags of a query (set-op operands merged)."""
    select, where, group, order, keywords = _decompose_single(q, schema)
    node = q
    while node.set_op != "none":
        keywords.append(node.set_op)
        rhs = node.rhs
        s2, w2, g2, o2, k2 = _decompose_single(rhs, schema)
        select += s2
        where += w2
        group += g2
        order += o2
        keywords += k2
        node = rhs
    return ComponentSets(
        select=tuple(sorted(select)),
        where=tuple(sorted(where)),
        group_by=tuple(sorted(group)),
        order_by=tuple(sorted(order)),
        keywords=tuple(sorted(keywords)),
    )


def exact_match(pred, gold, schema):
    """1 iff every component bag matches (values ignored)."""
    return int(decompose(pred, schema) == decompose(gold, schema))


def component_f1(preds, golds, schemas):
    """Micro-averaged per-component F1 over aligned prediction/gold lists.

    A component counts only where it is present (nonempty) in the
    prediction or the gold; a present-on-both-sides mismatch is both a
    false positive and a false negative.
    """
    if not (len(preds) == len(golds) == len(schemas)):
        raise ValueError("preds, golds, and schemas must have equal lengths")
    tallies = {c: {"tp": 0, "fp": 0, "fn": 0} for c in ComponentSets.COMPONENTS}
    for pred, gold, schema in zip(preds, golds, schemas):
        dp = decompose(pred, schema)
        dg = decompose(gold, schema)
        for c in ComponentSets.COMPONENTS:
            bp = dp.component(c)
            bg = dg.component(c)
            if not bp and not bg:
                continue
            if bp == bg:
                tallies[c]["tp"] += 1
            elif bp and not bg:
                tallies[c]["fp"] += 1
            elif bg and not bp:
                tallies[c]["fn"] += 1
            else:
                tallies[c]["fp"] += 1
                tallies[c]["fn"] += 1
    out = {}
    for c, t in tallies.items():
        denom = 2 * t["tp"] + t["fp"] + t["fn"]
        f1 = (2 * t["tp"] / denom) if denom else 1.0
        out[c] = {"f1": f1, **t}
    return out


def _has_nesting(q):
    for conds in (q.where or []), (q.group.having or [] if q.group else []):
        for c in conds:
            if isinstance(c.rhs, SqlQuery):
                return True
    return False


def hardness(q, thresholds=None):
    """One of easy / medium / hard / extra hard, from clause counts.

    The score adds clause keywords beyond SELECT, extra select items,
    conditions, and aggregators on the top-level query; nesting or a set
    operation lifts the level to at least hard.
    """
    t = thresholds or HardnessThresholds()
    score = 0
    score += 1 if q.where else 0
    score += 1 if q.group else 0
    score += 1 if q.group and q.group.having else 0
    score += 1 if q.order else 0
    score += 1 if q.order and "limit" in q.order.direction else 0
    score += len(q.select) - 1
    score += len(q.where or [])
    score += len(q.group.having) if q.group and q.group.having else 0
    score += sum(1 for agg, _ in q.select if agg != "none")
    if q.order:
        score += sum(1 for agg, _ in q.order.items if agg != "none")
    if q.group and q.group.having:
        score += sum(1 for c in q.group.having if c.agg != "none")
    special = _has_nesting(q) or q.set_op != "none"
    if special:
        return "extra hard" if score >= t.nested_extra_min else "hard"
    if score <= t.easy_max:
        return "easy"
    if score <= t.medium_max:
        return "medium"
    if score <= t.hard_max:
        return "hard"
    return "extra hard"


def build_report(pairs, thresholds=None, extra=None):
    """Evaluation report: exact match (overall and per hardness level),
    per-component F1, and the thresholds used.

    pairs: list of (pred SqlQuery, gold SqlQuery, schema).
    """
    t = thresholds or HardnessThresholds()
    preds = [p for p, _, _ in pairs]
    golds = [g for _, g, _ in pairs]
    schemas = [s for _, _, s in pairs]
    per_level = {level: {"count": 0, "exact": 0} for level in HARDNESS_LEVELS}
    exact_total = 0
    for pred, gold, schema in pairs:
        level = hardness(gold, t)
        em = exact_match(pred, gold, schema)
        per_level[level]["count"] += 1
        per_level[level]["exact"] += em
        exact_total += em
    n = len(pairs)
    report = {
        "count": n,
        "exact_match": exact_total / n if n else 0.0,
        "exact_match_by_hardness": {
            level: {
                "count": v["count"],
                "exact_match": (v["exact"] / v["count"]) if v["count"] else None,
            }
            for level, v in per_level.items()
        },
        "component_f1": component_f1(preds, golds, schemas),
        "hardness_thresholds": t.as_dict(),
    }
    if extra:
        report.update(extra)
    return report


def format_report_table(report):
    """Plain-text table mirroring the usual accuracy layout."""
    lines = []
    lines.append(f"{'level':<12} {'count':>6} {'exact':>8}")
    for level in HARDNESS_LEVELS:
        row = report["exact_match_by_hardness"][level]
        em = "-" if row["exact_match"] is None else f"{row['exact_match']:.3f}"
        lines.append(f"{level:<12} {row['count']:>6} {em:>8}")
    lines.append(f"{'all':<12} {report['count']:>6} {report['exact_match']:>8.3f}")
    lines.append("")
    lines.append(f"{'component':<12} {'f1':>8} {'tp':>5} {'fp':>5} {'fn':>5}")
    for comp, vals in report["component_f1"].items():
        lines.append(
            f"{comp:<12} {vals['f1']:>8.3f} {vals['tp']:>5} {vals['fp']:>5} {vals['fn']:>5}"
        )
    return "\n".join(lines)
