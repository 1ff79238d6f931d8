"""Random AST generator for round-trip property tests.

Independent of the decoder: builds SqlQuery values directly, with FROM
clauses derived from the used columns so every query is serializable.
"""

import numpy as np

from stacksql.decoder import build_from_clause
from stacksql.sqlast import (
    AGGREGATORS,
    DIRECTIONS,
    OPERATORS,
    Condition,
    GroupBy,
    OrderBy,
    SqlQuery,
    Value,
)


def random_query(schema, rng, depth=0, max_depth=2, allow_set_op=True):
    ncols = len(schema.columns)

    def pick_cols(n):
        idx = rng.choice(ncols, size=min(n, ncols), replace=False)
        return [int(i) for i in idx]

    def maybe_agg():
        return AGGREGATORS[int(rng.integers(len(AGGREGATORS)))] if rng.random() < 0.4 else "none"

    select = [(maybe_agg(), c) for c in pick_cols(int(rng.integers(1, 4)))]

    def random_conditions():
        conds = []
        cols = pick_cols(int(rng.integers(1, 3)))
        conj = "and" if rng.random() < 0.7 else "or"
        for c in cols:
            op = OPERATORS[int(rng.integers(len(OPERATORS)))]
            if op == "between":
                rhs = (Value.placeholder(), Value.placeholder())
            elif depth < max_depth and rng.random() < 0.3:
                rhs = random_query(schema, rng, depth + 1, max_depth, allow_set_op=False)
            else:
                rhs = Value.placeholder()
            conds.append(Condition(col=c, op=op, rhs=rhs, conj=conj))
        conds[-1].conj = None
        return conds

    where = random_conditions() if rng.random() < 0.6 else None
    group = None
    if rng.random() < 0.4:
        having = random_conditions() if rng.random() < 0.5 else None
        group = GroupBy(cols=pick_cols(int(rng.integers(1, 3))), having=having)
    order = None
    if rng.random() < 0.4:
        direction = DIRECTIONS[int(rng.integers(len(DIRECTIONS)))]
        order = OrderBy(
            items=[(maybe_agg(), c) for c in pick_cols(int(rng.integers(1, 3)))],
            direction=direction,
            limit_value=Value.placeholder() if "limit" in direction else None,
        )
    set_op = "none"
    rhs = None
    if allow_set_op and depth < max_depth and rng.random() < 0.25:
        set_op = ("intersect", "union", "except")[int(rng.integers(3))]
        rhs = random_query(schema, rng, depth + 1, max_depth, allow_set_op=False)

    q = SqlQuery(select=select, where=where, group=group, order=order, set_op=set_op, rhs=rhs)
    used = {c for _, c in q.select}
    for conds in (q.where or []), (q.group.having or [] if q.group else []):
        used.update(c.col for c in conds)
    if q.group:
        used.update(q.group.cols)
    if q.order:
        used.update(c for _, c in q.order.items)
    q.from_clause = build_from_clause(schema, used)
    return q
