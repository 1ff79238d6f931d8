"""Stack-driven recursive SQL generation.

One engine runs every decode: a stack starts with ROOT, each popped token
invokes a prediction module (via grammar.next_module), the decision is
appended to the history and its token instances are pushed back.  The
policy object supplies decisions, which is how the same walk serves three
purposes:

* NeuralPolicy  - trained modules, greedy argmax (test-time decoding);
* GoldPolicy    - decisions read off a gold tree (teacher forcing, example
                  extraction, and the forced-decode consistency check);
* RandomPolicy  - seeded uniform decisions (grammar fuzzing).

The FROM clause is not predicted: it is built afterwards from the set of
tables owning the used columns, joined along shortest foreign-key paths.
This reproduces the known failure mode where a column set that never
touches a second table yields a FROM clause missing it.
"""

from collections import deque
from dataclasses import dataclass, field

from stacksql import grammar as g
from stacksql.config import ModelConfig
from stacksql.sqlast import (
    AGGREGATORS,
    DIRECTIONS,
    OPERATORS,
    SET_OPS,
    Condition,
    GroupBy,
    OrderBy,
    SqlQuery,
    Value,
    canonical_from,
    validate_query,
)

_MAX_POPS = 10_000_000  # hard bug trap; caps + depth limit imply far fewer

KW_CHOICES = ("where", "group", "order")
RT_CHOICES = ("root", "terminal")
ANDOR_CHOICES = ("and", "or")
HAVING_CHOICES = ("none", "having")
# enumeration order fixes tie-breaking: ascending keeps ASC/AND/NONE first
DAL_CHOICES = ("asc", "desc", "asc limit", "desc limit")
IUEN_CHOICES = ("none", "intersect", "union", "except")

_KEYWORD_TOKEN = {"where": g.WHERE, "group": g.GROUP, "order": g.ORDER}


class UnsupportedGoldError(ValueError):
    """Gold query cannot be expressed as a decision sequence of the grammar."""


@dataclass
class Invocation:
    """One module call: everything needed to train or replay the decision."""

    module: str
    depth: int
    history: tuple  # word tuples emitted before this call
    decision: object
    clause: str = None
    col: int = None  # conditioning column for op/agg/rt/dal/having
    op: str = None  # operator context for root/terminal
    forced: bool = False


@dataclass
class TraceStep:
    popped: str
    module: str
    decision: str
    stack_size: int


@dataclass
class DecodeResult:
    query: SqlQuery
    trace: list
    invocations: list
    history: object


class _PendingCond:
    __slots__ = ("col", "op", "rhs", "sub")

    def __init__(self, col, op):
        self.col = col
        self.op = op
        self.rhs = None
        self.sub = None


class QueryBuilder:
    """Mutable per-subquery accumulator assembled into a SqlQuery."""

    def __init__(self, schema, depth):
        self.schema = schema
        self.depth = depth
        self.select = []
        self.where_conds = []
        self.having_conds = []
        self.group_cols = []
        self.order_items = []
        self.order_dir = None
        self.conj = {"where": "and", "having": "and"}
        self.set_op = "none"
        self.rhs = None
        self.has_where = False
        self.has_group = False
        self.has_order = False
        self.has_having = False

    def used_columns(self):
        used = {c for _, c in self.select}
        used.update(pc.col for pc in self.where_conds)
        used.update(pc.col for pc in self.having_conds)
        used.update(self.group_cols)
        used.update(c for _, c in self.order_items)
        return used

    def finalize(self):
        def build_conds(pending, conj):
            conds = []
            for i, pc in enumerate(pending):
                if pc.sub is not None:
                    rhs = pc.sub.finalize()
                elif pc.op == "between":
                    rhs = (Value.placeholder(), Value.placeholder())
                else:
                    rhs = Value.placeholder()
                last = i == len(pending) - 1
                conds.append(Condition(col=pc.col, op=pc.op, rhs=rhs, conj=None if last else conj))
            return conds or None

        select = list(self.select) or [("none", 0)]
        group = None
        if self.has_group and self.group_cols:
            group = GroupBy(
                cols=list(self.group_cols),
                having=build_conds(self.having_conds, self.conj["having"]),
            )
        order = None
        if self.has_order and self.order_items:
            direction = self.order_dir or "asc"
            order = OrderBy(
                items=list(self.order_items),
                direction=direction,
                limit_value=Value.placeholder() if "limit" in direction else None,
            )
        q = SqlQuery(
            select=select,
            from_clause=build_from_clause(self.schema, self.used_columns()),
            where=build_conds(self.where_conds, self.conj["where"]) if self.has_where else None,
            group=group,
            order=order,
            set_op=self.set_op,
            rhs=self.rhs.finalize() if self.rhs is not None else None,
        )
        return validate_query(q, self.schema)


# ---------------------------------------------------------------------------
# FROM clause construction
# ---------------------------------------------------------------------------


def _fk_adjacency(schema):
    """table -> sorted [(neighbor table, canonical fk column pair)]."""
    edges = {}
    for a, b in schema.foreign_keys:
        ta, tb = schema.table_of(a), schema.table_of(b)
        if ta < 0 or tb < 0 or ta == tb:
            continue
        key = (min(ta, tb), max(ta, tb))
        pair = tuple(sorted((a, b)))
        if key not in edges or pair < edges[key]:
            edges[key] = pair
    adj = {}
    for (ta, tb), pair in edges.items():
        adj.setdefault(ta, []).append((tb, pair))
        adj.setdefault(tb, []).append((ta, pair))
    for t in adj:
        adj[t].sort()
    return adj


def build_from_clause(schema, used_cols):
    """Derive the table set and join conditions from the used columns.

    Tables owning the used columns are connected along shortest paths in
    the (undirected) foreign-key graph, lowest table index first.  Tables
    unreachable from the rest are emitted as cross joins and flagged.
    """
    tables = sorted({schema.table_of(c) for c in used_cols if schema.table_of(c) >= 0})
    if not tables:
        # nothing but `*` was used; fall back to the first table
        return canonical_from([0], [])
    if len(tables) == 1:
        return canonical_from(tables, [])
    adj = _fk_adjacency(schema)
    connected = {tables[0]}
    joins = []
    cross = False
    for target in tables[1:]:
        if target in connected:
            continue
        path = _bfs_to_set(adj, target, connected)
        if path is None:
            cross = True
            connected.add(target)
            continue
        for u, v, pair in path:
            joins.append(pair)
            connected.add(u)
            connected.add(v)
    return canonical_from(sorted(connected), joins, cross)


def _bfs_to_set(adj, start, goal_set):
    """Shortest path from start to any goal table; neighbors explored in
    ascending order so ties break toward lower table indices."""
    parent = {start: None}
    queue = deque([start])
    hit = None
    while queue:
        u = queue.popleft()
        if u in goal_set:
            hit = u
            break
        for v, pair in adj.get(u, []):
            if v not in parent:
                parent[v] = (u, pair)
                queue.append(v)
    if hit is None:
        return None
    path = []
    node = hit
    while parent[node] is not None:
        prev, pair = parent[node]
        path.append((prev, node, pair))
        node = prev
    path.reverse()
    return path


# ---------------------------------------------------------------------------
# Decision context
# ---------------------------------------------------------------------------


@dataclass
class Ctx:
    question: tuple
    schema: object
    history: object
    depth: int
    node: object
    clause: str = None
    col: int = None
    op: str = None
    candidates: tuple = None
    cfg: ModelConfig = field(default_factory=ModelConfig)


def _check_subset(decision, candidates, what, lo, hi):
    seen = set()
    for d in decision:
        if d not in candidates:
            raise g.GrammarError(f"{what} decision {d!r} outside candidates")
        if d in seen:
            raise g.GrammarError(f"duplicate {what} decision {d!r}")
        seen.add(d)
    if not lo <= len(decision) <= hi:
        raise g.GrammarError(f"{what} count {len(decision)} outside [{lo}, {hi}]")


# ---------------------------------------------------------------------------
# The engine
# ---------------------------------------------------------------------------


def decode(question, schema, policy, cfg=None):
    """Run one full stack decode; returns a DecodeResult.

    Guaranteed to terminate and produce a structurally valid query for any
    policy that answers within the offered candidate sets.
    """
    cfg = cfg or ModelConfig()
    question = tuple(question)
    root = QueryBuilder(schema, depth=0)
    stack = g.DecodeStack()
    stack.push(g.GrammarToken(g.ROOT, 0, node=root))
    history = g.HistoryPath()
    trace = []
    invocations = []
    pops = 0

    def emit(token):
        history.append(token, schema)

    def ctx_for(tok, **kw):
        return Ctx(
            question=question,
            schema=schema,
            history=history,
            depth=tok.depth,
            node=tok.node,
            cfg=cfg,
            **kw,
        )

    def record(module, tok, decision, forced=False, clause=None, col=None, op=None):
        invocations.append(
            Invocation(
                module=module,
                depth=tok.depth,
                history=history.snapshot(),
                decision=decision,
                clause=clause,
                col=col,
                op=op,
                forced=forced,
            )
        )

    while stack:
        pops += 1
        if pops > _MAX_POPS:
            raise AssertionError("decode failed to terminate within the pop budget")
        tok = stack.pop()
        module = g.next_module(tok, history)
        node = tok.node

        if module == g.MODULE_IUEN:
            forced = tok.depth >= cfg.max_depth or len(invocations) >= cfg.max_invocations
            if forced:
                decision = "none"
            else:
                decision = policy.iuen(ctx_for(tok, candidates=IUEN_CHOICES))
                if decision not in SET_OPS:
                    raise g.GrammarError(f"bad set-op decision {decision!r}")
            record(g.MODULE_IUEN, tok, decision, forced=forced)
            if decision == "none":
                none_tok = g.GrammarToken(g.NONE, tok.depth, node=node)
                emit(none_tok)
                stack.push(none_tok)
            else:
                node.set_op = decision
                node.rhs = QueryBuilder(schema, tok.depth + 1)
                _notify(policy, node, node.rhs)
                emit(g.GrammarToken(decision.upper(), tok.depth, node=node))
                g.push_prediction(
                    stack,
                    [
                        g.GrammarToken(g.NONE, tok.depth, node=node),
                        g.GrammarToken(g.ROOT, tok.depth + 1, node=node.rhs),
                    ],
                )

        elif module == g.MODULE_KW:
            decision = tuple(policy.kw(ctx_for(tok, candidates=KW_CHOICES)))
            _check_subset(decision, KW_CHOICES, "keyword", 0, cfg.kw_cap)
            record(g.MODULE_KW, tok, decision)
            ordered = [k for k in KW_CHOICES if k in decision]
            tokens = [g.GrammarToken(g.SELECT, tok.depth, node=node, clause="select")]
            for k in ordered:
                tokens.append(
                    g.GrammarToken(_KEYWORD_TOKEN[k], tok.depth, node=node, clause=k)
                )
            for t in tokens:
                emit(t)
            node.has_where = "where" in decision
            node.has_group = "group" in decision
            node.has_order = "order" in decision
            g.push_prediction(stack, tokens)

        elif module == g.MODULE_COL:
            clause = tok.clause
            candidates = tuple(range(len(schema.columns)))
            decision = tuple(policy.col(ctx_for(tok, clause=clause, candidates=candidates)))
            _check_subset(decision, candidates, "column", 1, cfg.col_cap)
            record(g.MODULE_COL, tok, decision, clause=clause)
            col_tokens = []
            for c in decision:
                t = g.GrammarToken(g.COL, tok.depth, col=c, node=node, clause=clause)
                emit(t)
                col_tokens.append(t)
            follow = []
            if clause in ("where", "having") and len(decision) >= 2:
                follow = [
                    g.GrammarToken(
                        g.WHERE if clause == "where" else g.HAVING,
                        tok.depth,
                        node=node,
                        clause=clause,
                        stage=1,
                    )
                ]
                g.push_prediction(stack, follow + col_tokens)
            elif clause == "group":
                node.group_cols = list(decision)
                g.push_prediction(
                    stack,
                    [g.GrammarToken(g.GROUP, tok.depth, node=node, clause=clause, stage=1)],
                )
            elif clause == "order":
                g.push_prediction(
                    stack,
                    col_tokens
                    + [g.GrammarToken(g.ORDER, tok.depth, node=node, clause=clause, stage=1)],
                )
            else:  # select, or where/having with a single condition column
                g.push_prediction(stack, col_tokens)

        elif module == g.MODULE_AGG:
            decision = tuple(
                policy.agg(ctx_for(tok, clause=tok.clause, col=tok.col, candidates=AGGREGATORS))
            )
            _check_subset(decision, AGGREGATORS, "aggregator", 0, cfg.agg_cap)
            record(g.MODULE_AGG, tok, decision, clause=tok.clause, col=tok.col)
            for a in decision:
                emit(g.GrammarToken(g.AGG, tok.depth, name=a, node=node, clause=tok.clause))
            items = [(a, tok.col) for a in decision] or [("none", tok.col)]
            if tok.clause == "select":
                node.select.extend(items)
            else:
                node.order_items.extend(items)

        elif module == g.MODULE_OP:
            decision = tuple(
                policy.op(ctx_for(tok, clause=tok.clause, col=tok.col, candidates=OPERATORS))
            )
            _check_subset(decision, OPERATORS, "operator", 1, cfg.op_cap)
            record(g.MODULE_OP, tok, decision, clause=tok.clause, col=tok.col)
            op_tokens = []
            for o in decision:
                pending = _PendingCond(tok.col, o)
                if tok.clause == "where":
                    node.where_conds.append(pending)
                else:
                    node.having_conds.append(pending)
                t = g.GrammarToken(
                    g.OP, tok.depth, name=o, col=tok.col, node=node, clause=tok.clause, cond=pending
                )
                emit(t)
                op_tokens.append(t)
            g.push_prediction(stack, op_tokens)

        elif module == g.MODULE_ROOT_TERMINAL:
            forced = (
                tok.depth >= cfg.max_depth
                or tok.name == "between"
                or len(invocations) >= cfg.max_invocations
            )
            if forced:
                decision = "terminal"
            else:
                decision = policy.root_terminal(
                    ctx_for(tok, clause=tok.clause, col=tok.col, op=tok.name, candidates=RT_CHOICES)
                )
                if decision not in RT_CHOICES:
                    raise g.GrammarError(f"bad root/terminal decision {decision!r}")
            record(
                g.MODULE_ROOT_TERMINAL,
                tok,
                decision,
                forced=forced,
                clause=tok.clause,
                col=tok.col,
                op=tok.name,
            )
            if decision == "terminal":
                emit(g.GrammarToken(g.TERMINAL, tok.depth, node=node))
            else:
                sub = QueryBuilder(schema, tok.depth + 1)
                tok.cond.sub = sub
                _notify(policy, node, sub)
                emit(g.GrammarToken(g.ROOT_SUB, tok.depth, node=node))
                stack.push(g.GrammarToken(g.ROOT, tok.depth + 1, node=sub))

        elif module == g.MODULE_ANDOR:
            decision = policy.andor(ctx_for(tok, clause=tok.clause, candidates=ANDOR_CHOICES))
            if decision not in ANDOR_CHOICES:
                raise g.GrammarError(f"bad connector decision {decision!r}")
            record(g.MODULE_ANDOR, tok, decision, clause=tok.clause)
            emit(
                g.GrammarToken(
                    g.AND if decision == "and" else g.OR, tok.depth, node=node, clause=tok.clause
                )
            )
            node.conj[tok.clause] = decision

        elif module == g.MODULE_HAVING:
            decision = policy.having(
                ctx_for(
                    tok,
                    clause="group",
                    col=node.group_cols[0] if node.group_cols else None,
                    candidates=HAVING_CHOICES,
                )
            )
            decision = bool(decision)
            record(g.MODULE_HAVING, tok, decision, clause="group", col=node.group_cols[0])
            if decision:
                node.has_having = True
                having_tok = g.GrammarToken(g.HAVING, tok.depth, node=node, clause="having")
                emit(having_tok)
                stack.push(having_tok)

        elif module == g.MODULE_DAL:
            first_col = node.order_items[0][1] if node.order_items else None
            decision = policy.dal(
                ctx_for(tok, clause="order", col=first_col, candidates=DAL_CHOICES)
            )
            if decision not in DIRECTIONS:
                raise g.GrammarError(f"bad direction decision {decision!r}")
            record(g.MODULE_DAL, tok, decision, clause="order", col=first_col)
            emit(g.GrammarToken(g.DAL, tok.depth, name=decision, node=node, clause="order"))
            node.order_dir = decision

        else:  # pragma: no cover - next_module is total over pushed tokens
            raise g.GrammarError(f"unhandled module {module!r}")

        trace.append(
            TraceStep(
                popped=tok.describe(),
                module=module,
                decision=repr(invocations[-1].decision),
                stack_size=len(stack),
            )
        )

    return DecodeResult(
        query=root.finalize(), trace=trace, invocations=invocations, history=history
    )


def _notify(policy, parent, child):
    hook = getattr(policy, "on_subquery", None)
    if hook is not None:
        hook(parent, child)


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


class RandomPolicy:
    """Seeded uniform decisions; used for grammar fuzzing."""

    def __init__(self, rng, cfg=None):
        self.rng = rng
        self.cfg = cfg or ModelConfig()

    def _sample(self, candidates, lo, hi):
        hi = min(hi, len(candidates))
        lo = min(lo, hi)
        n = int(self.rng.integers(lo, hi + 1))
        if n == 0:
            return ()
        idx = self.rng.choice(len(candidates), size=n, replace=False)
        return tuple(candidates[i] for i in idx)

    def iuen(self, ctx):
        return ctx.candidates[int(self.rng.integers(len(ctx.candidates)))]

    def kw(self, ctx):
        return self._sample(ctx.candidates, 0, self.cfg.kw_cap)

    def col(self, ctx):
        return self._sample(ctx.candidates, 1, self.cfg.col_cap)

    def agg(self, ctx):
        return self._sample(ctx.candidates, 0, self.cfg.agg_cap)

    def op(self, ctx):
        return self._sample(ctx.candidates, 1, self.cfg.op_cap)

    def root_terminal(self, ctx):
        return ctx.candidates[int(self.rng.integers(2))]

    def andor(self, ctx):
        return ctx.candidates[int(self.rng.integers(2))]

    def having(self, ctx):
        return bool(self.rng.integers(2))

    def dal(self, ctx):
        return ctx.candidates[int(self.rng.integers(4))]


class GoldPolicy:
    """Replays the decisions a gold tree dictates (teacher forcing)."""

    def __init__(self, gold):
        self.gold = gold
        self._bound = {}
        self._pending = None

    def _node(self, ctx):
        key = id(ctx.node)
        if key not in self._bound:
            if self._bound:
                raise UnsupportedGoldError("unbound subquery builder")
            self._bound[key] = self.gold
        return self._bound[key]

    def on_subquery(self, parent, child):
        if self._pending is None:
            raise UnsupportedGoldError("engine created a subquery the gold tree lacks")
        self._bound[id(child)] = self._pending
        self._pending = None

    # -- decisions -----------------------------------------------------
    def iuen(self, ctx):
        q = self._node(ctx)
        if q.set_op != "none":
            if ctx.depth >= ctx.cfg.max_depth:
                raise UnsupportedGoldError("set operation below the depth cap")
            self._pending = q.rhs
        return q.set_op

    def kw(self, ctx):
        q = self._node(ctx)
        out = []
        if q.where:
            out.append("where")
        if q.group:
            out.append("group")
        if q.order:
            out.append("order")
        return tuple(out)

    def _conds(self, q, clause):
        if clause == "where":
            return q.where or []
        return (q.group.having if q.group else None) or []

    def col(self, ctx):
        q = self._node(ctx)
        cap = ctx.cfg.col_cap
        if ctx.clause == "select":
            cols = _distinct(c for _, c in q.select)
        elif ctx.clause == "group":
            cols = _distinct(q.group.cols)
        elif ctx.clause == "order":
            cols = _distinct(c for _, c in q.order.items)
        else:
            cols = _distinct(c.col for c in self._conds(q, ctx.clause))
        if not 1 <= len(cols) <= cap:
            raise UnsupportedGoldError(
                f"{ctx.clause} uses {len(cols)} columns, outside [1, {cap}]"
            )
        return cols

    def agg(self, ctx):
        q = self._node(ctx)
        items = q.select if ctx.clause == "select" else q.order.items
        aggs = [a for a, c in items if c == ctx.col]
        if "none" in aggs and len(aggs) > 1:
            raise UnsupportedGoldError("column appears both bare and aggregated")
        out = _distinct(a for a in aggs if a != "none")
        if len(out) != len([a for a in aggs if a != "none"]):
            raise UnsupportedGoldError("duplicate aggregator on one column")
        if len(out) > ctx.cfg.agg_cap:
            raise UnsupportedGoldError("too many aggregators on one column")
        return out

    def op(self, ctx):
        conds = [c for c in self._conds(self._node(ctx), ctx.clause) if c.col == ctx.col]
        for c in conds:
            if c.agg != "none":
                raise UnsupportedGoldError("aggregated condition column is not decodable")
        ops = [c.op for c in conds]
        out = _distinct(ops)
        if len(out) != len(ops):
            raise UnsupportedGoldError("duplicate (column, operator) condition")
        if not 1 <= len(out) <= ctx.cfg.op_cap:
            raise UnsupportedGoldError(f"{len(out)} operators on one column")
        return out

    def root_terminal(self, ctx):
        conds = self._conds(self._node(ctx), ctx.clause)
        match = [c for c in conds if c.col == ctx.col and c.op == ctx.op]
        if len(match) != 1:
            raise UnsupportedGoldError("ambiguous condition for root/terminal")
        rhs = match[0].rhs
        if isinstance(rhs, SqlQuery):
            if ctx.depth >= ctx.cfg.max_depth:
                raise UnsupportedGoldError("subquery below the depth cap")
            self._pending = rhs
            return "root"
        return "terminal"

    def andor(self, ctx):
        conds = self._conds(self._node(ctx), ctx.clause)
        conjs = {c.conj for c in conds if c.conj}
        if len(conjs) > 1:
            raise UnsupportedGoldError("mixed AND/OR within one clause")
        return conjs.pop() if conjs else "and"

    def having(self, ctx):
        q = self._node(ctx)
        return bool(q.group and q.group.having)

    def dal(self, ctx):
        return self._node(ctx).order.direction


def _distinct(items):
    seen = []
    for item in items:
        if item not in seen:
            seen.append(item)
    return tuple(seen)


def gold_preorder(gold, schema, cfg=None, question=()):
    """Pre-order module decisions of a gold tree under the decode grammar."""
    result = decode(question, schema, GoldPolicy(gold), cfg)
    return result


def forced_decode(gold, schema, cfg=None, question=()):
    """Decode with gold decisions; equals normalize_values(gold) when the
    gold tree is expressible."""
    return decode(question, schema, GoldPolicy(gold), cfg)
