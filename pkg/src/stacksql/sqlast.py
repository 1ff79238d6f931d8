"""SQL-subset abstract syntax trees: structure, pretty-printer, parser.

The supported subset covers single-level clause structure (SELECT / WHERE /
GROUP BY + HAVING / ORDER BY + LIMIT), set operations, nested subqueries on
condition right-hand sides, and FROM clauses built from JOIN chains.  No
DISTINCT, no arithmetic expressions, no OR between JOIN conditions.

Columns are integer indices into a Schema; condition values are literal
text or the placeholder `value`.
"""

import re
from dataclasses import dataclass, field, replace

from stacksql.schema import column_label

AGGREGATORS = ("max", "min", "sum", "count", "avg")
OPERATORS = ("=", ">", "<", ">=", "<=", "!=", "like", "not in", "in", "between")
DIRECTIONS = ("asc", "desc", "asc limit", "desc limit")
SET_OPS = ("none", "intersect", "union", "except")

PLACEHOLDER = "value"


class StructureError(ValueError):
    """AST violates a structural invariant."""


class UnsupportedSqlError(ValueError):
    """Query text uses a construct outside the supported subset."""


class ResolutionError(ValueError):
    """A column or table reference cannot be resolved against the schema."""


@dataclass
class Value:
    text: str = PLACEHOLDER
    quoted: bool = False

    @classmethod
    def placeholder(cls):
        return cls(PLACEHOLDER, False)


@dataclass
class Condition:
    col: int
    op: str
    rhs: object  # Value | SqlQuery | (Value, Value) for between
    agg: str = "none"
    conj: str = None  # connector to the next condition: "and" | "or" | None


@dataclass
class GroupBy:
    cols: list
    having: list = None  # list[Condition] | None


@dataclass
class OrderBy:
    items: list  # list[(agg, col)]
    direction: str = "asc"
    limit_value: Value = None


@dataclass
class FromClause:
    tables: list  # table indices, ascending
    joins: list = field(default_factory=list)  # sorted (col_a, col_b) pairs, a < b
    cross: bool = False  # some table had no usable join condition


@dataclass
class SqlQuery:
    select: list  # list[(agg, col)], nonempty
    from_clause: FromClause = None
    where: list = None  # list[Condition] | None
    group: GroupBy = None
    order: OrderBy = None
    set_op: str = "none"
    rhs: object = None  # SqlQuery | None


def canonical_from(tables, join_pairs, cross=False):
    """Canonical FromClause: tables ascending, join pairs sorted."""
    joins = sorted(tuple(sorted(p)) for p in join_pairs)
    return FromClause(tables=sorted(set(tables)), joins=joins, cross=cross)


def validate_query(q, schema, depth=0):
    """Raise StructureError when an invariant is violated."""
    if depth > 32:
        raise StructureError("nesting too deep")
    if not q.select:
        raise StructureError("empty select list")
    ncols = len(schema.columns)
    def check_col(c):
        if not 0 <= c < ncols:
            raise StructureError(f"column index {c} out of range")
    for agg, col in q.select:
        if agg != "none" and agg not in AGGREGATORS:
            raise StructureError(f"unknown aggregator {agg!r}")
        check_col(col)
    for conds in (q.where or []), (q.group.having or [] if q.group else []):
        for cond in conds:
            check_col(cond.col)
            if cond.op not in OPERATORS:
                raise StructureError(f"unknown operator {cond.op!r}")
            if cond.op == "between":
                if not (isinstance(cond.rhs, tuple) and len(cond.rhs) == 2):
                    raise StructureError("between requires two terminal values")
            elif isinstance(cond.rhs, SqlQuery):
                validate_query(cond.rhs, schema, depth + 1)
            elif not isinstance(cond.rhs, Value):
                raise StructureError(f"bad condition rhs {cond.rhs!r}")
    if q.group:
        if not q.group.cols:
            raise StructureError("empty GROUP BY column list")
        for c in q.group.cols:
            check_col(c)
    if q.order:
        if not q.order.items:
            raise StructureError("empty ORDER BY item list")
        for agg, col in q.order.items:
            check_col(col)
        if q.order.direction not in DIRECTIONS:
            raise StructureError(f"unknown direction {q.order.direction!r}")
    if q.set_op not in SET_OPS:
        raise StructureError(f"unknown set operator {q.set_op!r}")
    if (q.set_op != "none") != (q.rhs is not None):
        raise StructureError("rhs query present iff set operator present")
    if q.rhs is not None:
        validate_query(q.rhs, schema, depth + 1)
    return q


def normalize_values(q):
    """Copy of q with every literal replaced by the placeholder value."""
    def norm_rhs(rhs):
        if isinstance(rhs, SqlQuery):
            return normalize_values(rhs)
        if isinstance(rhs, tuple):
            return (Value.placeholder(), Value.placeholder())
        return Value.placeholder()

    def norm_conds(conds):
        if conds is None:
            return None
        return [replace(c, rhs=norm_rhs(c.rhs)) for c in conds]

    group = None
    if q.group:
        group = GroupBy(cols=list(q.group.cols), having=norm_conds(q.group.having))
    order = None
    if q.order:
        limit = Value.placeholder() if "limit" in q.order.direction else None
        order = OrderBy(items=list(q.order.items), direction=q.order.direction, limit_value=limit)
    return SqlQuery(
        select=list(q.select),
        from_clause=q.from_clause,
        where=norm_conds(q.where),
        group=group,
        order=order,
        set_op=q.set_op,
        rhs=normalize_values(q.rhs) if q.rhs is not None else None,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def serialize(q, schema, col_name=None, table_name=None, value_text=None):
    """Deterministic SQL text with uppercase keywords.

    Columns print as table.column when the query reads one table and as
    Tn.column aliases when it joins two or more.  The three hooks override
    how column names, table names, and values are rendered (used by the
    augmentation templates).
    """
    validate_query(q, schema)
    cname = col_name or (lambda c: schema.columns[c].orig_name)
    tname = table_name or (lambda t: schema.tables[t])
    vtext = value_text or (lambda v: f"'{v.text}'" if v.quoted else v.text)
    return _serialize_query(q, schema, cname, tname, vtext)


def _serialize_query(q, schema, cname, tname, vtext):
    text = _serialize_single(q, schema, cname, tname, vtext)
    if q.set_op != "none":
        rhs = _serialize_query(q.rhs, schema, cname, tname, vtext)
        text = f"{text} {q.set_op.upper()} {rhs}"
    return text


def _serialize_single(q, schema, cname, tname, vtext):
    fc = q.from_clause
    if fc is None or not fc.tables:
        raise StructureError("query has no FROM clause")
    alias = {}
    if len(fc.tables) >= 2:
        alias = {t: f"T{i + 1}" for i, t in enumerate(fc.tables)}

    def colref(c):
        col = schema.columns[c]
        if col.table_index < 0:
            return "*"
        prefix = alias.get(col.table_index) or tname(col.table_index)
        return f"{prefix}.{cname(c)}"

    def item(agg, c):
        return f"{agg}({colref(c)})" if agg != "none" else colref(c)

    def cond_text(cond):
        lhs = item(cond.agg, cond.col)
        if cond.op == "between":
            lo, hi = cond.rhs
            return f"{lhs} BETWEEN {vtext(lo)} AND {vtext(hi)}"
        if isinstance(cond.rhs, SqlQuery):
            rhs = f"({_serialize_query(cond.rhs, schema, cname, tname, vtext)})"
        elif cond.op in ("in", "not in"):
            rhs = f"({vtext(cond.rhs)})"
        else:
            rhs = vtext(cond.rhs)
        return f"{lhs} {cond.op.upper()} {rhs}"

    def conds_text(conds):
        parts = [cond_text(conds[0])]
        for prev, cond in zip(conds, conds[1:]):
            parts.append((prev.conj or "and").upper())
            parts.append(cond_text(cond))
        return " ".join(parts)

    out = ["SELECT", ", ".join(item(a, c) for a, c in q.select)]

    def tref(t):
        return f"{tname(t)} AS {alias[t]}" if alias else tname(t)

    # render tables in a connected order: each JOIN must reference an
    # already-introduced table, so greedily pick the lowest-index joinable
    # table next and fall back to CROSS JOIN for unreachable ones
    first, *remaining = fc.tables
    from_text = [tref(first)]
    introduced = {first}
    used_pairs = set()
    while remaining:
        pick = None
        for t in remaining:
            ons = []
            for a, b in fc.joins:
                if (a, b) in used_pairs:
                    continue
                ta, tb = schema.table_of(a), schema.table_of(b)
                if t in (ta, tb) and (ta in introduced or tb in introduced):
                    lhs, rhs = (a, b) if ta in introduced else (b, a)
                    ons.append(((a, b), f"{colref(lhs)} = {colref(rhs)}"))
            if ons:
                pick = (t, ons)
                break
        if pick is None:
            t, ons = remaining[0], []
        else:
            t, ons = pick
        if ons:
            for pair, _ in ons:
                used_pairs.add(pair)
            from_text.append(f"JOIN {tref(t)} ON {' AND '.join(text for _, text in ons)}")
        else:
            from_text.append(f"CROSS JOIN {tref(t)}")
        introduced.add(t)
        remaining.remove(t)
    out.append("FROM " + " ".join(from_text))
    if q.where:
        out.append("WHERE " + conds_text(q.where))
    if q.group:
        out.append("GROUP BY " + ", ".join(colref(c) for c in q.group.cols))
        if q.group.having:
            out.append("HAVING " + conds_text(q.group.having))
    if q.order:
        out.append("ORDER BY " + ", ".join(item(a, c) for a, c in q.order.items))
        direction = q.order.direction
        out.append("DESC" if direction.startswith("desc") else "ASC")
        if "limit" in direction:
            limit = q.order.limit_value or Value.placeholder()
            out.append(f"LIMIT {vtext(limit)}")
    return " ".join(out)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_SQL_TOKEN = re.compile(
    r"\s*(?:(?P<number>\d+(?:\.\d+)?)"
    r"|(?P<string>'[^']*'|\"[^\"]*\")"
    r"|(?P<symbol><=|>=|!=|<>|=|<|>|\(|\)|,|\.|\*)"
    r"|(?P<word>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<bad>\S))"
)

_CLAUSE_STOPPERS = {
    "from", "where", "group", "having", "order", "limit",
    "intersect", "union", "except", "join", "cross", "on", "as", "and", "or",
}


def _lex(sql):
    tokens = []
    pos = 0
    while pos < len(sql):
        m = _SQL_TOKEN.match(sql, pos)
        if m is None:
            break
        pos = m.end()
        if m.lastgroup == "bad":
            raise UnsupportedSqlError(f"unsupported character {m.group('bad')!r}")
        if m.group().strip():
            kind = m.lastgroup
            text = m.group(kind)
            tokens.append((kind, text))
    return tokens


class _Parser:
    def __init__(self, sql, schema):
        self.tokens = _lex(sql)
        self.pos = 0
        self.schema = schema

    # -- token helpers -------------------------------------------------
    def peek(self, ahead=0):
        i = self.pos + ahead
        return self.tokens[i] if i < len(self.tokens) else (None, None)

    def peek_word(self, ahead=0):
        kind, text = self.peek(ahead)
        return text.lower() if kind == "word" else None

    def next(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expect_word(self, word):
        kind, text = self.next()
        if kind != "word" or text.lower() != word:
            raise UnsupportedSqlError(f"expected {word.upper()}, found {text!r}")

    def expect_symbol(self, sym):
        kind, text = self.next()
        if kind != "symbol" or text != sym:
            raise UnsupportedSqlError(f"expected {sym!r}, found {text!r}")

    def at_word(self, *words):
        return self.peek_word() in words

    def eat_word(self, *words):
        if self.at_word(*words):
            return self.next()[1].lower()
        return None

    # -- grammar -------------------------------------------------------
    def parse(self):
        q = self.parse_query()
        kind, text = self.peek()
        if kind is not None:
            raise UnsupportedSqlError(f"trailing input at {text!r}")
        return q

    def parse_query(self):
        left = self.parse_single()
        op = self.eat_word("intersect", "union", "except")
        if op:
            left.set_op = op
            left.rhs = self.parse_query()
        return left

    def parse_single(self):
        self.expect_word("select")
        if self.at_word("distinct"):
            raise UnsupportedSqlError("unsupported keyword DISTINCT")
        raw_select = [self.parse_raw_item()]
        while self.eat_symbol(","):
            raw_select.append(self.parse_raw_item())
        self.expect_word("from")
        fc, aliases, raw_joins = self.parse_from()
        resolve = lambda ref: self._resolve(ref, fc, aliases)
        select = [(agg, resolve(ref)) for agg, ref in raw_select]
        joins = [(resolve(a), resolve(b)) for a, b in raw_joins]
        q = SqlQuery(
            select=select,
            from_clause=canonical_from(fc, joins, cross=self._had_cross),
        )
        if self.eat_word("where"):
            q.where = self.parse_conditions(resolve, allow_agg=False)
        if self.at_word("group"):
            self.next()
            self.expect_word("by")
            cols = [resolve(self.parse_raw_colref())]
            while self.eat_symbol(","):
                cols.append(resolve(self.parse_raw_colref()))
            having = None
            if self.eat_word("having"):
                having = self.parse_conditions(resolve, allow_agg=True)
            q.group = GroupBy(cols=cols, having=having)
        if self.at_word("order"):
            self.next()
            self.expect_word("by")
            items = [self.parse_raw_item()]
            while self.eat_symbol(","):
                items.append(self.parse_raw_item())
            direction = self.eat_word("asc", "desc") or "asc"
            limit_value = None
            if self.eat_word("limit"):
                direction = f"{direction} limit"
                limit_value = self.parse_value()
            q.order = OrderBy(
                items=[(agg, resolve(ref)) for agg, ref in items],
                direction=direction,
                limit_value=limit_value,
            )
        if self.at_word("limit"):
            raise UnsupportedSqlError("LIMIT without ORDER BY")
        return q

    def eat_symbol(self, sym):
        kind, text = self.peek()
        if kind == "symbol" and text == sym:
            self.pos += 1
            return True
        return False

    def parse_raw_item(self):
        """(agg, rawref); rawref is (qualifier|None, name) or '*'."""
        word = self.peek_word()
        if word in AGGREGATORS and self.peek(1) == ("symbol", "("):
            self.next()
            self.expect_symbol("(")
            ref = self.parse_raw_colref()
            self.expect_symbol(")")
            return word, ref
        return "none", self.parse_raw_colref()

    def parse_raw_colref(self):
        kind, text = self.next()
        if kind == "symbol" and text == "*":
            return "*"
        if kind != "word":
            raise UnsupportedSqlError(f"expected a column reference, found {text!r}")
        if self.eat_symbol("."):
            k2, name = self.next()
            if k2 == "symbol" and name == "*":
                return "*"
            if k2 != "word":
                raise UnsupportedSqlError(f"expected a column name after '.', found {name!r}")
            return (text, name)
        return (None, text)

    def parse_from(self):
        self._had_cross = False
        if self.peek() == ("symbol", "("):
            raise UnsupportedSqlError("subquery in FROM is unsupported")
        tables = []
        aliases = {}
        raw_joins = []

        def table_ref():
            kind, text = self.next()
            if kind != "word":
                raise UnsupportedSqlError(f"expected a table name, found {text!r}")
            idx = self.schema.find_table(text)
            if idx is None:
                raise ResolutionError(f"unknown table {text!r} in {self.schema.db_id}")
            if self.eat_word("as"):
                k2, a = self.next()
                if k2 != "word":
                    raise UnsupportedSqlError(f"expected an alias, found {a!r}")
                aliases[a.lower()] = idx
            return idx

        tables.append(table_ref())
        while True:
            if self.eat_word("cross"):
                self.expect_word("join")
                tables.append(table_ref())
                self._had_cross = True
                continue
            if self.eat_word("join"):
                tables.append(table_ref())
                self.expect_word("on")
                raw_joins.append(self.parse_join_equality())
                while self.eat_word("and"):
                    raw_joins.append(self.parse_join_equality())
                if self.at_word("or"):
                    raise UnsupportedSqlError("OR between JOIN conditions is unsupported")
                continue
            kind, text = self.peek()
            if kind == "symbol" and text == ",":
                raise UnsupportedSqlError("comma-separated FROM tables are unsupported")
            break
        return tables, aliases, raw_joins

    def parse_join_equality(self):
        a = self.parse_raw_colref()
        self.expect_symbol("=")
        b = self.parse_raw_colref()
        if a == "*" or b == "*":
            raise UnsupportedSqlError("'*' cannot appear in a JOIN condition")
        return a, b

    def parse_conditions(self, resolve, allow_agg):
        conds = [self.parse_condition(resolve, allow_agg)]
        while True:
            conj = self.eat_word("and", "or")
            if conj is None:
                break
            conds[-1].conj = conj
            conds.append(self.parse_condition(resolve, allow_agg))
        return conds

    def parse_condition(self, resolve, allow_agg):
        agg, ref = self.parse_raw_item()
        if agg != "none" and not allow_agg:
            raise UnsupportedSqlError(f"aggregator {agg!r} outside HAVING")
        col = resolve(ref)
        if self.eat_word("not"):
            self.expect_word("in")
            op = "not in"
        elif self.eat_word("in"):
            op = "in"
        elif self.eat_word("like"):
            op = "like"
        elif self.eat_word("between"):
            op = "between"
        else:
            kind, text = self.next()
            if kind != "symbol" or text not in ("=", ">", "<", ">=", "<=", "!=", "<>"):
                raise UnsupportedSqlError(f"unsupported operator {text!r}")
            op = "!=" if text == "<>" else text
        if op == "between":
            lo = self.parse_value()
            self.expect_word("and")
            hi = self.parse_value()
            return Condition(col=col, op=op, rhs=(lo, hi), agg=agg)
        rhs = self.parse_rhs(op)
        return Condition(col=col, op=op, rhs=rhs, agg=agg)

    def parse_rhs(self, op):
        if self.peek() == ("symbol", "("):
            if self.peek_word(1) == "select":
                self.expect_symbol("(")
                sub = self.parse_query()
                self.expect_symbol(")")
                return sub
            if op in ("in", "not in"):
                self.expect_symbol("(")
                v = self.parse_value()
                if self.peek() == ("symbol", ","):
                    raise UnsupportedSqlError("IN value lists are unsupported")
                self.expect_symbol(")")
                return v
            raise UnsupportedSqlError("parenthesized expressions are unsupported")
        return self.parse_value()

    def parse_value(self):
        kind, text = self.next()
        if kind == "number":
            return Value(text, quoted=False)
        if kind == "string":
            return Value(text[1:-1], quoted=True)
        if kind == "word" and text.lower() not in _CLAUSE_STOPPERS:
            # bare word literal, e.g. the decoded placeholder `value`
            return Value(text.lower(), quoted=False)
        raise UnsupportedSqlError(f"expected a value, found {text!r}")

    def _resolve(self, ref, from_tables, aliases):
        if ref == "*":
            return 0
        qual, name = ref
        if qual is not None:
            key = qual.lower()
            if key in aliases:
                tidx = aliases[key]
            else:
                tidx = self.schema.find_table(qual)
                if tidx is None:
                    raise ResolutionError(f"unknown table or alias {qual!r}")
            col = self.schema.find_column(tidx, name)
            if col is None:
                raise ResolutionError(
                    f"no column {name!r} in table {self.schema.tables[tidx]!r}"
                )
            return col
        hits = []
        for t in from_tables:
            col = self.schema.find_column(t, name)
            if col is not None:
                hits.append(col)
        if not hits:
            raise ResolutionError(f"cannot resolve column {name!r} from the FROM tables")
        if len(set(hits)) > 1:
            raise ResolutionError(f"ambiguous column {name!r}; qualify it with a table")
        return hits[0]


def parse(sql, schema):
    """Parse supported-subset SQL text into a SqlQuery resolved against schema."""
    q = _Parser(sql, schema).parse()
    return validate_query(q, schema)


def preorder(q, schema, cfg=None):
    """Module-decision records for a gold tree, in generation order.

    Thin wrapper over the forced-gold decoder walk; see stacksql.decoder.
    """
    from stacksql.decoder import gold_preorder

    return gold_preorder(q, schema, cfg)
