"""SQL generation grammar: token taxonomy, invocation rules, decode stack.

Decoding pops one token instance at a time; next_module() maps the popped
token to the prediction module that must run.  Clause keyword tokens can be
popped twice: stage 0 expands the clause into columns, stage 1 runs the
follow-up module (AND/OR connector, HAVING flag, or ORDER BY direction)
after the clause content has been decoded.
"""

from dataclasses import dataclass, field

ROOT = "ROOT"
NONE = "NONE"
INTERSECT = "INTERSECT"
UNION = "UNION"
EXCEPT = "EXCEPT"
SELECT = "SELECT"
WHERE = "WHERE"
GROUP = "GROUP"
ORDER = "ORDER"
HAVING = "HAVING"
COL = "COL"
AGG = "AGG"
OP = "OP"
ROOT_SUB = "ROOT_SUB"
TERMINAL = "TERMINAL"
AND = "AND"
OR = "OR"
DAL = "DAL"

TOKEN_KINDS = frozenset(
    {
        ROOT, NONE, INTERSECT, UNION, EXCEPT, SELECT, WHERE, GROUP, ORDER,
        HAVING, COL, AGG, OP, ROOT_SUB, TERMINAL, AND, OR, DAL,
    }
)

CLAUSE_OF_KEYWORD = {SELECT: "select", WHERE: "where", GROUP: "group", ORDER: "order", HAVING: "having"}

MODULE_IUEN = "iuen"
MODULE_KW = "kw"
MODULE_COL = "col"
MODULE_AGG = "agg"
MODULE_OP = "op"
MODULE_ROOT_TERMINAL = "root_terminal"
MODULE_ANDOR = "andor"
MODULE_DAL = "dal"
MODULE_HAVING = "having"

MODULE_NAMES = (
    MODULE_IUEN,
    MODULE_KW,
    MODULE_COL,
    MODULE_AGG,
    MODULE_OP,
    MODULE_ROOT_TERMINAL,
    MODULE_ANDOR,
    MODULE_DAL,
    MODULE_HAVING,
)


class GrammarError(RuntimeError):
    """No invocation rule applies; unreachable when the engine is correct."""


@dataclass(eq=False)
class GrammarToken:
    kind: str
    depth: int
    col: int = None  # COL payload / conditioning column
    name: str = None  # AGG, OP, DAL payload
    stage: int = 0  # clause keywords: 0 = expand columns, 1 = follow-up module
    clause: str = None  # owning clause of COL/OP tokens
    node: object = None  # query builder this token belongs to
    cond: object = None  # pending condition record for OP tokens

    def __post_init__(self):
        if self.kind not in TOKEN_KINDS:
            raise GrammarError(f"unknown token kind {self.kind!r}")
        if self.depth < 0:
            raise GrammarError("negative nesting depth")

    def describe(self):
        extra = ""
        if self.col is not None:
            extra = f"[{self.col}]"
        if self.name is not None:
            extra = f"[{self.name}]"
        stage = f"/{self.stage}" if self.stage else ""
        return f"{self.kind}{extra}{stage}@{self.depth}"


def surface_words(token, schema):
    """History verbalization: keyword literals, column name words, and
    lowercase operator/aggregator names."""
    kind = token.kind
    if kind in (ROOT, ROOT_SUB):
        return ("root",)
    if kind == NONE:
        return ("none",)
    if kind in (INTERSECT, UNION, EXCEPT):
        return (kind.lower(),)
    if kind == SELECT:
        return ("select",)
    if kind == WHERE:
        return ("where",)
    if kind == GROUP:
        return ("group", "by")
    if kind == ORDER:
        return ("order", "by")
    if kind == HAVING:
        return ("having",)
    if kind == COL:
        return tuple(schema.columns[token.col].name_words)
    if kind in (AGG, OP, DAL):
        return tuple(token.name.split())
    if kind == TERMINAL:
        return ("value",)
    if kind == AND:
        return ("and",)
    if kind == OR:
        return ("or",)
    raise GrammarError(f"no surface form for {kind}")  # pragma: no cover


class HistoryPath:
    """Append-only pre-order record of emitted tokens and their words."""

    def __init__(self):
        self.entries = []

    def append(self, token, schema):
        self.entries.append((token, surface_words(token, schema)))

    def snapshot(self):
        """Immutable per-token word tuples, oldest first."""
        return tuple(words for _, words in self.entries)

    def __len__(self):
        return len(self.entries)


def next_module(token, history=None):
    """Module invoked when `token` is popped.

    The follow-up stage and owning clause stored on the token carry the
    part of the decoding history the rule depends on.
    """
    kind = token.kind
    if kind == ROOT:
        return MODULE_IUEN
    if kind == NONE:
        return MODULE_KW
    if kind in (SELECT, WHERE, GROUP, ORDER, HAVING):
        if token.stage == 0:
            return MODULE_COL
        if kind in (WHERE, HAVING):
            return MODULE_ANDOR
        if kind == GROUP:
            return MODULE_HAVING
        if kind == ORDER:
            return MODULE_DAL
        raise GrammarError(f"no follow-up module for {token.describe()}")
    if kind == COL:
        if token.clause in ("select", "order"):
            return MODULE_AGG
        if token.clause in ("where", "having"):
            return MODULE_OP
        raise GrammarError(f"COL token with unexpected clause {token.clause!r}")
    if kind == OP:
        return MODULE_ROOT_TERMINAL
    raise GrammarError(f"token {token.describe()} is never scheduled")


@dataclass
class DecodeStack:
    """LIFO of pending token instances driving the recursive generation."""

    items: list = field(default_factory=list)

    def push(self, token):
        self.items.append(token)

    def pop(self):
        return self.items.pop()

    def __len__(self):
        return len(self.items)

    def __bool__(self):
        return bool(self.items)


def push_prediction(stack, tokens):
    """Push predicted tokens so they pop in the given (clause) order."""
    for token in reversed(tokens):
        stack.push(token)
    return stack
