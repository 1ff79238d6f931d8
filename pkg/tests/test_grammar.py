import numpy as np
import pytest

from stacksql import grammar as g
from stacksql.config import ModelConfig
from stacksql.decoder import RandomPolicy, decode


def token(kind, **kw):
    return g.GrammarToken(kind, 0, **kw)


def test_next_module_rules():
    assert g.next_module(token(g.ROOT)) == "iuen"
    assert g.next_module(token(g.NONE)) == "kw"
    assert g.next_module(token(g.SELECT, clause="select")) == "col"
    assert g.next_module(token(g.WHERE, clause="where")) == "col"
    assert g.next_module(token(g.COL, clause="select")) == "agg"
    assert g.next_module(token(g.COL, clause="order")) == "agg"
    assert g.next_module(token(g.COL, clause="where")) == "op"
    assert g.next_module(token(g.COL, clause="having")) == "op"
    assert g.next_module(token(g.OP, name=">", clause="where")) == "root_terminal"
    assert g.next_module(token(g.GROUP, clause="group", stage=1)) == "having"
    assert g.next_module(token(g.ORDER, clause="order", stage=1)) == "dal"
    assert g.next_module(token(g.WHERE, clause="where", stage=1)) == "andor"
    assert g.next_module(token(g.HAVING, clause="having", stage=1)) == "andor"


def test_next_module_rejects_leaf_tokens():
    with pytest.raises(g.GrammarError):
        g.next_module(token(g.TERMINAL))
    with pytest.raises(g.GrammarError):
        g.next_module(token(g.AGG, name="count"))


def test_unknown_token_kind_rejected():
    with pytest.raises(g.GrammarError):
        g.GrammarToken("BOGUS", 0)


def test_push_prediction_pop_order():
    stack = g.DecodeStack()
    toks = [token(g.SELECT, clause="select"), token(g.WHERE, clause="where"), token(g.ORDER, clause="order")]
    g.push_prediction(stack, toks)
    assert stack.pop().kind == g.SELECT
    assert stack.pop().kind == g.WHERE
    assert stack.pop().kind == g.ORDER


def test_surface_words(schemas):
    s = schemas["college"]
    salary = s.find_column(1, "salary")
    assert g.surface_words(token(g.COL, col=salary), s) == ("salary",)
    assert g.surface_words(token(g.GROUP), s) == ("group", "by")
    assert g.surface_words(token(g.OP, name="not in"), s) == ("not", "in")
    assert g.surface_words(token(g.DAL, name="desc limit"), s) == ("desc", "limit")
    assert g.surface_words(token(g.TERMINAL), s) == ("value",)


def test_history_snapshot_append_only(schemas):
    s = schemas["college"]
    h = g.HistoryPath()
    h.append(token(g.SELECT), s)
    snap1 = h.snapshot()
    h.append(token(g.WHERE), s)
    snap2 = h.snapshot()
    assert snap1 == (("select",),)
    assert snap2 == (("select",), ("where",))


def test_fuzzed_decoding_always_terminates(schemas):
    """Random module behavior halts within the depth/count caps."""
    cfg = ModelConfig(hidden_dim=2, embedding_dim=2, max_depth=3)
    rng = np.random.default_rng(99)
    all_schemas = list(schemas.values())
    for i in range(200):
        s = all_schemas[i % len(all_schemas)]
        result = decode(("q",), s, RandomPolicy(rng, cfg), cfg)
        assert result.trace[0].popped.startswith("ROOT")
        assert result.query.select
        for inv in result.invocations:
            assert inv.depth <= cfg.max_depth


def test_fuzzed_depth_cap_forcing(schemas):
    """At the depth cap IUEN is forced to none and RT to terminal."""
    cfg = ModelConfig(hidden_dim=2, embedding_dim=2, max_depth=1)
    rng = np.random.default_rng(3)
    s = schemas["college"]
    forced_seen = 0
    for _ in range(100):
        result = decode(("q",), s, RandomPolicy(rng, cfg), cfg)
        for inv in result.invocations:
            if inv.forced:
                forced_seen += 1
                assert inv.decision in ("none", "terminal")
                assert inv.depth >= cfg.max_depth or inv.module == "root_terminal"
    assert forced_seen > 0
