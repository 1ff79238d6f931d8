import json

import numpy as np
import pytest

from stacksql.augment import (
    Pattern,
    PatternError,
    canonicalize,
    group_and_rank,
    load_patterns,
    refill,
    save_patterns,
    template_complexity,
)
from stacksql.sqlast import parse


@pytest.fixture(scope="module")
def patterns(patterns_path):
    return load_patterns(patterns_path)


def test_load_starter_patterns(patterns):
    assert len(patterns) == 5
    for p in patterns:
        assert p.question_templates
        assert p.slots


def test_pattern_validation_rejects_mismatch():
    with pytest.raises(PatternError):
        Pattern(
            sql_template="SELECT ⟨COL0⟩ FROM t",
            question_templates=[["show", "⟨COL1⟩"]],
            slots={"COL0": {"kind": "column", "col_type": "text"}},
        ).validate()


def test_canonicalize_simple(schemas):
    s = schemas["concert_singer"]
    gold = parse("SELECT name FROM stadium", s)
    pattern, flags = canonicalize("show the name of the stadium", gold, s)
    assert not flags
    assert "⟨COL0⟩" in pattern.sql_template
    assert "⟨TAB0⟩" in pattern.sql_template
    qt = pattern.question_templates[0]
    assert "⟨COL0⟩" in qt and "⟨TAB0⟩" in qt
    assert pattern.slots["COL0"]["col_type"] == "text"


def test_canonicalize_distinct_slots(schemas):
    s = schemas["library"]
    gold = parse("SELECT title FROM book WHERE pages > 300", s)
    pattern, flags = canonicalize("show the title of books with pages above 300", gold, s)
    ids = set(pattern.slots)
    assert {"COL0", "COL1", "TAB0", "VAL0"} <= ids
    assert pattern.slots["COL1"]["col_type"] == "number"


def test_canonicalize_flags_unlocatable(schemas):
    s = schemas["library"]
    gold = parse("SELECT title FROM book", s)
    _, flags = canonicalize("list them all", gold, s)
    assert flags  # neither column nor table words appear in the question


def test_identical_shapes_share_template(schemas, corpus):
    """Structurally identical queries from different domains canonicalize
    to the same SQL template."""
    s1 = schemas["concert_singer"]
    s2 = schemas["library"]
    g1 = parse("SELECT name FROM stadium WHERE capacity > 5000", s1)
    g2 = parse("SELECT title FROM book WHERE pages > 300", s2)
    p1, _ = canonicalize("show the name of stadiums with capacity above 5000", g1, s1)
    p2, _ = canonicalize("show the title of books with pages above 300", g2, s2)
    assert p1.sql_template == p2.sql_template


def test_group_and_rank_merges(schemas):
    s = schemas["library"]
    g = parse("SELECT title FROM book WHERE pages > 300 AND price < 20", s)
    p1, _ = canonicalize("show the title of books with pages above 300 and price below 20", g, s)
    p2, _ = canonicalize("titles of books having pages above 300 and price under 20", g, s)
    ranked, stats = group_and_rank([p1, p2], min_keywords=3, top_k=50)
    assert len(ranked) == 1
    assert ranked[0].frequency == 2
    assert len(ranked[0].question_templates) == 2
    assert stats[0].frequency == 2


def test_group_and_rank_filters_simple(schemas):
    s = schemas["library"]
    simple = parse("SELECT title FROM book", s)
    p, _ = canonicalize("show the title of books", simple, s)
    ranked, _ = group_and_rank([p], min_keywords=3)
    assert ranked == []


def test_template_complexity_counts_keywords():
    length, kw = template_complexity("SELECT x FROM t WHERE y > 1")
    assert kw >= 3


def test_refill_type_safety(schemas, patterns):
    rows, stats = refill(patterns, schemas, per_table=10, seed=3)
    assert stats.generated > 0
    for row in rows:
        s = schemas[row["db_id"]]
        assert "⟨" not in row["query"] and "⟨" not in row["question"]
        parse(row["query"], s)


def test_refill_deterministic(schemas, patterns):
    a, _ = refill(patterns, schemas, per_table=5, seed=11)
    b, _ = refill(patterns, schemas, per_table=5, seed=11)
    assert a == b
    c, _ = refill(patterns, schemas, per_table=5, seed=12)
    assert a != c


def test_refill_skips_tables_without_compatible_columns(schemas, patterns):
    # has_pet has no text column, so text slots can never fill there
    only = {"pets": schemas["pets"]}
    rows, stats = refill(patterns, only, per_table=8, seed=1)
    assert stats.skipped_unfillable > 0
    for row in rows:
        parse(row["query"], schemas[row["db_id"]])


def test_pattern_round_trip(tmp_path, patterns):
    out = tmp_path / "patterns.json"
    save_patterns(out, patterns)
    again = load_patterns(out)
    assert [p.sql_template for p in again] == [p.sql_template for p in patterns]
    assert [p.slots for p in again] == [p.slots for p in patterns]
