"""Multi-table database schemas and table-aware column token sequences.

Schemas load from the common tables.json layout: a JSON array of records
with db_id, table_names_original, column_names_original (pairs of table
index and raw name), column_types, primary_keys, and foreign_keys.  Column
index 0 is the special `*` column.
"""

import json
from dataclasses import dataclass, field

from stacksql.embeddings import tokenize

COLUMN_TYPES = ("text", "number", "time", "boolean", "others")


class SchemaFormatError(ValueError):
    """Schema record is malformed; message names the offending db_id."""


@dataclass
class Column:
    table_index: int  # -1 for the `*` column
    orig_name: str
    name_words: tuple
    col_type: str
    is_primary: bool = False
    is_foreign: bool = False


@dataclass
class Schema:
    db_id: str
    tables: list
    columns: list
    foreign_keys: list = field(default_factory=list)
    table_words: list = field(default_factory=list)

    def __post_init__(self):
        if not self.table_words:
            self.table_words = [tuple(tokenize(t)) for t in self.tables]

    def table_of(self, col):
        return self.columns[col].table_index

    def columns_of_table(self, table_index):
        return [
            i for i, c in enumerate(self.columns) if c.table_index == table_index
        ]

    def find_column(self, table_index, name):
        """Column index by case-insensitive raw name within one table."""
        want = name.lower()
        for i, c in enumerate(self.columns):
            if c.table_index == table_index and c.orig_name.lower() == want:
                return i
        return None

    def find_table(self, name):
        want = name.lower()
        for i, t in enumerate(self.tables):
            if t.lower() == want:
                return i
        return None


def _schema_from_record(rec):
    db_id = rec.get("db_id", "<missing db_id>")
    try:
        tables = list(rec["table_names_original"])
        raw_cols = rec["column_names_original"]
        col_types = rec["column_types"]
        primary = set(rec.get("primary_keys", []))
        fks = [tuple(fk) for fk in rec.get("foreign_keys", [])]
    except KeyError as exc:
        raise SchemaFormatError(f"{db_id}: missing key {exc}") from exc
    if len(raw_cols) != len(col_types):
        raise SchemaFormatError(f"{db_id}: {len(raw_cols)} columns vs {len(col_types)} types")
    foreign = {c for fk in fks for c in fk}
    columns = []
    for idx, (tbl_idx, name) in enumerate(raw_cols):
        if name == "*":
            columns.append(Column(-1, "*", ("all", "*"), "text"))
            continue
        if not 0 <= tbl_idx < len(tables):
            raise SchemaFormatError(f"{db_id}: column {name!r} has table index {tbl_idx}")
        ctype = col_types[idx]
        if ctype not in COLUMN_TYPES:
            raise SchemaFormatError(f"{db_id}: column {name!r} has unknown type {ctype!r}")
        words = tuple(tokenize(name))
        if not words:
            raise SchemaFormatError(f"{db_id}: column {name!r} tokenizes to nothing")
        columns.append(
            Column(
                table_index=tbl_idx,
                orig_name=name,
                name_words=words,
                col_type=ctype,
                is_primary=idx in primary,
                is_foreign=idx in foreign,
            )
        )
    ncols = len(columns)
    for a, b in fks:
        if not (0 <= a < ncols and 0 <= b < ncols):
            raise SchemaFormatError(f"{db_id}: foreign key ({a}, {b}) out of range")
    for p in primary:
        if not 0 <= p < ncols:
            raise SchemaFormatError(f"{db_id}: primary key {p} out of range")
    return Schema(db_id=db_id, tables=tables, columns=columns, foreign_keys=fks)


def load_schema_file(path):
    """Load every schema in a tables.json file, keyed by db_id."""
    with open(path, "r", encoding="utf-8") as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise SchemaFormatError(f"{path}: expected a JSON array of schema records")
    schemas = {}
    for rec in records:
        s = _schema_from_record(rec)
        schemas[s.db_id] = s
    return schemas


def serialize_schema(s):
    """Inverse of _schema_from_record, for round-trip checks."""
    return {
        "db_id": s.db_id,
        "table_names_original": list(s.tables),
        "column_names_original": [
            [c.table_index, c.orig_name] for c in s.columns
        ],
        "column_types": [c.col_type for c in s.columns],
        "primary_keys": [i for i, c in enumerate(s.columns) if c.is_primary],
        "foreign_keys": [list(fk) for fk in s.foreign_keys],
    }


def column_token_sequence(s, col):
    """Word sequence feeding the column encoder.

    Table-name words, then column-name words, then the type word, then
    `primary`/`foreign` flags.  The `*` column maps to ("all", "*").
    """
    if not 0 <= col < len(s.columns):
        raise IndexError(f"column index {col} out of range for {s.db_id}")
    c = s.columns[col]
    if c.table_index < 0:
        return list(c.name_words)
    words = list(s.table_words[c.table_index])
    words.extend(c.name_words)
    words.append(c.col_type)
    if c.is_primary:
        words.append("primary")
    if c.is_foreign:
        words.append("foreign")
    return words


def column_label(s, col):
    """Stable human-readable identity: `table.column`, or `*`."""
    c = s.columns[col]
    if c.table_index < 0:
        return "*"
    return f"{s.tables[c.table_index].lower()}.{c.orig_name.lower()}"
