import json

import pytest

from stacksql.datafiles import (
    starter_patterns_path,
    toy_corpus_path,
    toy_embeddings_path,
    toy_tables_path,
)
from stacksql.embeddings import load_vectors
from stacksql.schema import load_schema_file


@pytest.fixture(scope="session")
def schemas():
    return load_schema_file(toy_tables_path())


@pytest.fixture(scope="session")
def corpus():
    rows = []
    with open(toy_corpus_path()) as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


@pytest.fixture(scope="session")
def embeddings():
    return load_vectors(toy_embeddings_path())


@pytest.fixture(scope="session")
def patterns_path():
    return starter_patterns_path()
