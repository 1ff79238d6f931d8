"""Paths to the bundled toy data files (schemas, corpus, vectors, patterns)."""

from importlib import resources


def _data_path(name):
    return resources.files("stacksql").joinpath("data", name)


def toy_tables_path():
    return str(_data_path("toy_tables.json"))


def toy_corpus_path():
    return str(_data_path("toy_corpus.jsonl"))


def toy_embeddings_path():
    return str(_data_path("toy_embeddings_50d.txt"))


def starter_patterns_path():
    return str(_data_path("starter_patterns.json"))
