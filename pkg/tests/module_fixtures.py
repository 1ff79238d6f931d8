"""Test aliases for the packaged selftest instances (hidden 4, width 8)."""

from stacksql.selftest import (
    SELFTEST_CFG as MINI_CFG,
    module_instance as mini_module,
    selftest_embeddings as mini_embeddings,
    selftest_examples as mini_examples,
    selftest_schema as mini_schema,
)

__all__ = ["MINI_CFG", "mini_embeddings", "mini_examples", "mini_module", "mini_schema"]
