"""Shared model/decoding configuration with the published defaults."""

from dataclasses import dataclass, field


@dataclass
class ModelConfig:
    """Architecture, caps, and recursion limits shared by every module."""

    hidden_dim: int = 120
    dropout: float = 0.3
    embedding_dim: int = 50
    max_depth: int = 4
    col_cap: int = 3  # columns per clause
    op_cap: int = 2  # operators per condition column
    agg_cap: int = 3  # aggregators per selected column
    kw_cap: int = 3  # optional clause keywords (structural)
    # safety valve: past this many module invocations in one decode, the
    # set-operation and subquery choices are forced closed (same forcing
    # as the depth cap); several times deeper than any gold tree needs
    max_invocations: int = 200

    def __post_init__(self):
        if self.hidden_dim <= 0:
            raise ValueError("hidden_dim must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        for name in ("col_cap", "op_cap", "agg_cap", "kw_cap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.max_invocations < 10:
            raise ValueError("max_invocations must be at least 10")

    @property
    def encoding_dim(self):
        return 2 * self.hidden_dim


@dataclass
class TrainConfig:
    """Per-module training loop settings."""

    batch_size: int = 64
    epochs: int = 300
    learning_rate: float = 1e-3
    seed: int = 20
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
