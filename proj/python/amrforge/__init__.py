"""AMR graph linearization, Smatch evaluation and a small seq2seq parser."""

from ._core import (
    TASK_PREFIX,
    CheckpointError,
    GraphError,
    Parser,
    bootstrap_significance,
    deserialize,
    fine_grained,
    generate_synthetic,
    make_training_pair,
    normalize,
    run_cli,
    serialize,
    smatch,
)

__all__ = [
    "TASK_PREFIX",
    "CheckpointError",
    "GraphError",
    "Parser",
    "bootstrap_significance",
    "deserialize",
    "fine_grained",
    "generate_synthetic",
    "make_training_pair",
    "normalize",
    "run_cli",
    "serialize",
    "smatch",
]
