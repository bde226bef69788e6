"""Mutation-path search against malware classifiers.

Records, contexts, models and reports are plain dicts in the same shape as
the JSON files written by the command-line tool.
"""

from ._core import (
    ConfigError,
    Error,
    Model,
    MutationError,
    StageError,
    allowed_mutations,
    apply_path,
    canonical_key,
    derive_context,
    generate_synthetic,
    mutation_names,
    mutation_stats,
    roc_auc,
    run_experiment,
    search_mcts,
    search_random,
)

__all__ = [
    "ConfigError",
    "Error",
    "Model",
    "MutationError",
    "StageError",
    "allowed_mutations",
    "apply_path",
    "canonical_key",
    "derive_context",
    "generate_synthetic",
    "mutation_names",
    "mutation_stats",
    "roc_auc",
    "run_experiment",
    "search_mcts",
    "search_random",
]
