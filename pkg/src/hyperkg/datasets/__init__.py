"""Benchmark construction: inductive splits, reification, corruption, synthetic corpora."""
from .edit import corrupt_positions, format_stats, stats
from .reify import (
    reified_query_subgraph,
    reify_positional,
    reify_positional_facts,
    reify_relnode,
    reify_relnode_facts,
    unreify_positional,
    unreify_relnode,
)
from .split import InductiveSplit, SplitParams, generate_split, mix_by_ratio
from .synthetic import TEMPLATE, TEMPLATE_ARITY, compositional_corpus, holdout, local_corpus

__all__ = [name for name in dir() if not name.startswith("_")]
