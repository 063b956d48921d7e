"""
Scaling benchmark: synthetic corpus generation and the N x M grid.
"""

from .corpus import LABELS, TOPICS, SyntheticArticle, demo_training_data, expected_labels, gen_corpus, synthesize
from .harness import (
    DEFAULT_M_SET,
    DEFAULT_N_SET,
    BenchPoint,
    BenchReport,
    LinearFit,
    analyze,
    labels_digest,
    run_grid,
    train_demo_model,
)

__all__ = [
    "BenchPoint",
    "BenchReport",
    "DEFAULT_M_SET",
    "DEFAULT_N_SET",
    "LABELS",
    "LinearFit",
    "SyntheticArticle",
    "TOPICS",
    "analyze",
    "demo_training_data",
    "expected_labels",
    "gen_corpus",
    "labels_digest",
    "run_grid",
    "synthesize",
    "train_demo_model",
]
