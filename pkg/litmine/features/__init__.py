"""
Text cleaning and sparse feature extraction shared by training, inference
and indexing.
"""

from .text import (
    FEATURE_DIMS,
    HASH_SEED,
    FeatureVector,
    clean_text,
    document_text,
    featurize,
    featurize_text,
    hash_token,
    tokenize,
    vectorize_tokens,
)

__all__ = [
    "FEATURE_DIMS",
    "HASH_SEED",
    "FeatureVector",
    "clean_text",
    "document_text",
    "featurize",
    "featurize_text",
    "hash_token",
    "tokenize",
    "vectorize_tokens",
]
