"""
Text cleaning and hashed feature extraction.

The same analyzer feeds the classifier and the search index, so both agree
on token boundaries:

    clean_text("COVID-19, Vaccine!") -> "covid 19 vaccine"

Feature vectors are unigram term frequencies hashed into a fixed 2^18 space
with a keyed 64-bit BLAKE2b hash, then L2-normalized.
"""

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Tuple, Union

import numpy as np

FEATURE_DIMS = 2 ** 18
HASH_SEED = 0x6C69746D696E6531  # "litmine1"

_HASH_KEY = HASH_SEED.to_bytes(8, "big")
_NON_ALNUM = re.compile(r"[^a-z0-9]+")


def clean_text(raw: Union[str, bytes, None]) -> str:
    """
    Lowercase text and reduce it to [a-z0-9] tokens joined by single spaces.

    Bytes are decoded as UTF-8 with invalid sequences replaced.
    """
    if raw is None:
        return ""
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8", errors="replace")
    return _NON_ALNUM.sub(" ", raw.lower()).strip()


def tokenize(raw: Union[str, bytes, None]) -> List[str]:
    cleaned = clean_text(raw)
    return cleaned.split(" ") if cleaned else []


def hash_token(token: str) -> int:
    """Feature index of a token."""
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=_HASH_KEY).digest()
    return int.from_bytes(digest, "big") % FEATURE_DIMS


@dataclass(frozen=True)
class FeatureVector:
    """Sparse, L2-normalized feature vector with strictly increasing indices."""
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.float64))
    dims: int = FEATURE_DIMS

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.values, self.values)))

    def entries(self) -> List[Tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.values.tolist()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (
            self.dims == other.dims
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self) -> int:
        return hash((self.dims, self.indices.tobytes(), self.values.tobytes()))


def vectorize_tokens(tokens: Iterable[str]) -> FeatureVector:
    """Hash a token multiset into a normalized FeatureVector."""
    counts: Dict[int, float] = {}
    for token, tf in Counter(tokens).items():
        idx = hash_token(token)
        counts[idx] = counts.get(idx, 0.0) + float(tf)

    if not counts:
        return FeatureVector()

    indices = np.fromiter(sorted(counts), dtype=np.int64, count=len(counts))
    values = np.array([counts[i] for i in indices.tolist()], dtype=np.float64)
    # math.fsum keeps the norm independent of summation order
    norm = math.sqrt(math.fsum(v * v for v in values.tolist()))
    return FeatureVector(indices=indices, values=values / norm)


def featurize_text(text: Union[str, bytes, None]) -> FeatureVector:
    return vectorize_tokens(tokenize(text))


def document_text(title: str, abstract: str, body_text: str) -> str:
    """Text the classifier sees for an article."""
    return " ".join([title or "", abstract or "", body_text or ""])


def featurize(doc) -> FeatureVector:
    """
    Feature vector of an ArticleDoc (title, abstract and body text).

    Pure: the document is not modified.
    """
    return featurize_text(document_text(doc.title, doc.abstract, doc.body_text))
