"""
Synthetic scholarly corpus.

Documents mix a Zipf-distributed background vocabulary with words from one
of four research topics or from the catch-all ``other`` class, whose
vocabulary borrows a few words from every topic. Labels stay learnable by
the classifier while term statistics look like real text.

Document ``i`` of seed ``s`` depends only on ``(s, i)``: a corpus of size n
is always the first n documents of a larger one.

Usage:
    keys = gen_corpus(1000, seed=7, store=store)
    examples = demo_training_data(per_label=200, seed=7)
"""

import json
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Tuple

import numpy as np

from litmine.classifier import LabeledExample
from litmine.errors import ValidationError
from litmine.ingest import stage_article
from litmine.store import BucketStore, sha1_key

logger = logging.getLogger(__name__)

_FOCUSED_TOPICS: Dict[str, Tuple[str, ...]] = {
    "population_spread": (
        "transmission", "incidence", "prevalence", "outbreak", "cases", "reproduction", "contact",
        "tracing", "surveillance", "cluster", "household", "attack", "serial", "interval", "epidemic",
        "curve", "incubation", "superspreading", "mobility", "seroprevalence", "spread", "airborne",
        "droplet", "aerosol", "forecast", "modeling", "doubling", "wave", "importation", "community",
    ),
    "vaccine": (
        "vaccine", "vaccination", "immunogenicity", "efficacy", "dose", "booster", "mrna", "adjuvant",
        "antibody", "neutralizing", "antigen", "spike", "trial", "phase", "placebo", "randomized",
        "adverse", "reactogenicity", "seroconversion", "candidate", "platform", "adenovirus",
        "inactivated", "subunit", "uptake", "hesitancy", "coverage", "immunization", "titer", "cellular",
    ),
    "ppe_effectiveness": (
        "masks", "respirator", "n95", "surgical", "gown", "gloves", "face", "shield", "filtration",
        "fit", "goggles", "eye", "protection", "decontamination", "reuse", "healthcare", "workers",
        "shortage", "donning", "doffing", "hand", "hygiene", "sanitizer", "barrier", "cloth",
        "layers", "leakage", "nosocomial", "equipment", "personal",
    ),
    "risk_factors": (
        "age", "comorbidity", "diabetes", "hypertension", "obesity", "smoking", "mortality",
        "severity", "icu", "admission", "odds", "ratio", "hazard", "male", "sex", "ethnicity",
        "deprivation", "cardiovascular", "kidney", "chronic", "immunosuppression", "pregnancy",
        "frailty", "elderly", "bmi", "predictors", "logistic", "multivariable", "death", "outcome",
    ),
}

# Own words plus the leading words of every focused topic.
OTHER_LABEL = "other"
_OTHER_WORDS: Tuple[str, ...] = (
    "economic", "policy", "education", "school", "mental", "wellbeing", "supply", "chain",
    "tourism", "employment", "telemedicine", "misinformation", "media", "social", "survey",
    "trust", "government", "lockdown", "budget", "agriculture", "environment", "pollution",
    "emissions", "remote", "digital", "commerce", "ethics", "law", "stock", "market",
)

TOPICS: Dict[str, Tuple[str, ...]] = {
    **_FOCUSED_TOPICS,
    OTHER_LABEL: _OTHER_WORDS + tuple(w for words in _FOCUSED_TOPICS.values() for w in words[:4]),
}
LABELS: Tuple[str, ...] = tuple(sorted(TOPICS))

COUNTRIES: Tuple[str, ...] = (
    "United States", "China", "United Kingdom", "Italy", "Germany", "India", "France",
    "Canada", "Spain", "Brazil", "Australia", "Japan", "South Korea", "Iran", "Switzerland",
)
_COUNTRY_WEIGHTS = np.array([1.0 / (rank + 1) for rank in range(len(COUNTRIES))])
_COUNTRY_WEIGHTS /= _COUNTRY_WEIGHTS.sum()

BACKGROUND_VOCAB = 5000
ZIPF_EXPONENT = 1.1
TOPIC_SHARE = 0.2
MIN_TOKENS = 200
MAX_TOKENS = 2000
TITLE_TOKENS = 10
ABSTRACT_TOKENS = 120

_SYLLABLES = ("ka", "lo", "mi", "ne", "ru", "ta", "vo", "si", "de", "pa", "gu", "re", "zo", "bi", "fe", "ha")
_FIRST_NAMES = ("Ana", "Wei", "John", "Priya", "Luca", "Maria", "Kenji", "Fatima", "Olga", "Sam")
_LAST_NAMES = ("Smith", "Zhang", "Rossi", "Garcia", "Kumar", "Müller", "Tanaka", "Silva", "Kim", "Martin")


@lru_cache(maxsize=1)
def background_vocabulary() -> Tuple[Tuple[str, ...], np.ndarray]:
    """Fixed pseudo-word vocabulary with Zipf rank probabilities."""
    rng = np.random.default_rng(0)
    words = set()
    while len(words) < BACKGROUND_VOCAB:
        n = int(rng.integers(2, 5))
        words.add("".join(_SYLLABLES[int(j)] for j in rng.integers(0, len(_SYLLABLES), size=n)))
    ranked = tuple(sorted(words))
    probs = 1.0 / np.arange(1, BACKGROUND_VOCAB + 1) ** ZIPF_EXPONENT
    return ranked, probs / probs.sum()


@dataclass(frozen=True)
class SyntheticArticle:
    index: int
    label: str
    file_bytes: bytes

    @property
    def sha(self) -> str:
        return sha1_key(self.file_bytes)

    @property
    def key(self) -> str:
        return f"{self.sha}.json"


def _words(rng: np.random.Generator, label: str, count: int) -> List[str]:
    vocab, probs = background_vocabulary()
    topic = TOPICS[label]
    from_topic = rng.random(count) < TOPIC_SHARE
    background = rng.choice(len(vocab), size=count, p=probs)
    topical = rng.integers(0, len(topic), size=count)
    return [topic[t] if pick else vocab[b] for pick, b, t in zip(from_topic, background, topical)]


def _sentences(words: List[str], per_sentence: int = 18) -> List[str]:
    chunks = [words[i:i + per_sentence] for i in range(0, len(words), per_sentence)]
    return [" ".join(chunk).capitalize() + "." for chunk in chunks if chunk]


def synthesize(seed: int, index: int, stream: int = 0) -> SyntheticArticle:
    """Document ``index`` of the corpus identified by ``(seed, stream)``."""
    rng = np.random.default_rng([seed, stream, index])
    label = LABELS[int(rng.integers(0, len(LABELS)))]
    total = int(rng.integers(MIN_TOKENS, MAX_TOKENS + 1))
    words = _words(rng, label, total)
    title, abstract, body = (
        words[:TITLE_TOKENS],
        words[TITLE_TOKENS:TITLE_TOKENS + ABSTRACT_TOKENS],
        words[TITLE_TOKENS + ABSTRACT_TOKENS:],
    )

    authors = []
    for _ in range(int(rng.integers(1, 5))):
        country = COUNTRIES[int(rng.choice(len(COUNTRIES), p=_COUNTRY_WEIGHTS))]
        authors.append({
            "first": _FIRST_NAMES[int(rng.integers(0, len(_FIRST_NAMES)))],
            "middle": [],
            "last": _LAST_NAMES[int(rng.integers(0, len(_LAST_NAMES)))],
            "affiliation": {"country": country},
        })

    paragraphs = _sentences(body)
    data = {
        "paper_id": f"synthetic-{seed}-{stream}-{index}",
        "metadata": {"title": " ".join(title).capitalize(), "authors": authors},
        "abstract": [{"text": " ".join(_sentences(abstract))}],
        "body_text": [{"text": " ".join(paragraphs[i:i + 5])} for i in range(0, len(paragraphs), 5)],
    }
    content = json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return SyntheticArticle(index=index, label=label, file_bytes=content)


def gen_corpus(n: int, seed: int, store: BucketStore, source: str = "synthetic") -> List[str]:
    """
    Stage ``n`` synthetic articles and return their staging keys in order.

    Raises:
        ValidationError: n < 1
        StorageIOError: Store failure
    """
    if n < 1:
        raise ValidationError(f"Corpus size must be >= 1, got {n}")
    keys = []
    for i in range(n):
        ref, _ = stage_article(store, synthesize(seed, i).file_bytes, default_source=source)
        keys.append(ref.key)
    logger.info("Generated %d synthetic articles (seed=%d)", n, seed)
    return keys


def expected_labels(n: int, seed: int) -> Dict[str, str]:
    """sha -> generating topic for the first n documents of a corpus."""
    labels = {}
    for i in range(n):
        article = synthesize(seed, i)
        labels[article.sha] = article.label
    return labels


def demo_training_data(per_label: int = 200, seed: int = 7) -> List[LabeledExample]:
    """
    Labeled examples drawn from a stream disjoint from every corpus.

    The generator is rejection-sampled until each label has ``per_label``
    examples.
    """
    if per_label < 1:
        raise ValidationError(f"per_label must be >= 1, got {per_label}")
    counts = {label: 0 for label in LABELS}
    examples = []
    index = 0
    while min(counts.values()) < per_label:
        article = synthesize(seed, index, stream=1)
        index += 1
        if counts[article.label] >= per_label:
            continue
        counts[article.label] += 1
        data = json.loads(article.file_bytes)
        text = " ".join(
            [data["metadata"]["title"]]
            + [p["text"] for p in data["abstract"]]
            + [p["text"] for p in data["body_text"]]
        )
        examples.append(LabeledExample(text=text, label=article.label))
    return examples
