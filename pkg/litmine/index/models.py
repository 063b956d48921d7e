"""
Index data model: indexed documents, search hits and aggregation results.
"""

from dataclasses import dataclass, field
from datetime import date
from typing import Any, Dict, List, Optional, Tuple

from litmine.errors import ValidationError
from litmine.ingest.models import SHA_PATTERN, ArticleDoc, parse_publish_time

TEXT_FIELDS = ("title", "abstract", "body_text")
KEYWORD_FIELDS = ("category", "countries", "source")
FIELD_WEIGHTS = {"title": 2.0, "abstract": 1.0, "body_text": 1.0}

SNIPPET_CHARS = 120


@dataclass(frozen=True)
class IndexedDoc:
    """An article as stored in the index; ``category`` is the predicted label."""
    doc_id: str
    title: str = ""
    abstract: str = ""
    body_text: str = ""
    category: str = ""
    countries: Tuple[str, ...] = ()
    source: str = ""
    publish_time: Optional[date] = None

    def __post_init__(self):
        if not SHA_PATTERN.match(self.doc_id or ""):
            raise ValidationError(f"doc_id must be a 40-hex sha, got {self.doc_id!r}")
        object.__setattr__(self, "countries", tuple(dict.fromkeys(c for c in self.countries if c)))

    @classmethod
    def from_article(cls, doc: ArticleDoc, category: str) -> "IndexedDoc":
        return cls(
            doc_id=doc.sha,
            title=doc.title,
            abstract=doc.abstract,
            body_text=doc.body_text,
            category=category,
            countries=tuple(doc.countries),
            source=doc.source,
            publish_time=doc.publish_time,
        )

    def keyword_values(self, field_name: str) -> Tuple[str, ...]:
        """Values a doc contributes to a terms aggregation."""
        if field_name == "countries":
            return self.countries
        value = getattr(self, field_name)
        return (value,) if value else ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "doc_id": self.doc_id,
            "title": self.title,
            "abstract": self.abstract,
            "body_text": self.body_text,
            "category": self.category,
            "countries": list(self.countries),
            "source": self.source,
            "publish_time": self.publish_time.isoformat() if self.publish_time else None,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "IndexedDoc":
        return cls(
            doc_id=data["doc_id"],
            title=data.get("title") or "",
            abstract=data.get("abstract") or "",
            body_text=data.get("body_text") or "",
            category=data.get("category") or "",
            countries=tuple(data.get("countries") or ()),
            source=data.get("source") or "",
            publish_time=parse_publish_time(data.get("publish_time")),
        )


@dataclass(frozen=True)
class SearchHit:
    doc_id: str
    score: float
    title: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {"doc_id": self.doc_id, "score": self.score, "title": self.title}


@dataclass
class AggregationResult:
    """Terms aggregation: (key, count) buckets sorted by count desc, key asc."""
    field: str
    buckets: List[Tuple[str, int]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(count for _, count in self.buckets)

    def to_dict(self) -> Dict[str, Any]:
        return {"field": self.field, "buckets": [{"key": k, "count": c} for k, c in self.buckets]}
