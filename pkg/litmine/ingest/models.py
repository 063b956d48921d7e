"""
Ingest data model: articles, metadata rows and run reports.
"""

import json
import re
from dataclasses import dataclass, field
from datetime import date
from typing import Any, Dict, List, Optional

from litmine.errors import ValidationError

SHA_PATTERN = re.compile(r"^[0-9a-f]{40}$")


def parse_publish_time(value: Optional[str]) -> Optional[date]:
    """
    Parse a publish date.

    Accepts ISO dates (2020-03-01) and bare years (2020 -> 2020-01-01).
    Empty values give None.

    Raises:
        ValueError: If the value is neither
    """
    if value is None:
        return None
    value = value.strip()
    if not value:
        return None
    if re.fullmatch(r"\d{4}", value):
        return date(int(value), 1, 1)
    return date.fromisoformat(value)


@dataclass(frozen=True)
class Author:
    """Article author with an optional affiliation country."""
    name: str
    country: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "country": self.country}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Author":
        return cls(name=data.get("name", ""), country=data.get("country"))


@dataclass(frozen=True)
class ArticleDoc:
    """
    One scholarly article.

    ``sha`` is the SHA1 of the originating file's bytes. At least one of
    title, abstract and body_text must be non-empty.
    """
    sha: str
    title: str = ""
    abstract: str = ""
    body_text: str = ""
    authors: List[Author] = field(default_factory=list)
    publish_time: Optional[date] = None
    source: str = ""

    def __post_init__(self):
        if not SHA_PATTERN.match(self.sha or ""):
            raise ValidationError(f"ArticleDoc.sha must be 40 lowercase hex chars, got {self.sha!r}")
        if not (self.title.strip() or self.abstract.strip() or self.body_text.strip()):
            raise ValidationError(f"Article {self.sha} has no title, abstract or body text")

    @property
    def countries(self) -> List[str]:
        """Distinct author countries in first-seen order."""
        seen: List[str] = []
        for author in self.authors:
            if author.country and author.country not in seen:
                seen.append(author.country)
        return seen

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sha": self.sha,
            "title": self.title,
            "abstract": self.abstract,
            "body_text": self.body_text,
            "authors": [a.to_dict() for a in self.authors],
            "publish_time": self.publish_time.isoformat() if self.publish_time else None,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ArticleDoc":
        return cls(
            sha=data["sha"],
            title=data.get("title") or "",
            abstract=data.get("abstract") or "",
            body_text=data.get("body_text") or "",
            authors=[Author.from_dict(a) for a in data.get("authors") or []],
            publish_time=parse_publish_time(data.get("publish_time")),
            source=data.get("source") or "",
        )

    def serialize(self) -> bytes:
        """Canonical JSON encoding stored in the staging bucket."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")

    @classmethod
    def parse(cls, content: bytes) -> "ArticleDoc":
        """
        Decode a staged article.

        Raises:
            ValidationError: If the bytes are not a valid staged article
        """
        try:
            data = json.loads(content.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ValidationError(f"Staged article is not valid JSON: {e}") from e
        if not isinstance(data, dict) or "sha" not in data:
            raise ValidationError("Staged article lacks a 'sha' field")
        try:
            return cls.from_dict(data)
        except (TypeError, ValueError, AttributeError) as e:
            raise ValidationError(f"Staged article is malformed: {e}") from e


@dataclass(frozen=True)
class MetadataRow:
    """One row of the dataset metadata CSV."""
    record_id: str
    sha: Optional[str] = None
    title: str = ""
    abstract: str = ""
    publish_time: Optional[date] = None
    authors_raw: str = ""
    source: str = ""

    def __post_init__(self):
        if not self.record_id:
            raise ValidationError("MetadataRow.record_id must be non-empty")
        if self.sha is not None and not SHA_PATTERN.match(self.sha):
            raise ValidationError(f"MetadataRow.sha is not 40-hex: {self.sha!r}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "record_id": self.record_id,
            "sha": self.sha,
            "title": self.title,
            "abstract": self.abstract,
            "publish_time": self.publish_time.isoformat() if self.publish_time else None,
            "authors": self.authors_raw,
            "source": self.source,
        }


@dataclass(frozen=True)
class MetadataReject:
    """A CSV row that could not become a MetadataRow."""
    line: int
    reason: str
    record_id: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {"line": self.line, "reason": self.reason, "record_id": self.record_id}


@dataclass
class ParsedMetadata:
    """Result of parsing a metadata CSV."""
    rows: List[MetadataRow] = field(default_factory=list)
    rejects: List[MetadataReject] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


@dataclass
class IngestReport:
    """
    Counters for one ingest run.

    Invariant: seen = new + skipped_existing + rejected.
    """
    seen: int = 0
    new: int = 0
    skipped_existing: int = 0
    rejected: int = 0
    elapsed: float = 0.0
    error: Optional[str] = None
    reasons: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "seen": self.seen,
            "new": self.new,
            "skipped_existing": self.skipped_existing,
            "rejected": self.rejected,
            "elapsed": round(self.elapsed, 3),
        }
        if self.error is not None:
            data["error"] = self.error
        if self.reasons:
            data["reasons"] = self.reasons
        return data
