"""
Article file validation.

Validates per-article JSON files (the public CORD-19 per-article shape)
against a JSON Schema and reports every violation with its field path:

    {"paper_id": str,
     "metadata": {"title": str,
                  "authors": [{"first": str, "last": str,
                               "affiliation": {"country": str}}]},
     "abstract": [{"text": str}],
     "body_text": [{"text": str}]}

Usage:
    validator = ArticleValidator()
    data = validator.load(file_bytes)   # raises ArticleSchemaError
"""

import json
import logging
from dataclasses import dataclass
from typing import Any, Dict, List

import jsonschema

from litmine.errors import ArticleSchemaError

logger = logging.getLogger(__name__)

_PARAGRAPHS = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["text"],
        "properties": {"text": {"type": "string"}},
    },
}

ARTICLE_SCHEMA: Dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["paper_id", "metadata"],
    "properties": {
        "paper_id": {"type": "string"},
        "metadata": {
            "type": "object",
            "required": ["title"],
            "properties": {
                "title": {"type": "string"},
                "authors": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "first": {"type": "string"},
                            "middle": {"type": "array", "items": {"type": "string"}},
                            "last": {"type": "string"},
                            "affiliation": {
                                "type": "object",
                                "properties": {
                                    "country": {"type": ["string", "null"]},
                                    "location": {"type": "object"},
                                },
                            },
                        },
                    },
                },
            },
        },
        "abstract": _PARAGRAPHS,
        "body_text": _PARAGRAPHS,
    },
}


@dataclass
class SchemaViolation:
    """Single schema violation."""

    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


class ArticleValidator:
    """Validates article files against ARTICLE_SCHEMA."""

    def __init__(self, schema: Dict[str, Any] = ARTICLE_SCHEMA):
        jsonschema.Draft7Validator.check_schema(schema)
        self._validator = jsonschema.Draft7Validator(schema)

    def violations(self, data: Any) -> List[SchemaViolation]:
        """All violations, ordered by field path."""
        found = []
        for error in self._validator.iter_errors(data):
            path = ".".join(str(p) for p in error.absolute_path) or "<root>"
            found.append(SchemaViolation(path, error.message))
        return sorted(found, key=lambda v: (v.field, v.message))

    def load(self, content: bytes) -> Dict[str, Any]:
        """
        Decode and validate an article file.

        Raises:
            ArticleSchemaError: Not UTF-8 JSON, or schema violations (with
                field-level reasons)
        """
        try:
            data = json.loads(content.decode("utf-8"))
        except UnicodeDecodeError as e:
            raise ArticleSchemaError("Article file is not UTF-8", [f"<root>: {e}"]) from e
        except json.JSONDecodeError as e:
            raise ArticleSchemaError("Article file is not JSON", [f"<root>: {e}"]) from e

        problems = self.violations(data)
        if problems:
            raise ArticleSchemaError("Article file violates schema", [str(p) for p in problems])
        return data
