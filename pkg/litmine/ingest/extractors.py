"""
PDF extractors: pluggable PDF -> article-JSON converters.

Raw PDFs wait in the raw bucket until an ``extract_stub`` task hands them to
the configured extractor. No extractor ships with litmine; the default
rejects every PDF with "extractor not configured", which keeps the raw ->
staging workflow in place for deployments that plug one in.

Contributing an extractor:
```python
class MyExtractor(PdfExtractor):
    name = "my_extractor"

    def _extract(self, pdf_bytes: bytes) -> Dict[str, Any]:
        return {"paper_id": ..., "metadata": {"title": ...}, "body_text": [...]}

EXTRACTOR_REGISTRY["my_extractor"] = MyExtractor
```
"""

import json
import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, Type

from litmine.errors import ExtractionError

logger = logging.getLogger(__name__)

PDF_MAGIC = b"%PDF"


class PdfExtractor(ABC):
    """
    Abstract base class for PDF extractors.

    Subclasses implement ``_extract`` returning a dict in the article-file
    shape; ``extract`` handles input checks and encoding.
    """

    name: str = "base"

    def extract(self, pdf_bytes: bytes) -> bytes:
        """
        Convert PDF bytes into article-file JSON bytes.

        Raises:
            ExtractionError: Empty input, non-PDF input or extractor failure
        """
        if not pdf_bytes:
            raise ExtractionError("empty PDF")
        if not pdf_bytes.startswith(PDF_MAGIC):
            raise ExtractionError("not a PDF document")
        try:
            data = self._extract(pdf_bytes)
        except ExtractionError:
            raise
        except Exception as e:
            raise ExtractionError(f"{self.name} failed: {e}") from e
        return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")

    @abstractmethod
    def _extract(self, pdf_bytes: bytes) -> Dict[str, Any]:
        """Extractor-specific conversion."""

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(name={self.name})"


class UnconfiguredExtractor(PdfExtractor):
    """Default extractor: rejects every PDF."""

    name = "unconfigured"

    def _extract(self, pdf_bytes: bytes) -> Dict[str, Any]:
        raise ExtractionError("extractor not configured")


EXTRACTOR_REGISTRY: Dict[str, Type[PdfExtractor]] = {
    "unconfigured": UnconfiguredExtractor,
}


def get_extractor(name: str = "unconfigured") -> PdfExtractor:
    """
    Instantiate an extractor by name.

    Raises:
        ExtractionError: If the name is not registered
    """
    if name not in EXTRACTOR_REGISTRY:
        raise ExtractionError(
            f"Unknown extractor: {name}. Available extractors: {list(EXTRACTOR_REGISTRY.keys())}"
        )
    return EXTRACTOR_REGISTRY[name]()
