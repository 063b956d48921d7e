"""
Ingest tests: metadata parsing, checksum diff, staging, incremental runs.

Usage:
    pytest tests/test_ingest.py -v
"""

import io
import json
import os
import time
from datetime import date

import pytest

from conftest import write_dataset
from litmine.errors import ArticleSchemaError, IntegrityError, MetadataParseError, ValidationError
from litmine.ingest import (
    ArticleDoc,
    ArticleValidator,
    DatasetIngestor,
    IngestLock,
    MetadataRow,
    diff_incremental,
    enqueue_raw_pdf,
    ingest_article,
    load_metadata,
    parse_metadata,
    stage_article,
    synthesize_article_file,
)
from litmine.store import BucketId, ObjectRef, sha1_key

HEADER = "record_id,sha,title,abstract,publish_time,authors,source\n"


def parse(text: str):
    return parse_metadata(io.StringIO(HEADER + text))


class TestMetadataParsing:
    """parse_metadata / load_metadata."""

    def test_well_formed_rows(self):
        parsed = parse(
            f"r1,{'a' * 40},Title one,Abstract,2020-03-01,Smith J,pmc\n"
            "r2,,Title two,,2020,,\n"
        )
        assert [r.record_id for r in parsed.rows] == ["r1", "r2"]
        assert parsed.rows[0].sha == "a" * 40
        assert parsed.rows[0].publish_time == date(2020, 3, 1)
        assert parsed.rows[1].sha is None
        assert parsed.rows[1].publish_time == date(2020, 1, 1)
        assert parsed.rejects == []

    def test_quoted_fields_with_commas(self):
        parsed = parse('r1,,"Masks, distancing and schools","Line one\nline two",,,\n')
        assert parsed.rows[0].title == "Masks, distancing and schools"
        assert "line two" in parsed.rows[0].abstract

    def test_malformed_rows_rejected_not_fatal(self):
        parsed = parse(
            "r1,,ok,,,,\n"
            "r2,,too,few\n"
            "r3,,bad date,,someday,,\n"
            ",,no id,,,,\n"
            "r5,,also ok,,,,\n"
        )
        assert [r.record_id for r in parsed.rows] == ["r1", "r5"]
        assert len(parsed.rejects) == 3
        assert any("publish_time" in r.reason for r in parsed.rejects)

    def test_bad_sha_rejected(self):
        parsed = parse("r1,nothex,Title,,,,\n")
        assert parsed.rows == []
        assert len(parsed.rejects) == 1

    def test_missing_columns(self):
        with pytest.raises(MetadataParseError):
            parse_metadata(io.StringIO("record_id,title\nr1,x\n"))

    def test_empty_stream(self):
        with pytest.raises(MetadataParseError):
            parse_metadata(io.StringIO(""))

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(MetadataParseError):
            load_metadata(tmp_path / "absent.csv")


class TestArticleSchema:
    """Article file validation."""

    def test_valid_article(self, article_file):
        data = ArticleValidator().load(article_file(0))
        assert data["paper_id"].startswith("synthetic-")

    def test_missing_title(self):
        content = json.dumps({"paper_id": "x", "metadata": {}}).encode()
        with pytest.raises(ArticleSchemaError):
            ArticleValidator().load(content)

    def test_not_json(self):
        with pytest.raises(ArticleSchemaError):
            ArticleValidator().load(b"{not json")


class TestStaging:
    """stage_article."""

    def test_stage_new_article(self, store, article_file):
        content = article_file(0)
        ref, created = stage_article(store, content, default_source="synthetic")
        assert created
        assert ref == ObjectRef(BucketId.STAGING, f"{sha1_key(content)}.json")
        doc = ArticleDoc.parse(store.get_bytes(BucketId.STAGING, ref.key))
        assert doc.sha == sha1_key(content)
        assert doc.title
        assert doc.source == "synthetic"
        assert doc.countries

    def test_restage_is_noop(self, store, article_file):
        stage_article(store, article_file(0))
        ref, created = stage_article(store, article_file(0))
        assert not created
        assert store.count(BucketId.STAGING) == 1

    def test_completed_article_not_restaged(self, store, article_file):
        ref, _ = stage_article(store, article_file(0))
        store.move(ref, BucketId.COMPLETED)
        ref2, created = stage_article(store, article_file(0))
        assert not created
        assert ref2.bucket == BucketId.COMPLETED
        assert store.count(BucketId.STAGING) == 0

    def test_sha_mismatch(self, store, article_file):
        row = MetadataRow(record_id="r1", sha="0" * 40)
        with pytest.raises(IntegrityError):
            stage_article(store, article_file(0), row)

    def test_metadata_fills_publish_time(self, store, article_file):
        content = article_file(1)
        row = MetadataRow(record_id="r1", sha=sha1_key(content), publish_time=date(2021, 5, 4), source="pmc")
        ref, _ = stage_article(store, content, row)
        doc = ArticleDoc.parse(store.get_bytes(BucketId.STAGING, ref.key))
        assert doc.publish_time == date(2021, 5, 4)
        assert doc.source == "pmc"

    def test_empty_article_rejected(self, store):
        row = MetadataRow(record_id="r1", title="", abstract="")
        with pytest.raises(ValidationError):
            stage_article(store, synthesize_article_file(row), row)

    def test_metadata_only_row_is_deterministic(self):
        row = MetadataRow(record_id="r9", title="Only a title", abstract="and an abstract")
        assert synthesize_article_file(row) == synthesize_article_file(row)

    def test_ingest_article(self, store, article_file):
        content = article_file(2)
        ref = ingest_article(store, content, MetadataRow(record_id="r1", sha=sha1_key(content)))
        assert store.exists(BucketId.STAGING, ref.key)
        assert ingest_article(store, content) == ref
        assert store.count(BucketId.STAGING) == 1

    def test_ingest_article_schema_violation(self, store):
        with pytest.raises(ArticleSchemaError):
            ingest_article(store, json.dumps({"paper_id": "x", "metadata": {}}).encode())
        assert store.count(BucketId.STAGING) == 0

    def test_raw_pdf(self, store):
        ref = enqueue_raw_pdf(store, b"%PDF-1.4 fake")
        assert ref.key == f"{sha1_key(b'%PDF-1.4 fake')}.pdf"
        assert store.exists(BucketId.RAW, ref.key)


class TestIncrementalDiff:
    """diff_incremental."""

    def test_diff_skips_staged_and_completed(self, store, article_file):
        shas = []
        for i in range(3):
            ref, _ = stage_article(store, article_file(i))
            shas.append(ref.key[:40])
        store.move(ObjectRef(BucketId.STAGING, f"{shas[1]}.json"), BucketId.COMPLETED)
        rows = [MetadataRow(record_id=f"r{i}", sha=sha) for i, sha in enumerate(shas)]
        rows.append(MetadataRow(record_id="new", sha="f" * 40))
        rows.append(MetadataRow(record_id="nosha"))
        new = diff_incremental(store, rows)
        assert [r.record_id for r in new] == ["new", "nosha"]


class TestDatasetIngestor:
    """Full ingest runs."""

    def test_ingest_then_rerun(self, store, tmp_path, article_file):
        files = [article_file(i) for i in range(20)]
        metadata = write_dataset(tmp_path / "dataset", files)
        ingestor = DatasetIngestor(store, metadata, tmp_path / "dataset" / "articles", "synthetic")

        first = ingestor.run()
        assert first.ok
        assert (first.seen, first.new, first.skipped_existing, first.rejected) == (20, 20, 0, 0)
        assert store.count(BucketId.STAGING) == 20

        second = ingestor.run()
        assert (second.new, second.skipped_existing) == (0, 20)
        assert store.count(BucketId.STAGING) == 20

    def test_rows_without_sha(self, store, tmp_path, article_file):
        files = [article_file(i) for i in range(5)]
        metadata = write_dataset(tmp_path / "dataset", files, with_sha=False)
        report = DatasetIngestor(store, metadata, tmp_path / "dataset" / "articles").run()
        # metadata-only rows are synthesized from title/abstract
        assert report.new == 5
        assert DatasetIngestor(store, metadata, tmp_path / "dataset" / "articles").run().new == 0

    def test_missing_article_file_is_rejected(self, store, tmp_path, article_file):
        metadata = write_dataset(tmp_path / "dataset", [article_file(0), article_file(1)])
        with open(metadata, "a", encoding="utf-8") as f:
            f.write(f"ghost,{'e' * 40},Ghost,,,,\n")
        report = DatasetIngestor(store, metadata, tmp_path / "dataset" / "articles").run()
        assert report.new == 2
        assert report.rejected == 1
        assert any("ghost" in r for r in report.reasons)

    def test_missing_metadata(self, store, tmp_path):
        with pytest.raises(MetadataParseError):
            DatasetIngestor(store, tmp_path / "nope.csv").run()

    def test_lock_held(self, store, tmp_path, article_file):
        metadata = write_dataset(tmp_path / "dataset", [article_file(0)])
        articles = tmp_path / "dataset" / "articles"
        with IngestLock(store.root, str(articles.resolve())):
            with pytest.raises(ValidationError):
                DatasetIngestor(store, metadata, articles).run()
        assert DatasetIngestor(store, metadata, articles).run().new == 1

    @pytest.mark.parametrize("content", [b"", b"not-a-pid", b"0"])
    def test_lock_without_pid_is_held_while_fresh(self, store, tmp_path, article_file, content):
        metadata = write_dataset(tmp_path / "dataset", [article_file(0)])
        articles = tmp_path / "dataset" / "articles"
        lock = IngestLock(store.root, str(articles.resolve()))
        lock.path.write_bytes(content)
        with pytest.raises(ValidationError):
            DatasetIngestor(store, metadata, articles).run()
        assert lock.path.read_bytes() == content

    def test_lock_without_pid_taken_over_when_old(self, store, tmp_path, article_file):
        metadata = write_dataset(tmp_path / "dataset", [article_file(0)])
        articles = tmp_path / "dataset" / "articles"
        lock = IngestLock(store.root, str(articles.resolve()))
        lock.path.write_bytes(b"")
        old = time.time() - lock.stale_after_s - 5
        os.utime(lock.path, (old, old))
        assert DatasetIngestor(store, metadata, articles).run().new == 1
        assert not lock.path.exists()

    def test_duplicate_rows_counted_once(self, store, tmp_path, article_file):
        files = [article_file(i) for i in range(4)]
        metadata = write_dataset(tmp_path / "dataset", files + files + files[:2])
        report = DatasetIngestor(store, metadata, tmp_path / "dataset" / "articles", max_workers=8).run()
        assert report.new == store.count(BucketId.STAGING) == 4
        assert report.skipped_existing == 6
        assert report.rejected == 0

    @pytest.mark.slow
    def test_incremental_at_scale(self, store, tmp_path, article_file):
        """Re-ingesting 5000 articles stages nothing."""
        files = [article_file(i) for i in range(5000)]
        metadata = write_dataset(tmp_path / "dataset", files)
        articles = tmp_path / "dataset" / "articles"
        assert DatasetIngestor(store, metadata, articles).run().new == 5000
        again = DatasetIngestor(store, metadata, articles).run()
        assert again.new == 0
        assert again.skipped_existing == 5000
