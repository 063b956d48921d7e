"""
Index tests: BM25 scoring, aggregations, segment persistence, snapshots and
the HTTP query service.

Usage:
    pytest tests/test_index.py -v
"""

import asyncio
import math
import random
from collections import Counter

import pytest
from aiohttp.test_utils import TestClient, TestServer

from litmine.errors import IntegrityError, ValidationError
from litmine.index import IndexedDoc, SearchIndex, bm25_idf, build_index_app, read_snapshot, restore, snapshot


def sha(n: int) -> str:
    return f"{n:040x}"


@pytest.fixture
def three_docs(index):
    index.index_docs([
        IndexedDoc(sha(1), abstract="vaccine trial vaccine"),
        IndexedDoc(sha(2), abstract="vaccine safety"),
        IndexedDoc(sha(3), abstract="mask policy school closure"),
    ])
    return index


def random_docs(n: int, seed: int = 0):
    rng = random.Random(seed)
    categories = ["other", "population_spread", "ppe_effectiveness", "risk_factors", "vaccine"]
    countries = ["Italy", "China", "Brazil", "India", "Spain", "Japan"]
    docs = []
    for i in range(n):
        docs.append(IndexedDoc(
            sha(i + 1),
            title=f"doc {i}",
            category=rng.choice(categories),
            countries=tuple(rng.sample(countries, rng.randint(0, 3))),
            source=rng.choice(["pmc", "biorxiv", ""]),
        ))
    return docs


class TestSearch:
    """BM25 ranking."""

    def test_bm25_hand_computed(self, three_docs):
        hits = three_docs.search("vaccine")
        idf = math.log(1.6)
        assert [h.doc_id for h in hits] == [sha(1), sha(2)]
        # d1: tf=2, |d|=avgdl=3; d2: tf=1, |d|=2
        assert hits[0].score == pytest.approx(idf * 2 * 2.2 / (2 + 1.2), abs=1e-6)
        assert hits[1].score == pytest.approx(idf * 2.2 / (1 + 1.2 * (0.25 + 0.75 * 2 / 3)), abs=1e-6)

    def test_idf_formula(self):
        assert bm25_idf(3, 2) == pytest.approx(math.log(1.6))
        assert bm25_idf(10, 10) > 0

    def test_title_weighs_double(self, index):
        index.index_docs([
            IndexedDoc(sha(1), title="remdesivir", abstract="filler words here"),
            IndexedDoc(sha(2), title="filler words here", abstract="remdesivir"),
        ])
        hits = index.search("remdesivir")
        assert [h.doc_id for h in hits] == [sha(1), sha(2)]
        assert hits[0].score == pytest.approx(2 * hits[1].score)

    def test_disjunction_and_duplicate_terms(self, three_docs):
        assert {h.doc_id for h in three_docs.search("safety school")} == {sha(2), sha(3)}
        single = three_docs.search("safety")[0].score
        assert three_docs.search("safety safety")[0].score == pytest.approx(single)

    def test_ties_broken_by_doc_id(self, index):
        index.index_docs([IndexedDoc(sha(9), abstract="same"), IndexedDoc(sha(4), abstract="same")])
        assert [h.doc_id for h in index.search("same")] == [sha(4), sha(9)]

    def test_limit(self, three_docs):
        assert len(three_docs.search("vaccine", limit=1)) == 1
        with pytest.raises(ValidationError):
            three_docs.search("vaccine", limit=0)

    def test_no_match(self, three_docs):
        assert three_docs.search("zebra") == []
        assert three_docs.search("   ") == []

    def test_snippet_truncated(self, index):
        index.index_doc(IndexedDoc(sha(1), title="word " * 100))
        assert index.search("word")[0].title.endswith("...")


class TestAggregation:
    """Exact terms aggregations."""

    def test_matches_brute_force(self, index):
        docs = random_docs(1000)
        index.index_docs(docs)
        for field_name in ("category", "countries", "source"):
            expected = Counter(v for d in docs for v in d.keyword_values(field_name))
            top = sorted(expected.items(), key=lambda kv: (-kv[1], kv[0]))
            result = index.aggregate(field_name, top_k=100)
            assert result.buckets == top
            assert index.aggregate(field_name, top_k=2).buckets == top[:2]

    def test_reindex_replaces(self, index):
        index.index_doc(IndexedDoc(sha(1), title="t", category="vaccine", countries=("Italy",)))
        index.index_doc(IndexedDoc(sha(1), title="t", category="other", countries=("Spain", "Spain")))
        assert index.doc_count == 1
        assert index.aggregate("category").buckets == [("other", 1)]
        assert index.aggregate("countries").buckets == [("Spain", 1)]

    def test_unknown_field(self, index):
        with pytest.raises(ValidationError):
            index.aggregate("title")
        with pytest.raises(ValidationError):
            index.aggregate("category", top_k=0)

    def test_to_dict(self, index):
        index.index_doc(IndexedDoc(sha(1), title="t", category="vaccine"))
        assert index.aggregate("category").to_dict() == {
            "field": "category",
            "buckets": [{"key": "vaccine", "count": 1}],
        }


class TestPersistence:
    """Segment files shared between writers and readers."""

    def test_reader_sees_committed_docs(self, tmp_path):
        writer = SearchIndex(tmp_path / "idx")
        writer.index_docs(random_docs(10))
        reader = SearchIndex(tmp_path / "idx")
        assert reader.doc_count == 10
        writer.index_docs([IndexedDoc(sha(100), title="late")])
        assert reader.refresh() == 1
        assert reader.get(sha(100)).title == "late"

    def test_two_writers_last_version_wins(self, tmp_path):
        a = SearchIndex(tmp_path / "idx", writer_id="a")
        b = SearchIndex(tmp_path / "idx", writer_id="b")
        a.index_docs([IndexedDoc(sha(1), title="x", category="old")])
        b.index_docs([IndexedDoc(sha(1), title="x", category="new"), IndexedDoc(sha(2), title="y")])
        reader = SearchIndex(tmp_path / "idx")
        assert len(reader.segment_files()) == 2
        assert reader.doc_count == 2
        assert reader.labels()[sha(1)] == "new"

    def test_torn_line_ignored(self, tmp_path):
        writer = SearchIndex(tmp_path / "idx", writer_id="w")
        writer.index_docs([IndexedDoc(sha(1), title="x")])
        writer.close()
        with open(writer.segment_files()[0], "ab") as f:
            f.write(b'{"stamp": 99, "writer": "w", "doc": {"doc_id"')
        assert SearchIndex(tmp_path / "idx").doc_count == 1

    def test_reload(self, tmp_path):
        index = SearchIndex(tmp_path / "idx")
        index.index_docs(random_docs(5))
        assert index.reload() == 5


class TestSnapshot:
    """snapshot / restore."""

    def test_round_trip(self, tmp_path):
        source = SearchIndex(tmp_path / "src")
        source.index_docs(random_docs(50))
        manifest = snapshot(source, tmp_path / "snap.lmsn")
        assert manifest["doc_count"] == 50

        restored = restore(tmp_path / "snap.lmsn", tmp_path / "dst")
        assert restored.labels() == source.labels()
        assert restored.search("doc 7", limit=5) == source.search("doc 7", limit=5)
        assert restored.aggregate("countries").buckets == source.aggregate("countries").buckets

    def test_refuses_non_empty_target(self, tmp_path):
        source = SearchIndex(tmp_path / "src")
        source.index_docs(random_docs(3))
        snapshot(source, tmp_path / "snap.lmsn")
        target = SearchIndex(tmp_path / "dst")
        target.index_docs([IndexedDoc(sha(500), title="keep me")])
        with pytest.raises(ValidationError):
            restore(tmp_path / "snap.lmsn", tmp_path / "dst")
        assert SearchIndex(tmp_path / "dst").get(sha(500)) is not None
        forced = restore(tmp_path / "snap.lmsn", tmp_path / "dst", force=True)
        assert forced.doc_count == 3
        assert forced.get(sha(500)) is None

    def test_empty_index(self, tmp_path):
        snapshot(SearchIndex(), tmp_path / "empty.lmsn")
        assert restore(tmp_path / "empty.lmsn", tmp_path / "dst").doc_count == 0

    @pytest.mark.parametrize("damage", ["truncate", "flip", "trailer"])
    def test_corrupt_snapshot(self, tmp_path, damage):
        source = SearchIndex(tmp_path / "src")
        source.index_docs(random_docs(20))
        path = tmp_path / "snap.lmsn"
        snapshot(source, path)
        content = bytearray(path.read_bytes())
        if damage == "truncate":
            content = content[: len(content) // 2]
        elif damage == "flip":
            content[600] ^= 0xFF
        else:
            content = content[:-8]
        path.write_bytes(bytes(content))

        target = SearchIndex(tmp_path / "dst")
        target.index_docs([IndexedDoc(sha(500), title="untouched")])
        with pytest.raises(IntegrityError):
            read_snapshot(path)
        with pytest.raises(IntegrityError):
            restore(path, tmp_path / "dst", force=True)
        assert SearchIndex(tmp_path / "dst").doc_count == 1

    def test_missing_snapshot(self, tmp_path):
        with pytest.raises(ValidationError):
            read_snapshot(tmp_path / "nope.lmsn")


class TestService:
    """aiohttp query service."""

    async def test_search_endpoint(self, three_docs):
        async with TestClient(TestServer(build_index_app(three_docs, refresh_interval_s=0))) as client:
            resp = await client.get("/search", params={"q": "vaccine", "limit": "1"})
            assert resp.status == 200
            body = await resp.json()
            assert [h["doc_id"] for h in body["hits"]] == [sha(1)]

    async def test_agg_endpoint(self, index):
        index.index_docs(random_docs(100))
        async with TestClient(TestServer(build_index_app(index, refresh_interval_s=0))) as client:
            resp = await client.get("/agg", params={"field": "category", "top": "2"})
            body = await resp.json()
            assert body == index.aggregate("category", top_k=2).to_dict()

    async def test_bad_requests(self, index):
        async with TestClient(TestServer(build_index_app(index, refresh_interval_s=0))) as client:
            assert (await client.get("/agg", params={"field": "title"})).status == 400
            assert (await client.get("/search", params={"q": "x", "limit": "many"})).status == 400
            assert (await client.get("/search", params={"q": "x", "limit": "0"})).status == 400

    async def test_stats_and_refresh(self, tmp_path):
        served = SearchIndex(tmp_path / "idx")
        writer = SearchIndex(tmp_path / "idx")
        async with TestClient(TestServer(build_index_app(served, refresh_interval_s=0.05))) as client:
            writer.index_docs(random_docs(7))
            for _ in range(100):
                stats = await (await client.get("/stats")).json()
                if stats["doc_count"] == 7:
                    break
                await asyncio.sleep(0.05)
            assert stats["doc_count"] == 7
