"""
Pytest configuration and fixtures for litmine tests.

Provides:
- --run-slow option for the latency and benchmark tests
- store / index / pipeline_config fixtures rooted in tmp_path
- toy_examples: a linearly separable 4-class corpus
- demo_model: classifier trained once per session on the synthetic topics
- cluster: factory for in-process master + thread workers on an ephemeral port

Usage in tests:
    def test_job(cluster, pipeline_config):
        local = cluster(workers=2)
        orchestrator = Orchestrator(pipeline_config.override({"master_addr": local.address}))
"""

import json
from pathlib import Path
from typing import Callable, List

import pytest

from litmine.bench import demo_training_data, synthesize
from litmine.classifier import CURRENT_POINTER, LabeledExample, ModelArtifact, TrainConfig, save_model, train
from litmine.index import SearchIndex
from litmine.pipeline import LocalCluster, PipelineConfig
from litmine.store import BucketId, BucketStore


# =============================================================================
# Command-line options
# =============================================================================

def pytest_addoption(parser):
    """Add custom command-line options."""
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Run slow tests (marked with @pytest.mark.slow)",
    )


def pytest_collection_modifyitems(config, items):
    """Skip slow tests unless --run-slow."""
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="Need --run-slow to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# =============================================================================
# Storage fixtures
# =============================================================================

@pytest.fixture
def store(tmp_path) -> BucketStore:
    """Fresh bucket store."""
    return BucketStore(tmp_path / "store")


@pytest.fixture
def index() -> SearchIndex:
    """Empty in-memory index."""
    return SearchIndex()


@pytest.fixture
def pipeline_config(tmp_path) -> PipelineConfig:
    """Configuration with fast heartbeats rooted in tmp_path."""
    return PipelineConfig(
        store_root=str(tmp_path / "store"),
        index_root=str(tmp_path / "index"),
        heartbeat_interval_s=0.2,
        missed_heartbeats=3,
        task_timeout_s=60.0,
        converged=False,
        log_level="WARNING",
    ).validate()


# =============================================================================
# Classifier fixtures
# =============================================================================

TOY_VOCAB = {
    "alpha": ["apple", "avocado", "apricot", "almond"],
    "beta": ["bus", "bicycle", "boat", "biplane"],
    "gamma": ["guitar", "gong", "glockenspiel", "gamelan"],
    "delta": ["desert", "delta", "dune", "dale"],
}


@pytest.fixture(scope="session")
def toy_examples() -> List[LabeledExample]:
    """Linearly separable 4-class corpus: every label owns its own words."""
    examples = []
    for label, words in sorted(TOY_VOCAB.items()):
        for i in range(25):
            picked = [words[(i + j) % len(words)] for j in range(3 + i % 4)]
            examples.append(LabeledExample(text=" ".join(picked), label=label))
    return examples


@pytest.fixture(scope="session")
def demo_model() -> ModelArtifact:
    """Model trained on synthetic topic articles."""
    return train(demo_training_data(per_label=40, seed=3), TrainConfig(epochs=30, seed=42))


def install_model(store: BucketStore, model: ModelArtifact) -> str:
    """Save a model and point ``current`` at it."""
    ref = save_model(store, model)
    store.write_pointer(BucketId.ML_MODELS, CURRENT_POINTER, ref.key)
    return ref.key


@pytest.fixture
def installed_model(pipeline_config, demo_model) -> str:
    """demo_model installed as current in the pipeline_config store."""
    return install_model(BucketStore(pipeline_config.store_root), demo_model)


# =============================================================================
# Article fixtures
# =============================================================================

@pytest.fixture
def article_file() -> Callable[[int], bytes]:
    """Factory: bytes of synthetic article file ``i``."""
    def _article(i: int, seed: int = 11) -> bytes:
        return synthesize(seed, i).file_bytes

    return _article


def write_dataset(root: Path, files: List[bytes], with_sha: bool = True) -> Path:
    """Write article files plus a metadata CSV; returns the CSV path."""
    import hashlib

    articles = root / "articles"
    articles.mkdir(parents=True, exist_ok=True)
    lines = ["record_id,sha,title,abstract,publish_time,authors,source"]
    for i, content in enumerate(files):
        sha = hashlib.sha1(content).hexdigest()
        (articles / f"{sha}.json").write_bytes(content)
        title = json.loads(content)["metadata"]["title"].replace(",", " ")
        lines.append(f"rec{i},{sha if with_sha else ''},{title},,2020-0{1 + i % 9}-01,,synthetic")
    metadata = root / "metadata.csv"
    metadata.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return metadata


# =============================================================================
# Cluster fixtures
# =============================================================================

@pytest.fixture
def cluster(pipeline_config):
    """
    Factory fixture for local clusters; all are stopped at teardown.

    Usage:
        def test_job(cluster):
            local = cluster(workers=3)
    """
    started: List[LocalCluster] = []

    def factory(workers: int = 1, config: PipelineConfig = None) -> LocalCluster:
        local = LocalCluster(config or pipeline_config, workers=workers, mode="thread").start()
        started.append(local)
        return local

    yield factory

    for local in started:
        local.stop()
