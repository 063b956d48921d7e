"""
litmine: incremental ingestion, classification and search of scholarly articles.

Subpackages:
- store: content-addressed bucket storage (raw, staging, completed, ml_models)
- ingest: metadata parsing, incremental diff and staging of article files
- features: text cleaning and hashed feature vectors
- classifier: maximum-entropy trainer, predictor and model selection
- sched: bag-of-tasks master/worker engine
- index: embedded inverted index with BM25 search and terms aggregations
- pipeline: the processing workflow and the `litmine` CLI
- bench: synthetic corpus generation and the scaling benchmark
"""

__version__ = "1.0.0"
