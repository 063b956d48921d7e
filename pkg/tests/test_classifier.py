"""
Classifier tests: gradient, training, model files, selection, training data.

Usage:
    pytest tests/test_classifier.py -v
"""

import json
from dataclasses import replace

import numpy as np
import pytest

from litmine.bench import synthesize
from litmine.classifier import (
    CURRENT_POINTER,
    LabeledExample,
    ModelArtifact,
    TrainConfig,
    deserialize_model,
    design_matrix,
    encode_training_data,
    evaluate,
    load_current_model,
    load_model,
    model_key,
    objective_and_gradient,
    parse_training_data,
    predict,
    predict_text,
    resolve_training_data,
    save_model,
    select_model,
    serialize_model,
    split_examples,
    train,
)
from litmine.errors import (
    CompatibilityError,
    ModelFormatError,
    NoModelError,
    UnsupportedVersionError,
    ValidationError,
)
from litmine.features import FEATURE_DIMS
from litmine.ingest import ArticleDoc
from litmine.store import BucketId


def toy_model(labels=("a", "b", "c"), accuracy=0.5) -> ModelArtifact:
    model = train(
        [LabeledExample(f"{label} {label}{i}", label) for label in labels for i in range(5)],
        TrainConfig(epochs=5),
    )
    return replace(model, eval_accuracy=accuracy)


class TestObjective:
    """Analytic gradient of the regularized cross-entropy."""

    def test_gradient_matches_finite_differences(self):
        texts = ["spike protein", "viral genome rna", "icu patients", "masks policy school", "rna spike"]
        y = np.array([0, 0, 1, 2, 0])
        X = design_matrix(texts)
        active = np.unique(X.indices)
        Xa = X[:, active].tocsr()
        rng = np.random.default_rng(0)
        W = rng.normal(scale=0.5, size=(3, len(active)))
        b = rng.normal(scale=0.5, size=3)
        l2 = 0.01

        _, gW, gb = objective_and_gradient(W, b, Xa, y, l2)
        eps = 1e-6
        for _ in range(10):
            i, j = int(rng.integers(3)), int(rng.integers(len(active)))
            Wp, Wm = W.copy(), W.copy()
            Wp[i, j] += eps
            Wm[i, j] -= eps
            numeric = (objective_and_gradient(Wp, b, Xa, y, l2)[0] - objective_and_gradient(Wm, b, Xa, y, l2)[0]) / (2 * eps)
            assert abs(numeric - gW[i, j]) <= 1e-4
        for i in range(3):
            bp, bm = b.copy(), b.copy()
            bp[i] += eps
            bm[i] -= eps
            numeric = (objective_and_gradient(W, bp, Xa, y, l2)[0] - objective_and_gradient(W, bm, Xa, y, l2)[0]) / (2 * eps)
            assert abs(numeric - gb[i]) <= 1e-4

    def test_zero_weights_loss_is_log_c(self):
        X = design_matrix(["a b", "c d"])
        loss, _, _ = objective_and_gradient(np.zeros((4, FEATURE_DIMS)), np.zeros(4), X, np.array([0, 1]), 1e-4)
        assert loss == pytest.approx(np.log(4))


class TestTraining:
    """train / predict / evaluate."""

    def test_separable_toy_corpus(self, toy_examples):
        model = train(toy_examples)
        accuracy, macro_f1 = evaluate(model, toy_examples)
        assert accuracy >= 0.99
        assert macro_f1 >= 0.99
        assert model.eval_accuracy >= 0.99
        assert model.labels == ("alpha", "beta", "delta", "gamma")

    def test_deterministic(self, toy_examples):
        a, b = train(toy_examples), train(toy_examples)
        assert a.eval_accuracy == b.eval_accuracy
        assert (a.weights != b.weights).nnz == 0
        assert np.array_equal(a.bias, b.bias)

    def test_scores_form_distribution(self, toy_examples):
        model = train(toy_examples)
        prediction = predict_text(model, "bus boat")
        assert prediction.label == "beta"
        assert sum(prediction.scores) == pytest.approx(1.0)
        assert prediction.labels == model.labels

    def test_empty_document_gets_prior(self, toy_examples):
        model = ModelArtifact.zeros(["x", "y", "z"])
        prediction = predict_text(model, "")
        assert prediction.scores == pytest.approx((1 / 3, 1 / 3, 1 / 3))

    def test_predict_article(self, demo_model):
        article = synthesize(5, 0)
        data = json.loads(article.file_bytes)
        doc = ArticleDoc(sha=article.sha, title=data["metadata"]["title"], body_text=data["body_text"][0]["text"])
        assert predict(demo_model, doc).label in demo_model.labels

    def test_incompatible_feature_space(self, toy_examples):
        model = train(toy_examples)
        with pytest.raises(CompatibilityError):
            model.check_compatible(dims=2 ** 20)
        with pytest.raises(CompatibilityError):
            model.check_compatible(seed=1)

    def test_needs_two_labels(self):
        with pytest.raises(ValidationError):
            train([LabeledExample("a", "only"), LabeledExample("b", "only")])
        with pytest.raises(ValidationError):
            train([])

    @pytest.mark.parametrize("kwargs", [{"l2": 0}, {"epochs": 0}, {"seed": -1}])
    def test_bad_config(self, kwargs):
        with pytest.raises(ValidationError):
            TrainConfig(**kwargs)

    def test_split_is_stratified(self, toy_examples):
        train_set, eval_set = split_examples(toy_examples, seed=42)
        assert len(train_set) + len(eval_set) == len(toy_examples)
        assert {ex.label for ex in eval_set} == {"alpha", "beta", "gamma", "delta"}
        assert len(eval_set) == 20

    def test_singleton_label_stays_in_training(self):
        examples = [LabeledExample("x", "rare")] + [LabeledExample(f"y{i}", "common") for i in range(10)]
        _, eval_set = split_examples(examples, seed=1)
        assert all(ex.label == "common" for ex in eval_set)


class TestModelFile:
    """Binary model format."""

    def test_round_trip_predictions(self, demo_model, store):
        ref = save_model(store, demo_model)
        loaded = load_model(store, ref)
        assert loaded.labels == demo_model.labels
        assert loaded.eval_accuracy == demo_model.eval_accuracy
        assert loaded.train_set_sha == demo_model.train_set_sha
        assert loaded.trained_at == demo_model.trained_at
        for i in range(100):
            text = synthesize(13, i).file_bytes.decode("utf-8")
            a, b = predict_text(demo_model, text), predict_text(loaded, text)
            assert a.label == b.label
            assert a.scores == pytest.approx(b.scores, abs=1e-12)

    def test_content_addressed_key(self, demo_model, store):
        ref = save_model(store, demo_model)
        assert ref.key == model_key(demo_model)
        assert save_model(store, demo_model) == ref

    def test_truncated_file(self, demo_model):
        content = serialize_model(demo_model)
        for cut in (3, 20, len(content) // 2, len(content) - 1):
            with pytest.raises(ModelFormatError):
                deserialize_model(content[:cut])

    def test_bit_flip_detected(self, demo_model):
        content = bytearray(serialize_model(demo_model))
        content[len(content) // 2] ^= 0x01
        with pytest.raises(ModelFormatError, match="checksum"):
            deserialize_model(bytes(content))

    def test_unsupported_version(self, demo_model):
        content = serialize_model(demo_model)
        with pytest.raises(UnsupportedVersionError) as exc_info:
            deserialize_model(content[:4] + bytes([2]) + content[5:])
        assert exc_info.value.offset == 4

    def test_bad_magic(self, demo_model):
        content = serialize_model(demo_model)
        with pytest.raises(ModelFormatError):
            deserialize_model(b"XXXX" + content[4:])


class TestSelectModel:
    """Keep-the-better-model workflow."""

    def test_first_model_becomes_current(self, store):
        candidate = toy_model(accuracy=0.7)
        assert select_model(candidate, None, store) is candidate
        ref, current = load_current_model(store)
        assert current.eval_accuracy == 0.7

    def test_better_candidate_replaces_incumbent(self, store):
        incumbent = toy_model(accuracy=0.7)
        select_model(incumbent, None, store)
        candidate = toy_model(accuracy=0.8)
        assert select_model(candidate, incumbent, store) is candidate
        assert store.read_pointer(BucketId.ML_MODELS, CURRENT_POINTER) == model_key(candidate)

    def test_worse_candidate_keeps_incumbent(self, store):
        incumbent = toy_model(accuracy=0.8)
        select_model(incumbent, None, store)
        before = store.read_pointer(BucketId.ML_MODELS, CURRENT_POINTER)
        assert select_model(toy_model(accuracy=0.6), incumbent, store) is incumbent
        assert store.read_pointer(BucketId.ML_MODELS, CURRENT_POINTER) == before

    def test_tie_keeps_incumbent(self, store):
        incumbent = toy_model(accuracy=0.75)
        select_model(incumbent, None, store)
        assert select_model(toy_model(accuracy=0.75), incumbent, store) is incumbent

    def test_label_mismatch(self, store):
        with pytest.raises(ValidationError):
            select_model(toy_model(labels=("a", "b")), toy_model(labels=("a", "c")), store)

    def test_no_current_model(self, store):
        with pytest.raises(NoModelError):
            load_current_model(store)


class TestTrainingData:
    """JSON-lines training data."""

    def test_parse(self):
        content = b'{"text": "spike", "label": "vaccine"}\n\n{"text": "", "label": " icu "}\n'
        examples = parse_training_data(content)
        assert examples == [LabeledExample("spike", "vaccine"), LabeledExample("", "icu")]

    def test_encode_parse(self, toy_examples):
        assert parse_training_data(encode_training_data(toy_examples)) == list(toy_examples)

    @pytest.mark.parametrize("line", [b"not json", b"[1, 2]", b'{"text": "x"}', b'{"label": "x"}', b'{"text": 1, "label": "x"}'])
    def test_bad_lines(self, line):
        with pytest.raises(ValidationError, match="line 1"):
            parse_training_data(line + b"\n")

    def test_resolve_file_and_key(self, store, tmp_path, toy_examples):
        path = tmp_path / "train.jsonl"
        path.write_bytes(encode_training_data(toy_examples))
        ref = resolve_training_data(store, path)
        assert ref.bucket == BucketId.ML_MODELS
        assert resolve_training_data(store, ref.key) == ref
        assert resolve_training_data(store, str(ref)) == ref

    def test_resolve_missing(self, store):
        with pytest.raises(ValidationError):
            resolve_training_data(store, "f" * 40 + ".jsonl")
