"""
Maximum-entropy (multinomial logistic regression) classifier.

Objective minimized over the training split:

    J(W, b) = (1/n) * sum_i [ logsumexp(z_i) - z_i[y_i] ] + (l2 / 2) * ||W||^2
    z_i     = W x_i + b

The bias is not regularized. Optimization uses L-BFGS restricted to the
feature columns that occur in the training split; every other column has
zero gradient and stays exactly zero at the optimum, so the stored weight
matrix is sparse.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, sparse
from scipy.special import logsumexp, softmax

from litmine.errors import CompatibilityError, ValidationError
from litmine.features import FEATURE_DIMS, HASH_SEED, FeatureVector, featurize, featurize_text

logger = logging.getLogger(__name__)

EVAL_FRACTION = 0.2


@dataclass(frozen=True)
class LabeledExample:
    """A training text and its category."""
    text: str
    label: str

    def to_dict(self) -> Dict[str, str]:
        return {"text": self.text, "label": self.label}


@dataclass(frozen=True)
class TrainConfig:
    """Trainer hyperparameters."""
    l2: float = 1e-4
    epochs: int = 30
    seed: int = 42

    def __post_init__(self):
        if not self.l2 > 0:
            raise ValidationError(f"l2 must be > 0, got {self.l2}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.seed < 0:
            raise ValidationError(f"seed must be a non-negative integer, got {self.seed}")

    def to_dict(self) -> Dict[str, float]:
        return {"l2": self.l2, "epochs": self.epochs, "seed": self.seed}


@dataclass(frozen=True)
class Prediction:
    """Predicted label with softmax probabilities aligned to the model's labels."""
    label: str
    scores: Tuple[float, ...]
    labels: Tuple[str, ...]

    def to_dict(self) -> Dict[str, object]:
        return {"label": self.label, "scores": dict(zip(self.labels, self.scores))}


@dataclass(frozen=True, eq=False)
class ModelArtifact:
    """
    Trained multiclass linear model.

    ``weights`` is a C x feature_dims CSR matrix; ``bias`` has C entries.
    ``eval_accuracy`` is measured on the held-out split only.
    """
    labels: Tuple[str, ...]
    weights: sparse.csr_matrix
    bias: np.ndarray
    feature_dims: int = FEATURE_DIMS
    hash_seed: int = HASH_SEED
    eval_accuracy: float = 0.0
    macro_f1: float = 0.0
    trained_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    train_set_sha: str = "0" * 40
    _csc: Optional[sparse.csc_matrix] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValidationError("A model needs at least two labels")
        if len(set(labels)) != len(labels):
            raise ValidationError(f"Model labels must be unique: {labels}")
        if self.weights.shape != (len(labels), self.feature_dims):
            raise ValidationError(
                f"Weight matrix shape {self.weights.shape} does not match "
                f"{len(labels)} labels x {self.feature_dims} dims"
            )
        if self.bias.shape != (len(labels),):
            raise ValidationError(f"Bias shape {self.bias.shape} does not match {len(labels)} labels")
        if not (np.all(np.isfinite(self.weights.data)) and np.all(np.isfinite(self.bias))):
            raise ValidationError("Model weights must be finite")
        object.__setattr__(self, "_csc", self.weights.tocsc())

    @property
    def num_classes(self) -> int:
        return len(self.labels)

    @classmethod
    def zeros(cls, labels: Sequence[str], **kwargs) -> "ModelArtifact":
        """Untrained model: every score is 1/C."""
        c = len(labels)
        return cls(
            labels=tuple(labels),
            weights=sparse.csr_matrix((c, FEATURE_DIMS), dtype=np.float64),
            bias=np.zeros(c, dtype=np.float64),
            **kwargs,
        )

    def decision_function(self, vector: FeatureVector) -> np.ndarray:
        """Linear scores W x + b."""
        self.check_compatible(vector.dims)
        if vector.is_empty:
            return self.bias.copy()
        columns = self._csc[:, vector.indices]
        return np.asarray(columns @ vector.values).ravel() + self.bias

    def check_compatible(self, dims: int = FEATURE_DIMS, seed: int = HASH_SEED) -> None:
        if self.feature_dims != dims or self.hash_seed != seed:
            raise CompatibilityError(
                f"Model expects {self.feature_dims} dims / seed {self.hash_seed:#x}, "
                f"featurizer produces {dims} dims / seed {seed:#x}"
            )

    def summary(self) -> Dict[str, object]:
        return {
            "labels": list(self.labels),
            "eval_accuracy": self.eval_accuracy,
            "macro_f1": self.macro_f1,
            "trained_at": self.trained_at.isoformat(),
            "train_set_sha": self.train_set_sha,
            "nonzero_weights": int(self.weights.nnz),
        }


def predict_vector(model: ModelArtifact, vector: FeatureVector) -> Prediction:
    scores = softmax(model.decision_function(vector))
    best = int(np.argmax(scores))
    return Prediction(label=model.labels[best], scores=tuple(float(s) for s in scores), labels=model.labels)


def predict(model: ModelArtifact, doc) -> Prediction:
    """
    Classify an ArticleDoc.

    Raises:
        CompatibilityError: Model built for a different feature space
    """
    model.check_compatible()
    return predict_vector(model, featurize(doc))


def predict_text(model: ModelArtifact, text: str) -> Prediction:
    model.check_compatible()
    return predict_vector(model, featurize_text(text))


def design_matrix(texts: Sequence[str]) -> sparse.csr_matrix:
    """Stack featurized texts into an n x FEATURE_DIMS CSR matrix."""
    indptr = [0]
    indices: List[np.ndarray] = []
    values: List[np.ndarray] = []
    for text in texts:
        vector = featurize_text(text)
        indices.append(vector.indices)
        values.append(vector.values)
        indptr.append(indptr[-1] + len(vector))
    return sparse.csr_matrix(
        (
            np.concatenate(values) if values else np.zeros(0),
            np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64),
            np.asarray(indptr),
        ),
        shape=(len(texts), FEATURE_DIMS),
    )


def objective_and_gradient(
    W: np.ndarray,
    b: np.ndarray,
    X: sparse.spmatrix,
    y: np.ndarray,
    l2: float,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Regularized mean cross-entropy and its analytic gradient.

    Args:
        W: C x d dense weights
        b: C biases
        X: n x d feature matrix
        y: n integer class indices
        l2: L2 strength on W

    Returns:
        (objective, dJ/dW, dJ/db)
    """
    n = X.shape[0]
    Z = np.asarray(X @ W.T) + b
    lse = logsumexp(Z, axis=1)
    loss = float(np.sum(lse - Z[np.arange(n), y]) / n + 0.5 * l2 * np.sum(W * W))

    P = np.exp(Z - lse[:, None])
    P[np.arange(n), y] -= 1.0
    grad_W = np.asarray(X.T @ P).T / n + l2 * W
    grad_b = P.sum(axis=0) / n
    return loss, grad_W, grad_b


def split_examples(
    examples: Sequence[LabeledExample], seed: int
) -> Tuple[List[LabeledExample], List[LabeledExample]]:
    """
    Stratified 80/20 train/eval split determined by seed.

    Labels with a single example stay entirely in the training split; every
    other label contributes round(20%) of its examples, at least one.
    """
    rng = np.random.default_rng(seed)
    by_label: Dict[str, List[int]] = {}
    for i, ex in enumerate(examples):
        by_label.setdefault(ex.label, []).append(i)

    train_idx: List[int] = []
    eval_idx: List[int] = []
    for label in sorted(by_label):
        idx = np.asarray(by_label[label])
        order = idx[rng.permutation(len(idx))]
        n_eval = 0
        if len(idx) >= 2:
            n_eval = min(len(idx) - 1, max(1, int(round(EVAL_FRACTION * len(idx)))))
        eval_idx.extend(order[:n_eval].tolist())
        train_idx.extend(order[n_eval:].tolist())

    return [examples[i] for i in sorted(train_idx)], [examples[i] for i in sorted(eval_idx)]


def training_set_sha(examples: Sequence[LabeledExample]) -> str:
    """SHA1 of the JSON-lines encoding of the examples."""
    h = hashlib.sha1()
    for ex in examples:
        h.update(json.dumps(ex.to_dict(), sort_keys=True, ensure_ascii=False).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def evaluate(model: ModelArtifact, examples: Sequence[LabeledExample]) -> Tuple[float, float]:
    """
    Top-1 accuracy and macro-F1 over examples.

    Macro-F1 averages over labels that occur as truth or prediction.
    """
    if not examples:
        return 0.0, 0.0
    truth = [ex.label for ex in examples]
    predicted = [predict_text(model, ex.text).label for ex in examples]
    accuracy = sum(t == p for t, p in zip(truth, predicted)) / len(examples)

    f1_scores = []
    for label in sorted(set(truth) | set(predicted)):
        tp = sum(t == label and p == label for t, p in zip(truth, predicted))
        fp = sum(t != label and p == label for t, p in zip(truth, predicted))
        fn = sum(t == label and p != label for t, p in zip(truth, predicted))
        denom = 2 * tp + fp + fn
        f1_scores.append(2 * tp / denom if denom else 0.0)
    return float(accuracy), float(np.mean(f1_scores))


def train(examples: Sequence[LabeledExample], config: Optional[TrainConfig] = None) -> ModelArtifact:
    """
    Train a maximum-entropy model.

    Args:
        examples: Labeled texts (>= 2 distinct labels)
        config: Hyperparameters (defaults: l2=1e-4, epochs=30, seed=42)

    Returns:
        ModelArtifact with eval metrics from the held-out split

    Raises:
        ValidationError: Empty input or fewer than two labels
    """
    config = config or TrainConfig()
    if not examples:
        raise ValidationError("Cannot train on an empty example set")
    labels = tuple(sorted({ex.label for ex in examples}))
    if len(labels) < 2:
        raise ValidationError(f"Training needs at least two distinct labels, got {list(labels)}")

    train_set, eval_set = split_examples(examples, config.seed)
    label_index = {label: i for i, label in enumerate(labels)}
    X = design_matrix([ex.text for ex in train_set])
    y = np.array([label_index[ex.label] for ex in train_set], dtype=np.int64)

    active = np.unique(X.indices)
    Xa = X[:, active].tocsr()
    c, k = len(labels), len(active)

    def fun(theta: np.ndarray) -> Tuple[float, np.ndarray]:
        W = theta[: c * k].reshape(c, k)
        b = theta[c * k:]
        loss, gW, gb = objective_and_gradient(W, b, Xa, y, config.l2)
        return loss, np.concatenate([gW.ravel(), gb])

    theta0 = np.zeros(c * k + c)
    initial_loss, _ = fun(theta0)
    result = optimize.minimize(
        fun, theta0, jac=True, method="L-BFGS-B",
        options={"maxiter": config.epochs, "gtol": 1e-9, "ftol": 1e-12},
    )
    logger.info(
        "Trained %d-class model on %d examples (%d features): loss %.6f -> %.6f in %d iterations",
        c, len(train_set), k, initial_loss, result.fun, result.nit,
    )

    W_active = result.x[: c * k].reshape(c, k)
    rows = np.repeat(np.arange(c), k)
    cols = np.tile(active, c)
    weights = sparse.csr_matrix((W_active.ravel(), (rows, cols)), shape=(c, FEATURE_DIMS))
    weights.eliminate_zeros()
    weights.sort_indices()

    model = ModelArtifact(
        labels=labels,
        weights=weights,
        bias=np.asarray(result.x[c * k:], dtype=np.float64),
        train_set_sha=training_set_sha(examples),
    )

    if not eval_set:
        logger.warning("Held-out split is empty; eval_accuracy recorded as 0.0")
    accuracy, macro_f1 = evaluate(model, eval_set)
    model = replace(model, eval_accuracy=accuracy, macro_f1=macro_f1)
    logger.info("Held-out accuracy %.4f, macro-F1 %.4f on %d examples", accuracy, macro_f1, len(eval_set))
    return model
