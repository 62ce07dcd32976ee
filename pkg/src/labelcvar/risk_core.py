"""Datasets, per-example losses and class-conditional / class-weighted risks."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from .errors import DataError

if TYPE_CHECKING:
    from .training import LinearModel

PROB_SUM_TOL = 1e-12
WEIGHT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with integer labels in ``{0, ..., k-1}``.

    ``label_values`` optionally records the original label of each class id
    (e.g. Covertype's 1..7) so reports can be mapped back.
    """

    features: np.ndarray
    labels: np.ndarray
    k: int
    label_values: Optional[tuple] = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.labels)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"features must be a non-empty n x d matrix, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DataError("labels must be a vector with one entry per row of features")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise DataError("labels must be integers")
        y = y.astype(np.int64)
        if self.k < 1:
            raise DataError("k must be positive")
        if y.min() < 0 or y.max() >= self.k:
            raise DataError(f"labels must lie in {{0, ..., {self.k - 1}}}")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain NaN or Inf")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def empirical_probs(self) -> "ClassProbabilities":
        return ClassProbabilities(self.class_counts / self.n)


@dataclass(frozen=True)
class ClassProbabilities:
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).ravel()
        if p.size < 1 or np.any(~np.isfinite(p)):
            raise DataError("class probabilities must be a finite non-empty vector")
        if np.any(p <= 0) or np.any(p > 1):
            raise DataError("class probabilities must lie in (0, 1]; degenerate classes are rejected")
        if abs(p.sum() - 1.0) > PROB_SUM_TOL * max(1, p.size):
            raise DataError(f"class probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "p", p)

    @property
    def k(self) -> int:
        return self.p.size


@dataclass(frozen=True)
class WeightVector:
    """Nonnegative class weights normalized so that ``sum(q * p) == 1``."""

    q: np.ndarray
    ref_probs: ClassProbabilities = field(repr=False)

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).ravel()
        if q.size != self.ref_probs.k:
            raise DataError(f"weight vector has {q.size} entries for {self.ref_probs.k} classes")
        if np.any(~np.isfinite(q)) or np.any(q < 0):
            raise DataError("weights must be finite and nonnegative")
        mass = float(q @ self.ref_probs.p)
        if abs(mass - 1.0) > WEIGHT_NORM_TOL:
            raise DataError(f"weights are not normalized: sum(q * p) = {mass!r}")
        object.__setattr__(self, "q", q)

    @classmethod
    def uniform(cls, probs: ClassProbabilities) -> "WeightVector":
        return cls(np.ones(probs.k), probs)


class LossKind(enum.Enum):
    ZERO_ONE = "zero_one"
    CROSS_ENTROPY = "cross_entropy"
    MULTICLASS_MARGIN = "multiclass_margin"


@dataclass
class RiskReport:
    """Per-class risks plus the aggregate numbers reported for a model."""

    per_class: np.ndarray
    objective_value: float
    worst_class: float
    lambda_opt: Optional[float] = None
    q_star: Optional[WeightVector] = None
    probs_source: str = "empirical"
    robust: dict = field(default_factory=dict)

    def __post_init__(self):
        self.per_class = np.asarray(self.per_class, dtype=float)
        if self.worst_class != float(np.max(self.per_class)):
            raise ValueError("worst_class must equal the largest per-class risk")


def log_softmax(scores: np.ndarray) -> np.ndarray:
    m = scores.max(axis=1, keepdims=True)
    shifted = scores - m
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def margin_phi(a: np.ndarray) -> np.ndarray:
    """Ramp function: 1 for a <= 0, 1 - a on (0, 1], 0 above (margin fixed at 1)."""
    a = np.asarray(a, dtype=float)
    return np.where(a <= 0, 1.0, np.where(a <= 1, 1.0 - a, 0.0))


def pointwise_loss(scores: np.ndarray, labels: np.ndarray, loss: LossKind) -> np.ndarray:
    """Loss of each row of ``scores`` (n x k) against integer ``labels``."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    rows = np.arange(scores.shape[0])
    if loss is LossKind.ZERO_ONE:
        # np.argmax returns the lowest index on ties
        return (np.argmax(scores, axis=1) != labels).astype(float)
    if loss is LossKind.CROSS_ENTROPY:
        return -log_softmax(scores)[rows, labels]
    if loss is LossKind.MULTICLASS_MARGIN:
        own = scores[rows, labels]
        others = scores.copy()
        others[rows, labels] = -np.inf
        return margin_phi(own - others.max(axis=1))
    raise ValueError(f"unknown loss {loss!r}")


def per_class_means(values: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Average ``values`` within each class; raises on classes with no members."""
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0):
        empty = np.flatnonzero(counts == 0).tolist()
        raise DataError(f"empty class: no examples for class id(s) {empty}")
    sums = np.bincount(labels, weights=values, minlength=k)
    return sums / counts


def class_conditional_risks(model: "LinearModel", data: LabeledDataset, loss: LossKind) -> np.ndarray:
    """Empirical risk of ``model`` restricted to each class, as a length-k vector."""
    if model.k != data.k or model.d != data.d:
        raise DataError(
            f"model shape (k={model.k}, d={model.d}) does not match data (k={data.k}, d={data.d})"
        )
    values = pointwise_loss(model.scores(data.features), data.labels, loss)
    return per_class_means(values, data.labels, data.k)


def weighted_risk(per_class, probs: ClassProbabilities, q: WeightVector) -> float:
    """``sum_i q_i p_i R_i``."""
    r = np.asarray(per_class, dtype=float).ravel()
    if r.size != probs.k or q.q.size != probs.k:
        raise DataError(f"dimension mismatch: {r.size} risks, {probs.k} probabilities, {q.q.size} weights")
    if not np.allclose(q.ref_probs.p, probs.p, rtol=0, atol=1e-12):
        raise DataError("weight vector was normalized against different class probabilities")
    return float(np.sum(q.q * probs.p * r))


def balanced_weights(probs: ClassProbabilities) -> WeightVector:
    """Weights ``q_i = 1 / (k p_i)``, which give every class equal influence."""
    if np.any(probs.p <= 0):
        raise DataError("balanced weights need every class probability to be positive")
    return WeightVector(1.0 / (probs.k * probs.p), probs)
