"""Plug-in classification on a one-dimensional synthetic world with known ground truth.

X is uniform on [0, 1] and ``P(Y = 1 | X = x) = x ** (p / (1 - p))`` where
``p = P(Y = 0)``. Everything here is exact up to quadrature error, which
makes it a convenient oracle for weighted-risk trade-offs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .errors import DataError, NumericalError
from .risk_core import ClassProbabilities, LabeledDataset, WeightVector

QUAD_TOL = 1e-8
_GENERIC_GRID = 1 << 14


@dataclass(frozen=True)
class SyntheticWorld:
    p: float

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p!r}")

    @property
    def exponent(self) -> float:
        return self.p / (1.0 - self.p)

    @property
    def probs(self) -> ClassProbabilities:
        return ClassProbabilities(np.array([self.p, 1.0 - self.p]))

    def eta(self, x):
        return np.asarray(x, dtype=float) ** self.exponent

    def eta_inverse(self, t: float) -> float:
        """Point where the (increasing) regression function equals ``t``."""
        t = min(max(t, 0.0), 1.0)
        return t ** (1.0 / self.exponent)

    def regression(self) -> "TrueRegression":
        return TrueRegression(self)


class TrueRegression:
    """The world's exact regression function, usable wherever an estimate is expected."""

    def __init__(self, world: SyntheticWorld):
        self.world = world

    def __call__(self, x):
        return self.world.eta(x)

    def crossings(self, t: float) -> List[float]:
        if 0.0 < t < 1.0:
            return [self.world.eta_inverse(t)]
        return []


class BoxKernelRegressor:
    """Nadaraya-Watson estimate with a box kernel of half-width ``bandwidth``.

    Returns 1/2 where no training point lies within the window.
    """

    def __init__(self, x, y, bandwidth: float):
        order = np.argsort(x, kind="stable")
        self.x = np.asarray(x, dtype=float)[order]
        self.bandwidth = float(bandwidth)
        self._cum = np.concatenate([[0.0], np.cumsum(np.asarray(y, dtype=float)[order])])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lo = np.searchsorted(self.x, x - self.bandwidth, side="left")
        hi = np.searchsorted(self.x, x + self.bandwidth, side="right")
        count = hi - lo
        total = self._cum[hi] - self._cum[lo]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(count > 0, total / np.maximum(count, 1), 0.5)

    def crossings(self, t: float) -> np.ndarray:
        # piecewise constant: it can only change value at x_j +/- h
        pts = np.concatenate([self.x - self.bandwidth, self.x + self.bandwidth])
        return np.unique(pts[(pts > 0.0) & (pts < 1.0)])


@dataclass(frozen=True)
class ThresholdClassifier:
    """Predicts ``1{eta_hat(x) > threshold}``."""

    eta_hat: Callable
    threshold: float

    def predict(self, x) -> np.ndarray:
        return (np.asarray(self.eta_hat(x)) > self.threshold).astype(int)


class ErrorDecomposition(NamedTuple):
    excess: float
    estimation: float
    irreducible: float
    ie_bound: float


def synth_sample(world: SyntheticWorld, n: int, seed) -> LabeledDataset:
    """Draw ``n`` points: X uniform on [0, 1], Y = 1 with probability eta(X)."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    x = rng.random(n)
    y = (rng.random(n) < world.eta(x)).astype(np.int64)
    return LabeledDataset(x[:, None], y, 2)


def bayes_quantities(world: SyntheticWorld) -> Tuple[float, float, float]:
    """Bayes rule threshold on x and its class-0 / class-1 conditional risks.

    With ``h = (1/2) ** (1/p)`` the rule is ``1{x > 2h}`` and
    ``R_1 = h``, ``R_0 = 1 - (1 + p) h / p``.
    """
    p = world.p
    h = 0.5 ** (1.0 / p)
    threshold = 0.5 ** ((1.0 - p) / p)
    return threshold, 1.0 - (1.0 + p) * h / p, h


def weighted_threshold(q0: float, q1: float) -> float:
    """Decision threshold ``q0 / (q0 + q1)`` of the q-weighted Bayes rule."""
    if q0 < 0 or q1 < 0:
        raise ValueError("weights must be nonnegative")
    if q0 == 0 and q1 == 0:
        raise ValueError("weights must not both be zero")
    return q0 / (q0 + q1)


def weights_for_threshold(world: SyntheticWorld, t: float) -> Tuple[float, float]:
    """The unique normalized weighting of ``world`` whose threshold is ``t``."""
    if not 0 <= t <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    scale = 1.0 / (t * world.p + (1.0 - t) * (1.0 - world.p))
    return t * scale, (1.0 - t) * scale


def fit_eta_hat(data: LabeledDataset, bandwidth: Optional[float] = None) -> BoxKernelRegressor:
    """Box-kernel regression estimate of ``P(Y = 1 | X = x)`` from 1-D binary data.

    ``bandwidth`` defaults to ``n ** (-1/3)``.
    """
    if data.d != 1 or data.k != 2:
        raise DataError("plug-in estimation needs one feature and two classes")
    if bandwidth is None:
        bandwidth = data.n ** (-1.0 / 3.0)
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    return BoxKernelRegressor(data.features[:, 0], data.labels, bandwidth)


def _decision_regions(clf: ThresholdClassifier) -> List[Tuple[float, float, int]]:
    """Split [0, 1] into maximal intervals of constant prediction."""
    finder = getattr(clf.eta_hat, "crossings", None)
    if finder is not None:
        cuts = np.asarray(finder(clf.threshold), dtype=float)
    else:
        cuts = _generic_crossings(clf)
    edges = np.unique(np.concatenate([[0.0], cuts[(cuts > 0) & (cuts < 1)], [1.0]]))
    preds = clf.predict(0.5 * (edges[:-1] + edges[1:]))
    change = np.flatnonzero(preds[1:] != preds[:-1]) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [preds.size]])
    return [(float(edges[s]), float(edges[e]), int(preds[s])) for s, e in zip(starts, ends)]


def _generic_crossings(clf: ThresholdClassifier) -> np.ndarray:
    grid = np.linspace(0.0, 1.0, _GENERIC_GRID + 1)
    pred = clf.predict(grid)
    cuts = []
    for i in np.flatnonzero(pred[1:] != pred[:-1]):
        lo, hi = grid[i], grid[i + 1]
        plo = pred[i]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if clf.predict(np.array([mid]))[0] == plo:
                lo = mid
            else:
                hi = mid
        cuts.append(0.5 * (lo + hi))
    return np.asarray(cuts)


def _quad(f, a: float, b: float, tol: float) -> float:
    if b <= a:
        return 0.0
    value, err = integrate.quad(f, a, b, epsabs=tol, epsrel=0.0, limit=200)
    if not np.isfinite(value) or err > 10 * tol:
        raise NumericalError(f"quadrature did not converge on [{a}, {b}] (error estimate {err})")
    return value


def q_risk_of_threshold(world: SyntheticWorld, classifier: ThresholdClassifier, q0: float, q1: float,
                        tol: float = QUAD_TOL) -> float:
    """Population q-weighted 0-1 risk of ``classifier`` under ``world``.

    Integrates ``q0 (1 - eta) 1{f = 1} + q1 eta 1{f = 0}`` over [0, 1],
    one adaptive quadrature per interval of constant prediction.
    """
    regions = _decision_regions(classifier)
    per_region_tol = tol / max(len(regions), 1)
    total = 0.0
    for a, b, pred in regions:
        if pred == 1:
            total += q0 * _quad(lambda x: 1.0 - world.eta(x), a, b, per_region_tol)
        else:
            total += q1 * _quad(world.eta, a, b, per_region_tol)
    return float(total)


def bayes_classifier(world: SyntheticWorld, q0: float, q1: float) -> ThresholdClassifier:
    return ThresholdClassifier(world.regression(), weighted_threshold(q0, q1))


def _validated(world: SyntheticWorld, q) -> Tuple[float, float]:
    WeightVector(np.asarray(q, dtype=float), world.probs)
    return float(q[0]), float(q[1])


def error_decomposition(world: SyntheticWorld, q, q_prime, eta_hat) -> ErrorDecomposition:
    """Split the excess q'-risk of the q-plug-in rule into estimation and irreducible parts.

    ``ie_bound`` is ``(q'_0 + q'_1) |t_q - t_q'| P(t_lo <= eta(X) <= t_hi)``.
    """
    q0, q1 = _validated(world, q)
    r0, r1 = _validated(world, q_prime)
    t_q = weighted_threshold(q0, q1)
    t_qp = weighted_threshold(r0, r1)
    plug_in = ThresholdClassifier(eta_hat, t_q)
    best_for_q = bayes_classifier(world, q0, q1)
    best_for_qp = bayes_classifier(world, r0, r1)

    baseline = q_risk_of_threshold(world, best_for_qp, r0, r1)
    excess = q_risk_of_threshold(world, plug_in, r0, r1) - baseline
    irreducible = q_risk_of_threshold(world, best_for_q, r0, r1) - baseline
    lo, hi = min(t_q, t_qp), max(t_q, t_qp)
    ie_bound = (r0 + r1) * (hi - lo) * margin_band_probability(world, lo, hi)
    return ErrorDecomposition(excess, excess - irreducible, irreducible, ie_bound)


def margin_band_probability(world: SyntheticWorld, lo: float, hi: float) -> float:
    """``P(lo <= eta(X) <= hi)``; eta is increasing, so this is a length on [0, 1]."""
    if hi < lo:
        raise ValueError("need lo <= hi")
    return world.eta_inverse(hi) - world.eta_inverse(lo)


def margin_probability(world: SyntheticWorld, t: float, s: float) -> float:
    """``P(|eta(X) - t| <= s)``, the quantity in margin-type noise conditions."""
    return margin_band_probability(world, max(t - s, 0.0), min(t + s, 1.0))


def empirical_margin_probability(eta_values: Sequence[float], t: float, s: float) -> float:
    v = np.asarray(eta_values, dtype=float)
    return float(np.mean(np.abs(v - t) <= s))


@dataclass(frozen=True)
class LinearFractionalMetric:
    """``(a0 + a11 TP + a10 FP + a01 FN + a00 TN) / (b0 + b11 TP + b10 FP + b01 FN + b00 TN)``."""

    a0: float = 0.0
    a11: float = 0.0
    a10: float = 0.0
    a01: float = 0.0
    a00: float = 0.0
    b0: float = 1.0
    b11: float = 0.0
    b10: float = 0.0
    b01: float = 0.0
    b00: float = 0.0

    @classmethod
    def accuracy(cls) -> "LinearFractionalMetric":
        return cls(a11=1.0, a00=1.0, b0=1.0)

    def value(self, tp: float, fp: float, fn: float, tn: float) -> float:
        num = self.a0 + self.a11 * tp + self.a10 * fp + self.a01 * fn + self.a00 * tn
        den = self.b0 + self.b11 * tp + self.b10 * fp + self.b01 * fn + self.b00 * tn
        return num / den


def metric_to_threshold(metric: LinearFractionalMetric, l_star: float) -> Tuple[float, float, float]:
    """Optimal threshold of a linear-fractional metric and the weighting that reproduces it.

    ``l_star`` is the metric's optimal value, supplied by the caller.
    Returns ``(delta_star, q0, q1)``.
    """
    m = metric
    den = m.a11 - m.a10 - m.a01 + m.a00 - (m.b11 - m.b10 - m.b01 + m.b00) * l_star
    if not den > 0:
        raise ValueError("metric optimum is a reversed-threshold rule (sign condition violated)")
    delta = ((m.b10 - m.b00) * l_star - m.a10 + m.a00) / den
    q0 = (m.b10 - m.b00) * l_star - m.a10 + m.a00
    q1 = (m.b01 - m.b11) * l_star - m.a01 + m.a11
    return delta, q0, q1
