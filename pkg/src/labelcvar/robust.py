"""Robust class-weighted risk over box uncertainty sets.

The uncertainty sets handled here are

    Q = {q : sum_i p_i q_i = 1, 0 <= q_i <= u_i},

which covers LCVaR (``u_i = 1/alpha``) and LHCVaR (``u_i = 1/alpha_i``).
The supremum of the weighted risk over such a set is a fractional knapsack
and is solved greedily; the equivalent one-dimensional dual in lambda is
minimized exactly by water filling.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import logsumexp

from .errors import InfeasibleSetError, NumericalError
from .risk_core import ClassProbabilities, WeightVector

FEASIBILITY_SLACK = 1e-12
# prefix-mass comparisons in water filling absorb this much rounding
MASS_TOL = 1e-12


@dataclass(frozen=True)
class BoxUncertaintySet:
    upper: np.ndarray
    ref_probs: ClassProbabilities

    def __post_init__(self):
        u = np.asarray(self.upper, dtype=float).ravel()
        if u.size != self.ref_probs.k:
            raise ValueError(f"{u.size} upper bounds given for {self.ref_probs.k} classes")
        if np.any(~(u > 0)):
            raise ValueError("upper bounds must be positive")
        object.__setattr__(self, "upper", u)
        if self.total_mass < 1.0 - FEASIBILITY_SLACK:
            raise InfeasibleSetError(
                f"uncertainty set empty: sum(p * u) = {self.total_mass!r} < 1"
            )

    @property
    def k(self) -> int:
        return self.upper.size

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.ref_probs.p * self.upper))

    @classmethod
    def lcvar(cls, probs: ClassProbabilities, alpha: float) -> "BoxUncertaintySet":
        _check_alpha(alpha)
        return cls(np.full(probs.k, 1.0 / alpha), probs)

    @classmethod
    def lhcvar(cls, probs: ClassProbabilities, alphas) -> "BoxUncertaintySet":
        alphas = np.asarray(alphas, dtype=float)
        if np.any(~(alphas > 0)):
            raise ValueError("every alpha_i must be positive")
        return cls(1.0 / alphas, probs)

    def contains(self, q, tol: float = 1e-9) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(
            np.all(q >= -tol)
            and np.all(q <= self.upper + tol)
            and abs(q @ self.ref_probs.p - 1.0) <= tol
        )


@dataclass(frozen=True)
class AlphaSchedule:
    kappa: float
    c: float
    alphas: np.ndarray

    def uncertainty_set(self, probs: ClassProbabilities) -> BoxUncertaintySet:
        return BoxUncertaintySet.lhcvar(probs, self.alphas)


@dataclass(frozen=True)
class DualSolution:
    value: float
    lam: float
    q_star: WeightVector
    active_set: Tuple[int, ...]


def _check_alpha(alpha: float) -> None:
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    if alpha > 1:
        raise InfeasibleSetError(f"Q_alpha infeasible for alpha = {alpha!r} > 1")


def _as_risks(per_class, k: int) -> np.ndarray:
    r = np.asarray(per_class, dtype=float).ravel()
    if r.size != k:
        raise ValueError(f"{r.size} class risks given for {k} classes")
    if not np.all(np.isfinite(r)):
        raise NumericalError("class risks must be finite")
    return r


def _descending_order(r: np.ndarray) -> np.ndarray:
    # stable: equal risks keep class-index order
    return np.argsort(-r, kind="stable")


def dual_objective(lam: float, per_class, probs: ClassProbabilities, alphas) -> float:
    """``sum_i (p_i / alpha_i) (R_i - lam)_+ + lam``."""
    r = np.asarray(per_class, dtype=float)
    w = probs.p / np.asarray(alphas, dtype=float)
    return float(np.sum(w * np.maximum(r - lam, 0.0)) + lam)


def robust_sup_box(per_class, box: BoxUncertaintySet) -> DualSolution:
    """Maximize ``sum_i q_i p_i R_i`` over ``box`` by greedy mass assignment.

    Classes are filled to their cap in decreasing order of risk until the
    normalization ``sum p_i q_i = 1`` is met; the class that receives the
    last (possibly fractional) share is the pivot and its risk is reported
    as lambda.
    """
    p = box.ref_probs.p
    r = _as_risks(per_class, box.k)
    q = np.zeros(box.k)
    remaining = 1.0
    pivot = None
    for i in _descending_order(r):
        if remaining <= 0.0:
            break
        take = min(box.upper[i], remaining / p[i])
        q[i] = take
        remaining -= take * p[i]
        pivot = i
    if remaining > FEASIBILITY_SLACK:
        raise InfeasibleSetError("uncertainty set empty")
    value = float(np.sum(q * p * r))
    lam = float(r[pivot])
    active = tuple(int(i) for i in np.flatnonzero(r > lam))
    return DualSolution(value=value, lam=lam, q_star=WeightVector(q, box.ref_probs), active_set=active)


def water_fill_lambda(per_class, probs: ClassProbabilities, alphas) -> float:
    """Minimizer of the piecewise-linear dual in lambda.

    Risks are visited from largest to smallest while accumulating each
    class's own ``p_i / alpha_i``; the minimizer is the risk at which this
    prefix mass first reaches 1 (the dual's slope changes sign there).
    """
    r = _as_risks(per_class, probs.k)
    w = probs.p / np.asarray(alphas, dtype=float)
    order = _descending_order(r)
    prefix = np.cumsum(w[order])
    reached = np.flatnonzero(prefix >= 1.0 - MASS_TOL)
    if reached.size == 0:
        # total mass short of 1 only by the feasibility slack
        return float(r[order[-1]])
    return float(r[order[reached[0]]])


def _dual_weights(r: np.ndarray, lam: float, box: BoxUncertaintySet) -> np.ndarray:
    """Maximizing weights implied by lambda: cap above it, share the rest at it."""
    p = box.ref_probs.p
    q = np.where(r > lam, box.upper, 0.0)
    remaining = 1.0 - float(q @ p)
    for i in np.flatnonzero(r == lam):
        if remaining <= 0.0:
            break
        q[i] = min(box.upper[i], remaining / p[i])
        remaining -= q[i] * p[i]
    return q


def lhcvar_dual(per_class, probs: ClassProbabilities, alphas) -> DualSolution:
    """Empirical LHCVaR via its dual: ``min_lam sum_i (p_i/alpha_i)(R_i - lam)_+ + lam``."""
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (probs.k,)).copy()
    box = BoxUncertaintySet.lhcvar(probs, alphas)
    r = _as_risks(per_class, probs.k)
    lam = water_fill_lambda(r, probs, alphas)
    value = dual_objective(lam, r, probs, alphas)
    q = _dual_weights(r, lam, box)
    active = tuple(int(i) for i in np.flatnonzero(r > lam))
    return DualSolution(value=value, lam=lam, q_star=WeightVector(q, probs), active_set=active)


def lcvar_dual(per_class, probs: ClassProbabilities, alpha: float) -> DualSolution:
    """Empirical LCVaR: the homogeneous case ``alpha_i = alpha`` of :func:`lhcvar_dual`."""
    _check_alpha(alpha)
    return lhcvar_dual(per_class, probs, np.full(probs.k, float(alpha)))


def alpha_schedule(probs: ClassProbabilities, kappa: float, c: float) -> AlphaSchedule:
    """Tempered per-class levels ``alpha_i = c p_i^(1/kappa) / sum_j p_j^(1/kappa)``."""
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa!r}")
    if not 0 < c <= 1:
        raise ValueError(f"c must lie in (0, 1], got {c!r}")
    logits = np.log(probs.p) / kappa
    alphas = c * np.exp(logits - logsumexp(logits))
    return AlphaSchedule(kappa=float(kappa), c=float(c), alphas=alphas)


def _clipped(q, nu, p, u):
    return np.clip(q - nu * p, 0.0, u)


def project_with_multiplier(q, box: BoxUncertaintySet) -> Tuple[np.ndarray, float]:
    """Euclidean projection onto ``box`` together with the equality multiplier.

    Solves ``g(nu) = sum_i p_i clip(q_i - nu p_i, 0, u_i) = 1``. ``g`` is
    nonincreasing and piecewise linear with kinks at ``q_i / p_i`` and
    ``(q_i - u_i) / p_i``; the root is bracketed by bisection over the sorted
    kinks and then read off the linear piece, finished by an exact solve on
    the resulting free set.
    """
    q = np.asarray(q, dtype=float).ravel()
    p, u = box.ref_probs.p, box.upper
    if q.size != box.k:
        raise ValueError(f"point has {q.size} entries for {box.k} classes")
    if not np.all(np.isfinite(q)):
        raise NumericalError("cannot project a non-finite point")

    kinks = np.unique(np.concatenate([(q - u) / p, q / p]))
    g = np.clip(q[None, :] - kinks[:, None] * p[None, :], 0.0, u[None, :]) @ p
    # g is nonincreasing along kinks: g[0] = sum(p u) >= 1 and g[-1] = 0
    j = int(np.searchsorted(-g, -1.0, side="right")) - 1
    j = min(max(j, 0), kinks.size - 2)
    g_lo, g_hi = g[j], g[j + 1]
    if g_lo == g_hi:
        nu = float(kinks[j])
    else:
        nu = float(kinks[j] + (g_lo - 1.0) / (g_lo - g_hi) * (kinks[j + 1] - kinks[j]))
    x = _clipped(q, nu, p, u)

    free = (x > 0) & (x < u)
    if np.any(free):
        at_cap = ~free & (x >= u)
        nu_exact = (p[free] @ q[free] + p[at_cap] @ u[at_cap] - 1.0) / (p[free] @ p[free])
        x_exact = _clipped(q, nu_exact, p, u)
        if abs(p @ x_exact - 1.0) <= abs(p @ x - 1.0):
            nu, x = float(nu_exact), x_exact
    return x, float(nu)


def project_onto_set(q, box: BoxUncertaintySet) -> WeightVector:
    """Closest point of ``box`` to ``q`` in Euclidean norm."""
    x, _ = project_with_multiplier(q, box)
    return WeightVector(x, box.ref_probs)


def projection_kkt_residual(x, q, box: BoxUncertaintySet, tol: float = 1e-12) -> float:
    """Largest violation of the projection optimality conditions at ``x``.

    The multiplier is recovered from ``x`` itself, so this check does not
    depend on how ``x`` was computed.
    """
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    p, u = box.ref_probs.p, box.upper
    primal = max(abs(float(p @ x) - 1.0), float(np.max(-x)), float(np.max(x - u)), 0.0)
    # stationarity: x_i = clip(q_i - nu p_i, 0, u_i) for a common nu
    free = (x > tol) & (x < u - tol)
    lower = x <= tol
    upper = x >= u - tol
    if np.any(free):
        nus = (q[free] - x[free]) / p[free]
        nu = float(np.mean(nus))
        stat = float(np.max(np.abs(q[free] - nu * p[free] - x[free])))
        lo_viol = np.max(q[lower] - nu * p[lower], initial=0.0)
        up_viol = np.max(u[upper] - (q[upper] - nu * p[upper]), initial=0.0)
        return max(primal, stat, float(lo_viol), float(up_viol))
    # every coordinate at a bound: nu must lie in an interval
    nu_min = np.max(q[lower] / p[lower], initial=-np.inf)
    nu_max = np.min((q[upper] - u[upper]) / p[upper], initial=np.inf)
    return max(primal, float(max(0.0, nu_min - nu_max)))
