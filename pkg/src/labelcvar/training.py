"""Linear softmax classifiers trained under standard, balanced and robust risks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import NumericalError
from .risk_core import (
    ClassProbabilities,
    LabeledDataset,
    LossKind,
    RiskReport,
    WeightVector,
    balanced_weights,
    log_softmax,
    per_class_means,
    pointwise_loss,
)
from .robust import BoxUncertaintySet, DualSolution, alpha_schedule, lcvar_dual, lhcvar_dual, project_onto_set


@dataclass
class LinearModel:
    """Per-class affine scores; ``params[:, -1]`` holds the biases."""

    params: np.ndarray

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float)
        if self.params.ndim != 2 or self.params.shape[1] < 2:
            raise ValueError("params must be a k x (d + 1) matrix")
        if not np.all(np.isfinite(self.params)):
            raise NumericalError("model parameters are not finite")

    @classmethod
    def zeros(cls, k: int, d: int) -> "LinearModel":
        return cls(np.zeros((k, d + 1)))

    @property
    def k(self) -> int:
        return self.params.shape[0]

    @property
    def d(self) -> int:
        return self.params.shape[1] - 1

    def scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return X @ self.params[:, :-1].T + self.params[:, -1]

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.scores(X), axis=1)


@dataclass(frozen=True)
class Objective:
    """Training/evaluation objective: ``standard``, ``balanced``, ``lcvar`` or ``lhcvar``."""

    kind: str
    alpha: Optional[float] = None
    kappa: Optional[float] = None
    c: Optional[float] = None

    KINDS = ("standard", "balanced", "lcvar", "lhcvar")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown objective {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "lcvar" and self.alpha is None:
            raise ValueError("lcvar needs alpha")
        if self.kind == "lhcvar" and (self.kappa is None or self.c is None):
            raise ValueError("lhcvar needs kappa and c")

    @classmethod
    def standard(cls) -> "Objective":
        return cls("standard")

    @classmethod
    def balanced(cls) -> "Objective":
        return cls("balanced")

    @classmethod
    def lcvar(cls, alpha: float) -> "Objective":
        return cls("lcvar", alpha=float(alpha))

    @classmethod
    def lhcvar(cls, kappa: float, c: float) -> "Objective":
        return cls("lhcvar", kappa=float(kappa), c=float(c))

    @classmethod
    def parse(cls, text: str) -> "Objective":
        """Parse ``standard``, ``balanced``, ``lcvar:ALPHA`` or ``lhcvar:KAPPA:C``."""
        name, *args = text.strip().lower().split(":")
        try:
            if name == "lcvar":
                (alpha,) = args or ["0.1"]
                return cls.lcvar(float(alpha))
            if name == "lhcvar":
                kappa, c = args if args else ["1", "0.05"]
                return cls.lhcvar(float(kappa), float(c))
        except ValueError as exc:
            raise ValueError(f"cannot parse objective {text!r}: {exc}") from None
        if args:
            raise ValueError(f"objective {name!r} takes no parameters")
        return cls(name)

    @property
    def method_id(self) -> str:
        if self.kind == "lcvar":
            return f"lcvar:{self.alpha:g}"
        if self.kind == "lhcvar":
            return f"lhcvar:{self.kappa:g}:{self.c:g}"
        return self.kind

    def alphas(self, probs: ClassProbabilities) -> Optional[np.ndarray]:
        if self.kind == "lcvar":
            return np.full(probs.k, self.alpha)
        if self.kind == "lhcvar":
            return alpha_schedule(probs, self.kappa, self.c).alphas
        return None

    def aggregate(self, per_class, probs: ClassProbabilities) -> Tuple[float, np.ndarray, Optional[DualSolution]]:
        """Objective value, the class weights ``q_i p_i`` it puts on each risk, and the dual (if robust)."""
        r = np.asarray(per_class, dtype=float)
        if self.kind == "standard":
            mix = probs.p.copy()
            return float(mix @ r), mix, None
        if self.kind == "balanced":
            mix = balanced_weights(probs).q * probs.p
            return float(mix @ r), mix, None
        if self.kind == "lcvar":
            sol = lcvar_dual(r, probs, self.alpha)
        else:
            sol = lhcvar_dual(r, probs, self.alphas(probs))
        return sol.value, sol.q_star.q * probs.p, sol


@dataclass(frozen=True)
class TrainConfig:
    objective: Objective = field(default_factory=Objective.standard)
    epochs: int = 2000
    lr_start: float = 0.01
    lr_end: float = 0.0001
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if not (self.lr_start > 0 and self.lr_end > 0):
            raise ValueError("learning rates must be positive")

    def learning_rates(self) -> np.ndarray:
        """Linear annealing from ``lr_start`` (first step) to ``lr_end`` (last step)."""
        if self.epochs == 1:
            return np.array([self.lr_start])
        return np.linspace(self.lr_start, self.lr_end, self.epochs)


def _design(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _ce_losses_and_probs(params, Xb, y):
    scores = Xb @ params.T
    logp = log_softmax(scores)
    return -logp[np.arange(y.size), y], np.exp(logp)


def class_mix_gradient(params: np.ndarray, Xb: np.ndarray, y: np.ndarray, mix: np.ndarray, counts: np.ndarray, probs_mat=None):
    """Gradient of ``sum_i mix_i * (mean cross-entropy of class i)`` w.r.t. ``params``."""
    if probs_mat is None:
        _, probs_mat = _ce_losses_and_probs(params, Xb, y)
    sample_w = (mix / counts)[y]
    resid = probs_mat.copy()
    resid[np.arange(y.size), y] -= 1.0
    return (resid * sample_w[:, None]).T @ Xb


def surrogate_objective(model: LinearModel, data: LabeledDataset, objective: Objective):
    """Cross-entropy version of ``objective`` and its gradient in the model parameters.

    For the robust objectives the gradient is taken through the maximizing
    weights of the inner problem (Danskin), with lambda fixed at its
    water-filling value, so no gradient step on lambda is needed.
    """
    Xb = _design(data.features)
    y = data.labels
    counts = data.class_counts
    losses, probs_mat = _ce_losses_and_probs(model.params, Xb, y)
    risks = per_class_means(losses, y, data.k)
    value, mix, _ = objective.aggregate(risks, data.empirical_probs())
    grad = class_mix_gradient(model.params, Xb, y, mix, counts, probs_mat)
    return value, grad


def train(data: LabeledDataset, config: TrainConfig, init: Optional[LinearModel] = None,
          callback: Optional[Callable[[int, float], None]] = None) -> LinearModel:
    """Full-batch gradient descent on the cross-entropy surrogate of ``config.objective``.

    Parameters start at zero unless ``init`` is given. ``callback(step, value)``
    is invoked with the objective value before each update.
    """
    model = LinearModel(np.array(init.params, copy=True)) if init is not None else LinearModel.zeros(data.k, data.d)
    probs = data.empirical_probs()
    objective = config.objective
    if objective.kind in ("lcvar", "lhcvar"):
        # fail early on an infeasible set
        BoxUncertaintySet.lhcvar(probs, objective.alphas(probs))
    Xb = _design(data.features)
    y = data.labels
    counts = data.class_counts
    params = model.params
    for step, lr in enumerate(config.learning_rates()):
        losses, probs_mat = _ce_losses_and_probs(params, Xb, y)
        risks = per_class_means(losses, y, data.k)
        value, mix, _ = objective.aggregate(risks, probs)
        if not math.isfinite(value):
            raise NumericalError(f"non-finite training objective at step {step}")
        if callback is not None:
            callback(step, value)
        params = params - lr * class_mix_gradient(params, Xb, y, mix, counts, probs_mat)
        if not np.all(np.isfinite(params)):
            raise NumericalError(f"non-finite parameters after step {step}")
    return LinearModel(params)


@dataclass(frozen=True)
class SaddleConfig:
    """Rounds and step sizes for gradient descent-ascent.

    Unless explicit step sequences are given, ``eta_t = D / (L sqrt(t))``
    for each player.
    """

    rounds: int
    diam_a: float = 1.0
    lip_a: float = 1.0
    diam_b: float = 1.0
    lip_b: float = 1.0
    steps_a: Optional[Sequence[float]] = None
    steps_b: Optional[Sequence[float]] = None

    def step_sizes(self) -> Tuple[np.ndarray, np.ndarray]:
        t = np.arange(1, self.rounds + 1, dtype=float)
        out = []
        for given, diam, lip in ((self.steps_a, self.diam_a, self.lip_a), (self.steps_b, self.diam_b, self.lip_b)):
            eta = np.asarray(given, dtype=float) if given is not None else diam / (lip * np.sqrt(t))
            if eta.shape != (self.rounds,):
                raise ValueError("step sequences must have one entry per round")
            if np.any(eta <= 0) or np.any(np.diff(eta) > 0):
                raise ValueError("step sizes must be positive and nonincreasing")
            out.append(eta)
        return out[0], out[1]


def descent_ascent(grad_a, grad_b, proj_a, proj_b, a0, b0, config: SaddleConfig):
    """Projected simultaneous gradient descent (in ``a``) / ascent (in ``b``).

    Returns the averages of the played iterates ``a_1..a_T`` and ``b_1..b_T``.
    """
    eta_a, eta_b = config.step_sizes()
    a = np.array(a0, dtype=float)
    b = np.array(b0, dtype=float)
    sum_a = np.zeros_like(a)
    sum_b = np.zeros_like(b)
    for t in range(config.rounds):
        sum_a += a
        sum_b += b
        ga = grad_a(a, b)
        gb = grad_b(a, b)
        a = proj_a(a - eta_a[t] * ga)
        b = proj_b(b + eta_b[t] * gb)
    return sum_a / config.rounds, sum_b / config.rounds


def bilinear_toy(config: SaddleConfig, a0: float = 1.0, b0: float = 1.0):
    """Run descent-ascent on ``f(a, b) = a * b`` over ``[-1, 1]^2``.

    Returns ``(a_bar, b_bar, gap)`` where ``gap`` is the duality gap
    ``max_b f(a_bar, b) - min_a f(a, b_bar) = |a_bar| + |b_bar|``.
    """
    clip = lambda v: np.clip(v, -1.0, 1.0)  # noqa: E731
    a_bar, b_bar = descent_ascent(
        lambda a, b: b, lambda a, b: a, clip, clip, np.array([a0]), np.array([b0]), config
    )
    a_bar, b_bar = float(a_bar[0]), float(b_bar[0])
    return a_bar, b_bar, abs(a_bar) + abs(b_bar)


def gda(data: LabeledDataset, box: BoxUncertaintySet, config: SaddleConfig,
        init_model: Optional[LinearModel] = None, init_q: Optional[WeightVector] = None):
    """Solve ``min_model max_{q in box} sum_i q_i p_i R_i(model)`` by descent-ascent.

    ``R_i`` is the per-class mean cross-entropy. The model player is
    unconstrained; the weight player is projected back onto ``box`` each
    round. Returns the averaged model and averaged weights.
    """
    probs = box.ref_probs
    Xb = _design(data.features)
    y = data.labels
    counts = data.class_counts
    model0 = init_model if init_model is not None else LinearModel.zeros(data.k, data.d)
    q0 = init_q.q if init_q is not None else project_onto_set(np.ones(data.k), box).q

    def risks(params):
        losses, _ = _ce_losses_and_probs(params, Xb, y)
        return per_class_means(losses, y, data.k)

    def grad_a(params, q):
        return class_mix_gradient(params, Xb, y, q * probs.p, counts)

    def grad_b(params, q):
        r = risks(params)
        if not np.all(np.isfinite(r)):
            raise NumericalError("non-finite class risks during descent-ascent")
        return probs.p * r

    a_bar, q_bar = descent_ascent(
        grad_a, grad_b, lambda a: a, lambda q: project_onto_set(q, box).q,
        model0.params, q0, config,
    )
    return LinearModel(a_bar), WeightVector(q_bar, probs)


def evaluate(model: LinearModel, data: LabeledDataset, objectives: Sequence[Objective] = (),
             loss: LossKind = LossKind.ZERO_ONE) -> RiskReport:
    """Per-class risks of ``model`` on ``data`` plus each requested objective.

    ``objective_value`` is the standard (unweighted) risk; the values of the
    requested objectives are stored in ``report.robust`` keyed by method id.
    Class probabilities are the empirical ones of ``data``.
    """
    values = pointwise_loss(model.scores(data.features), data.labels, loss)
    per_class = per_class_means(values, data.labels, data.k)
    probs = data.empirical_probs()
    standard = float(probs.p @ per_class)
    extra = {}
    lam = q_star = None
    for obj in objectives:
        value, _, sol = obj.aggregate(per_class, probs)
        extra[obj.method_id] = value
        if sol is not None and lam is None:
            lam, q_star = sol.lam, sol.q_star
    return RiskReport(
        per_class=per_class,
        objective_value=standard,
        worst_class=float(per_class.max()),
        lambda_opt=lam,
        q_star=q_star,
        probs_source="empirical",
        robust=extra,
    )
