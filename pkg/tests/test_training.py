import numpy as np
import pytest

from labelcvar.errors import NumericalError
from labelcvar.plugin import SyntheticWorld, synth_sample
from labelcvar.risk_core import LabeledDataset
from labelcvar.robust import BoxUncertaintySet, robust_sup_box
from labelcvar.training import (
    LinearModel,
    Objective,
    SaddleConfig,
    TrainConfig,
    bilinear_toy,
    evaluate,
    gda,
    surrogate_objective,
    train,
)
from labelcvar.experiments import Standardizer


def small_problem(seed=3, n=40):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] + 0.8 * rng.normal(size=n) > 0.9).astype(int)
    return LabeledDataset(X, y, 2)


def multiclass_problem(seed, n=120, k=4, d=3):
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=2.0, size=(k, d))
    y = np.concatenate([np.arange(k), rng.choice(k, size=n - k, p=rng.dirichlet(np.ones(k) * 2))])
    X = centers[y] + rng.normal(size=(n, d))
    return LabeledDataset(X, y, k)


def finite_difference(fn, params, h=1e-5):
    grad = np.zeros_like(params)
    for idx in np.ndindex(params.shape):
        e = np.zeros_like(params)
        e[idx] = h
        grad[idx] = (fn(params + e) - fn(params - e)) / (2 * h)
    return grad


class TestObjective:
    def test_parse_roundtrip(self):
        for text in ("standard", "balanced", "lcvar:0.05", "lhcvar:1.2:0.05"):
            assert Objective.parse(text).method_id == text
        assert Objective.parse("lcvar") == Objective.lcvar(0.1)
        assert Objective.parse("lhcvar") == Objective.lhcvar(1.0, 0.05)
        with pytest.raises(ValueError):
            Objective.parse("minimax")
        with pytest.raises(ValueError):
            Objective.parse("standard:3")

    def test_learning_rate_schedule(self):
        lrs = TrainConfig(Objective.standard(), 5, 0.01, 0.0001).learning_rates()
        assert lrs[0] == 0.01 and lrs[-1] == pytest.approx(0.0001)
        assert np.all(np.diff(lrs) < 0)
        assert np.allclose(np.diff(lrs), np.diff(lrs)[0])


class TestTrain:
    def test_separable_standard_descends_monotonically(self):
        rng = np.random.default_rng(0)
        X = np.vstack([rng.normal(-2, 0.5, size=(30, 2)), rng.normal(2, 0.5, size=(30, 2))])
        y = np.repeat([0, 1], 30)
        values = []
        train(LabeledDataset(X, y, 2), TrainConfig(Objective.standard(), 300, 0.05, 0.01),
              callback=lambda step, v: values.append(v))
        assert np.all(np.diff(values) < 0)

    def test_balanced_helps_minority_class(self):
        world = SyntheticWorld(0.9)
        tr, te = synth_sample(world, 20_000, 1), synth_sample(world, 20_000, 2)
        scaler = Standardizer.fit(tr)
        tr, te = scaler.apply(tr), scaler.apply(te)
        cfg = dict(epochs=500, lr_start=0.01, lr_end=0.0001)
        std = evaluate(train(tr, TrainConfig(Objective.standard(), **cfg)), te).per_class
        bal = evaluate(train(tr, TrainConfig(Objective.balanced(), **cfg)), te).per_class
        assert bal[1] < std[1]

    def test_lcvar_objective_improves(self):
        data = multiclass_problem(5)
        obj = Objective.lcvar(0.3)
        before, _ = surrogate_objective(LinearModel.zeros(data.k, data.d), data, obj)
        model = train(data, TrainConfig(obj, 200, 0.1, 0.01))
        after, _ = surrogate_objective(model, data, obj)
        assert after <= before

    def test_deterministic(self):
        data = multiclass_problem(6)
        cfg = TrainConfig(Objective.lhcvar(1.0, 0.5), 100, 0.1, 0.01, seed=42)
        a, b = train(data, cfg), train(data, cfg)
        assert np.array_equal(a.params, b.params)

    def test_non_finite_raises_with_step(self):
        data = multiclass_problem(7)
        with pytest.raises(NumericalError, match="step"):
            train(data, TrainConfig(Objective.standard(), 50, 1e308, 1e308))


class TestGradients:
    @pytest.mark.parametrize("obj", [Objective.standard(), Objective.balanced(), Objective.lcvar(0.4),
                                     Objective.lhcvar(1.0, 0.5)])
    def test_matches_finite_differences(self, obj):
        data = multiclass_problem(11)
        rng = np.random.default_rng(1)
        params = rng.normal(scale=0.3, size=(data.k, data.d + 1))
        value, grad = surrogate_objective(LinearModel(params), data, obj)
        fd = finite_difference(lambda w: surrogate_objective(LinearModel(w), data, obj)[0], params)
        assert np.linalg.norm(fd - grad) <= 1e-4 * np.linalg.norm(grad)


class TestGDA:
    def test_bilinear_bound(self):
        for T in (100, 1000):
            cfg = SaddleConfig(T, diam_a=2.0, lip_a=1.0, diam_b=2.0, lip_b=1.0)
            a_bar, b_bar, gap = bilinear_toy(cfg)
            assert abs(a_bar * b_bar) <= 3 * (2 + 2) / (2 * np.sqrt(T))
            assert gap <= 3 * (2 + 2) / np.sqrt(T)

    def test_step_validation(self):
        with pytest.raises(ValueError):
            SaddleConfig(3, steps_a=[1.0, 2.0, 3.0]).step_sizes()
        with pytest.raises(ValueError):
            SaddleConfig(3, steps_b=[1.0, 0.0, 0.0]).step_sizes()

    def test_singleton_set_is_plain_descent(self):
        data = small_problem()
        probs = data.empirical_probs()
        box = BoxUncertaintySet(np.ones(2), probs)
        T = 200
        model, q = gda(data, box, SaddleConfig(T, steps_a=np.full(T, 0.1), steps_b=np.full(T, 0.1)))
        assert q.q == pytest.approx(np.ones(2), abs=1e-12)
        # averaged iterates of plain gradient descent on the standard objective
        params = np.zeros((2, 3))
        total = np.zeros_like(params)
        for _ in range(T):
            total += params
            params = params - 0.1 * surrogate_objective(LinearModel(params), data, Objective.standard())[1]
        assert model.params == pytest.approx(total / T, abs=1e-12)

    @pytest.mark.slow
    def test_agrees_with_dual_training(self):
        data = small_problem()
        probs = data.empirical_probs()
        alpha = 0.5
        box = BoxUncertaintySet.lcvar(probs, alpha)
        obj = Objective.lcvar(alpha)
        dual_model = train(data, TrainConfig(obj, 20_000, 0.5, 0.01))
        cfg = SaddleConfig(100_000, diam_a=5.0, lip_a=1.0, diam_b=float(np.linalg.norm(box.upper)), lip_b=1.0)
        gda_model, q_bar = gda(data, box, cfg)
        assert box.contains(q_bar.q)
        assert surrogate_objective(gda_model, data, obj)[0] == pytest.approx(
            surrogate_objective(dual_model, data, obj)[0], abs=1e-2)


class TestEvaluate:
    def test_perfect_classifier(self):
        X = np.array([[-1.0], [1.0], [-2.0], [2.0]])
        y = np.array([0, 1, 0, 1])
        rep = evaluate(LinearModel(np.array([[-1.0, 0.0], [1.0, 0.0]])), LabeledDataset(X, y, 2))
        assert rep.per_class.tolist() == [0.0, 0.0] and rep.worst_class == 0.0

    def test_constant_classifier(self):
        X = np.zeros((4, 1))
        y = np.array([0, 1, 0, 1])
        rep = evaluate(LinearModel.zeros(2, 1), LabeledDataset(X, y, 2), [Objective.lcvar(0.5)])
        assert rep.objective_value == 0.5 and rep.worst_class == 1.0
        assert rep.robust["lcvar:0.5"] == pytest.approx(1.0)
        assert rep.lambda_opt is not None

    def test_lcvar_value_agrees_with_primal(self):
        data = multiclass_problem(9)
        model = train(data, TrainConfig(Objective.standard(), 50, 0.1, 0.01))
        rep = evaluate(model, data, [Objective.lcvar(0.3)])
        primal = robust_sup_box(rep.per_class, BoxUncertaintySet.lcvar(data.empirical_probs(), 0.3))
        assert rep.robust["lcvar:0.3"] == pytest.approx(primal.value, abs=1e-8)
