"""Weighted-loss MLP training: gradients, optimizers, heads, metrics.

The backbone check is a central finite-difference probe of every parameter
gradient, for every loss pairing.  Loss values are cross-checked against
direct formulas written out here, independent of the softplus/logsumexp
forms the module uses internally.
"""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.special import expit

from steepshape.dataset import DomainBox, WeightedDataset, one_hot
from steepshape.models import (
    DivergenceError,
    Metrics,
    MlpModel,
    MlpSpec,
    TrainConfig,
    evaluate,
    feature_extract,
    fit_linear_head,
    init_params,
    lipschitz_upper_bound,
    load_json,
    loss_and_gradients,
    save_json,
    train,
)

LOSS_SETUPS = {
    "weighted_mse": ("identity", 1),
    "weighted_bce": ("sigmoid", 1),
    "weighted_cce": ("softmax", 3),
}


def random_problem(loss, seed, widths=(2, 4)):
    """Model plus a batch sitting safely away from every relu kink."""
    activation, n_out = LOSS_SETUPS[loss]
    spec = MlpSpec((widths[0], *widths[1:], n_out), output_activation=activation)
    rng = np.random.default_rng(seed)
    for _ in range(50):
        model = init_params(spec, int(rng.integers(1 << 31)))
        x = rng.normal(size=(6, widths[0]))
        z = x
        margin = np.inf
        for wl, bl in zip(model.weights[:-1], model.biases[:-1]):
            pre = z @ wl + bl
            margin = min(margin, float(np.abs(pre).min()))
            z = np.maximum(pre, 0.0)
        if margin > 1e-3:
            break
    else:
        raise AssertionError("could not find a kink-free configuration")
    if loss == "weighted_cce":
        y = one_hot(rng.integers(0, n_out, size=6), n_out)
    elif loss == "weighted_bce":
        y = rng.integers(0, 2, size=(6, 1)).astype(float)
    else:
        y = rng.normal(size=(6, 1))
    w = rng.uniform(0.5, 2.0, size=6)
    return model, x, y, w


def fd_gradient_gap(model, x, y, w, loss, h=1e-6):
    """Worst relative gap between analytic and central-difference gradients."""
    _, wg, bg = loss_and_gradients(model, x, y, w, loss)
    worst = 0.0
    for params, grads in ((model.weights, wg), (model.biases, bg)):
        for p, g in zip(params, grads):
            flat_p, flat_g = p.ravel(), np.asarray(g).ravel()
            for j in range(flat_p.size):
                orig = flat_p[j]
                flat_p[j] = orig + h
                up = loss_and_gradients(model, x, y, w, loss)[0]
                flat_p[j] = orig - h
                dn = loss_and_gradients(model, x, y, w, loss)[0]
                flat_p[j] = orig
                fd = (up - dn) / (2.0 * h)
                gap = abs(fd - flat_g[j]) / max(1.0, abs(fd), abs(flat_g[j]))
                worst = max(worst, gap)
    return worst


class TestMlpSpec:
    def test_properties(self):
        spec = MlpSpec((3, 8, 8, 2))
        assert spec.n_inputs == 3 and spec.n_outputs == 2 and spec.n_layers == 3

    def test_validation(self):
        with pytest.raises(ValueError):
            MlpSpec((4,))
        with pytest.raises(ValueError):
            MlpSpec((4, 0, 1))
        with pytest.raises(ValueError):
            MlpSpec((4, 1), hidden_activation="tanh")
        with pytest.raises(ValueError):
            MlpSpec((4, 1), output_activation="relu")


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(loss="hinge")
        with pytest.raises(ValueError):
            TrainConfig(optimizer="rmsprop")
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)


class TestInitParams:
    def test_glorot_bounds_and_zero_biases(self):
        spec = MlpSpec((10, 20, 3))
        model = init_params(spec, seed=0)
        for w, (fi, fo) in zip(model.weights, ((10, 20), (20, 3))):
            limit = math.sqrt(6.0 / (fi + fo))
            assert w.shape == (fi, fo)
            assert np.all(np.abs(w) <= limit)
        for b in model.biases:
            assert np.array_equal(b, np.zeros_like(b))

    def test_seed_determinism(self):
        spec = MlpSpec((4, 6, 1))
        a, b = init_params(spec, 7), init_params(spec, 7)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)
        c = init_params(spec, 8)
        assert not np.array_equal(a.weights[0], c.weights[0])


class TestForwardPass:
    def hand_model(self, activation="identity"):
        spec = MlpSpec((1, 2, 1), output_activation=activation)
        weights = [np.array([[1.0, -1.0]]), np.array([[1.0], [1.0]])]
        biases = [np.zeros(2), np.array([0.5])]
        return MlpModel(spec, weights, biases)

    def test_relu_gates_the_negative_branch(self):
        model = self.hand_model()
        # x = 2: hidden (2, -2) -> relu (2, 0) -> logit 2.5
        # x = -3: hidden (-3, 3) -> relu (0, 3) -> logit 3.5
        assert np.array_equal(model.predict([[2.0], [-3.0]]), [[2.5], [3.5]])

    def test_sigmoid_output(self):
        model = self.hand_model("sigmoid")
        assert np.allclose(model.predict([[2.0]]), expit(2.5), rtol=1e-15)

    def test_softmax_rows_are_distributions(self):
        spec = MlpSpec((2, 3), output_activation="softmax")
        model = MlpModel(spec, [np.eye(2, 3) * 4.0], [np.zeros(3)])
        pred = model.predict(np.array([[5.0, 0.0], [0.0, 400.0]]))
        assert np.allclose(pred.sum(axis=1), 1.0, rtol=1e-12)
        assert pred.argmax(axis=1).tolist() == [0, 1]


class TestLossValues:
    def test_mse_matches_the_direct_formula(self):
        model, x, y, w = random_problem("weighted_mse", seed=0)
        value, _, _ = loss_and_gradients(model, x, y, w, "weighted_mse")
        direct = float(w @ np.mean((model.predict(x) - y) ** 2, axis=1))
        assert math.isclose(value, direct, rel_tol=1e-12)

    def test_bce_matches_the_direct_formula(self):
        model, x, y, w = random_problem("weighted_bce", seed=1)
        value, _, _ = loss_and_gradients(model, x, y, w, "weighted_bce")
        p = model.predict(x)
        direct = float(w @ -(y * np.log(p) + (1 - y) * np.log(1 - p)).mean(axis=1))
        assert math.isclose(value, direct, rel_tol=1e-10)

    def test_cce_matches_the_direct_formula(self):
        model, x, y, w = random_problem("weighted_cce", seed=2)
        value, _, _ = loss_and_gradients(model, x, y, w, "weighted_cce")
        p = model.predict(x)
        direct = float(w @ -(y * np.log(p)).sum(axis=1))
        assert math.isclose(value, direct, rel_tol=1e-10)

    def test_loss_pairing_is_enforced(self):
        model, x, y, w = random_problem("weighted_mse", seed=3)
        with pytest.raises(ValueError, match="sigmoid"):
            loss_and_gradients(model, x, y, w, "weighted_bce")
        spec = MlpSpec((2, 3), output_activation="softmax")
        soft = init_params(spec, 0)
        with pytest.raises(ValueError, match="not supported"):
            loss_and_gradients(soft, x, one_hot([0] * 6, 3), w, "weighted_mse")


class TestGradients:
    @pytest.mark.parametrize("loss", sorted(LOSS_SETUPS))
    def test_against_central_differences(self, loss):
        model, x, y, w = random_problem(loss, seed=10)
        assert fd_gradient_gap(model, x, y, w, loss) < 1e-7

    @pytest.mark.parametrize("loss", sorted(LOSS_SETUPS))
    def test_two_hidden_layers(self, loss):
        model, x, y, w = random_problem(loss, seed=11, widths=(3, 4, 3))
        assert fd_gradient_gap(model, x, y, w, loss) < 1e-7

    def test_exact_reduction_agrees_with_the_fast_path(self):
        model, x, y, w = random_problem("weighted_mse", seed=12)
        v_fast, wg_fast, bg_fast = loss_and_gradients(model, x, y, w, "weighted_mse")
        v_ex, wg_ex, bg_ex = loss_and_gradients(
            model, x, y, w, "weighted_mse", exact_reduction=True
        )
        assert math.isclose(v_fast, v_ex, rel_tol=1e-12)
        for a, b in zip(wg_fast + bg_fast, wg_ex + bg_ex):
            assert np.allclose(a, b, rtol=1e-11, atol=1e-13)

    def test_exact_reduction_is_row_order_invariant(self):
        # correctly rounded sums cannot see the summation order
        model, x, y, w = random_problem("weighted_mse", seed=13)
        perm = np.random.default_rng(0).permutation(x.shape[0])
        v0, wg0, bg0 = loss_and_gradients(
            model, x, y, w, "weighted_mse", exact_reduction=True
        )
        v1, wg1, bg1 = loss_and_gradients(
            model, x[perm], y[perm], w[perm], "weighted_mse", exact_reduction=True
        )
        assert v0 == v1
        for a, b in zip(wg0 + bg0, wg1 + bg1):
            assert np.array_equal(a, b)

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=10_000))
    def test_gradient_property(self, seed):
        model, x, y, w = random_problem("weighted_mse", seed=seed)
        assume(np.isfinite(loss_and_gradients(model, x, y, w, "weighted_mse")[0]))
        assert fd_gradient_gap(model, x, y, w, "weighted_mse") < 1e-6


def uniform_ds(points, labels):
    pts = np.asarray(points, dtype=float)
    box = DomainBox(pts.min(axis=0) - 1.0, pts.max(axis=0) + 1.0)
    n = pts.shape[0]
    return WeightedDataset(pts, labels, box, np.full(n, 1.0 / n))


class TestTrain:
    def test_fits_a_linear_map(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, size=(64, 1))
        ds = uniform_ds(x, 2.0 * x + 1.0)
        cfg = TrainConfig(
            loss="weighted_mse", optimizer="adam", learning_rate=1e-2,
            batch_size=64, epochs=800, seed=1,
        )
        model = train(ds, MlpSpec((1, 8, 1)), cfg)
        assert evaluate(model, x, 2.0 * x + 1.0).l2 < 1e-3

    def test_seed_determinism_is_bitwise(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-1, 1, size=(32, 2))
        ds = uniform_ds(x, np.sin(x.sum(axis=1))[:, None])
        cfg = TrainConfig(
            loss="weighted_mse", optimizer="adam", learning_rate=1e-3,
            batch_size=8, epochs=20, seed=5,
        )
        a = train(ds, MlpSpec((2, 6, 1)), cfg)
        b = train(ds, MlpSpec((2, 6, 1)), cfg)
        for wa, wb in zip(a.weights + a.biases, b.weights + b.biases):
            assert np.array_equal(wa, wb)

    def test_zero_epochs_returns_the_initialization(self):
        ds = uniform_ds(np.zeros((4, 2)), np.zeros((4, 1)))
        cfg = TrainConfig(loss="weighted_mse", epochs=0, seed=3)
        model = train(ds, MlpSpec((2, 5, 1)), cfg)
        ref = init_params(MlpSpec((2, 5, 1)), 3)
        for a, b in zip(model.weights, ref.weights):
            assert np.array_equal(a, b)

    def test_resuming_does_not_mutate_the_initial_model(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-1, 1, size=(16, 1))
        ds = uniform_ds(x, x**2)
        start = init_params(MlpSpec((1, 4, 1)), 9)
        frozen = [w.copy() for w in start.weights]
        cfg = TrainConfig(
            loss="weighted_mse", optimizer="sgd", learning_rate=1e-2,
            batch_size=16, epochs=5, seed=0,
        )
        out = train(ds, MlpSpec((1, 4, 1)), cfg, initial=start)
        for w, f in zip(start.weights, frozen):
            assert np.array_equal(w, f)
        assert not np.array_equal(out.weights[0], start.weights[0])

    def test_chained_single_steps_match_one_run(self):
        # full-batch sgd has no rng consumption, so step-by-step resumption
        # must replay the exact same trajectory
        rng = np.random.default_rng(3)
        x = rng.uniform(-1, 1, size=(8, 1))
        ds = uniform_ds(x, np.abs(x))
        spec = MlpSpec((1, 4, 1))
        base = dict(loss="weighted_mse", optimizer="sgd", learning_rate=5e-2,
                    batch_size=8, seed=4)
        whole = train(ds, spec, TrainConfig(epochs=3, **base))
        stepped = None
        for _ in range(3):
            stepped = train(ds, spec, TrainConfig(epochs=1, **base), initial=stepped)
        for a, b in zip(whole.weights + whole.biases, stepped.weights + stepped.biases):
            assert np.array_equal(a, b)

    def test_integer_ratio_weights_match_duplicated_rows(self):
        # powers-of-two ratios with exact reduction: bitwise equal updates
        rng = np.random.default_rng(4)
        x = rng.normal(size=(4, 2))
        y = rng.normal(size=(4, 1))
        reps = np.array([1, 2, 4, 1])
        n = int(reps.sum())
        weighted = WeightedDataset(
            x, y, DomainBox([-9, -9], [9, 9]), reps / n
        )
        duplicated = WeightedDataset(
            np.repeat(x, reps, axis=0), np.repeat(y, reps, axis=0),
            DomainBox([-9, -9], [9, 9]), np.full(n, 1.0 / n),
        )
        cfg = TrainConfig(
            loss="weighted_mse", optimizer="sgd", learning_rate=0.05,
            batch_size=10**9, epochs=4, seed=6, exact_reduction=True,
        )
        a = train(weighted, MlpSpec((2, 3, 1)), cfg)
        b = train(duplicated, MlpSpec((2, 3, 1)), cfg)
        for wa, wb in zip(a.weights + a.biases, b.weights + b.biases):
            assert np.array_equal(wa, wb)

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_divergence_is_reported_with_its_epoch(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(-1, 1, size=(8, 1))
        ds = uniform_ds(x, 100.0 * x)
        cfg = TrainConfig(
            loss="weighted_mse", optimizer="sgd", learning_rate=1e12,
            batch_size=8, epochs=50, seed=0,
        )
        with pytest.raises(DivergenceError) as err:
            train(ds, MlpSpec((1, 4, 1)), cfg)
        assert err.value.epoch >= 0

    def test_shape_mismatch_is_rejected(self):
        ds = uniform_ds(np.zeros((4, 2)), np.zeros((4, 1)))
        with pytest.raises(ValueError, match="shape"):
            train(ds, MlpSpec((3, 4, 1)), TrainConfig())


class TestFitLinearHead:
    def test_recovers_an_affine_map_exactly(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(40, 3))
        target_w = np.array([[2.0], [-1.0], [0.5]])
        y = x @ target_w + 3.0
        w, b = fit_linear_head(x, y, np.full(40, 1.0 / 40))
        assert np.allclose(w, target_w, atol=1e-9)
        assert np.allclose(b, 3.0, atol=1e-9)

    def test_weights_steer_the_solution(self):
        # two conflicting populations; nearly all weight on the second
        x = np.array([[1.0], [2.0], [1.0], [2.0]])
        y = np.array([[1.0], [2.0], [10.0], [20.0]])
        w = np.array([1e-9, 1e-9, 0.5, 0.5])
        got_w, got_b = fit_linear_head(x, y, w / w.sum())
        assert abs(got_w[0, 0] - 10.0) < 1e-3
        assert abs(got_b[0]) < 1e-3

    def test_rank_deficiency_warns_and_still_solves(self):
        x = np.ones((10, 2))  # both columns collide with the intercept
        y = np.full((10, 1), 4.0)
        with pytest.warns(RuntimeWarning, match="rank-deficient"):
            w, b = fit_linear_head(x, y, np.full(10, 0.1))
        pred = x @ w + b
        assert np.allclose(pred, 4.0, atol=1e-3)

    def test_gradient_head_for_binary_labels(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(60, 2))
        y = (x[:, 0] > 0).astype(float)[:, None]
        cfg = TrainConfig(
            loss="weighted_bce", optimizer="adam", learning_rate=5e-2,
            batch_size=60, epochs=400, seed=0,
        )
        w, b = fit_linear_head(
            x, y, np.full(60, 1.0 / 60), "weighted_bce", "sigmoid", cfg
        )
        pred = expit(x @ w + b)
        assert np.mean((pred[:, 0] > 0.5) == (y[:, 0] > 0.5)) > 0.95


class TestFeatureExtract:
    def test_matches_a_manual_forward_pass(self):
        model = init_params(MlpSpec((2, 5, 3, 1)), 0)
        x = np.random.default_rng(0).normal(size=(7, 2))
        z = x
        for w, b in zip(model.weights[:-1], model.biases[:-1]):
            z = np.maximum(z @ w + b, 0.0)
        assert np.array_equal(feature_extract(model, x), z)
        assert z.shape == (7, 3)

    def test_single_affine_layer_has_no_features(self):
        with pytest.raises(ValueError):
            feature_extract(init_params(MlpSpec((2, 1)), 0), np.zeros((1, 2)))


class TestEvaluate:
    def identity_model(self):
        return MlpModel(MlpSpec((1, 1)), [np.array([[1.0]])], [np.zeros(1)])

    def test_hand_metrics(self):
        model = self.identity_model()
        pts = np.array([[0.0], [1.0], [2.0]])
        labels = np.array([[0.5], [1.0], [4.0]])
        m = evaluate(model, pts, labels)
        assert math.isclose(m.l2, (0.25 + 0.0 + 4.0) / 3.0, rel_tol=1e-15)
        assert m.linf == 2.0
        assert m.linf_sq == 4.0
        assert m.accuracy is None

    def test_linf_consistency(self):
        model = self.identity_model()
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(20, 1))
        labels = rng.normal(size=(20, 1))
        m = evaluate(model, pts, labels)
        assert math.isclose(m.linf**2, m.linf_sq, rel_tol=1e-12)

    def test_sigmoid_threshold_accuracy(self):
        spec = MlpSpec((1, 1), output_activation="sigmoid")
        model = MlpModel(spec, [np.array([[2.0]])], [np.zeros(1)])
        pts = np.array([[-1.0], [0.5], [1.0]])
        assert evaluate(model, pts, np.array([[0.0], [1.0], [1.0]])).accuracy == 1.0
        assert evaluate(model, pts, np.array([[1.0], [1.0], [1.0]])).accuracy == pytest.approx(2 / 3)

    def test_softmax_argmax_accuracy(self):
        spec = MlpSpec((2, 3), output_activation="softmax")
        model = MlpModel(spec, [np.eye(2, 3)], [np.zeros(3)])
        pts = np.array([[5.0, 0.0], [0.0, 5.0]])
        labels = one_hot([0, 2], 3)
        assert evaluate(model, pts, labels).accuracy == 0.5


class TestLipschitzBound:
    def test_matches_svd_spectral_norms(self):
        model = init_params(MlpSpec((4, 8, 8, 2)), 3)
        expected = 1.0
        for w in model.weights:
            expected *= np.linalg.svd(w, compute_uv=False)[0]
        assert math.isclose(lipschitz_upper_bound(model), expected, rel_tol=1e-6)

    def test_dominates_empirical_slopes(self):
        model = init_params(MlpSpec((3, 10, 1)), 1)
        bound = lipschitz_upper_bound(model)
        rng = np.random.default_rng(2)
        a = rng.normal(size=(200, 3))
        b = a + rng.normal(scale=0.1, size=(200, 3))
        gaps = np.linalg.norm(model.predict(a) - model.predict(b), axis=1)
        dists = np.linalg.norm(a - b, axis=1)
        assert np.all(gaps <= bound * dists * (1 + 1e-10))


class TestSerialization:
    def test_round_trip_predictions_are_bitwise(self, tmp_path):
        model = init_params(MlpSpec((2, 6, 2), output_activation="softmax"), 4)
        path = tmp_path / "model.json"
        save_json(model, path)
        back = load_json(path)
        x = np.random.default_rng(0).normal(size=(10, 2))
        assert np.array_equal(back.predict(x), model.predict(x))
        assert back.spec == model.spec
