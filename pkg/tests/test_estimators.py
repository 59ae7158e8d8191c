import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcdist.channel import SensorConfig, simulate_transmitted_signal
from mcdist.errors import (
    ConfigError,
    DegenerateRates,
    DimensionMismatch,
    DomainError,
    RankDeficient,
    UnknownEmissionTime,
)
from mcdist.estimators import (
    PUBLISHED_PEAKTIME_CURVES,
    PUBLISHED_POWER_CURVES,
    CurveEstimatorParams,
    LinearModel,
    NeuralModel,
    combined_estimate,
    design_matrix,
    mlr_predict,
    mlr_train,
    n_weights,
    nn_error_jacobian,
    nn_forward,
    nnr_predict,
    nnr_train,
    peak_time_estimate,
    power_based_estimate,
    received_power,
    tansig,
    transmitted_power,
)
from mcdist.lsq import ExpCurveParams, LMOptions
from oracles import central_difference_jacobian, cgls, naive_network

TE = sorted(PUBLISHED_POWER_CURVES)


class TestMLR:
    def test_identity_feature(self):
        d = np.linspace(100, 200, 11)
        m = mlr_train(design_matrix(d[:, None]), d)
        assert np.allclose(m.theta, [0.0, 1.0], atol=1e-10)

    def test_hand_solved(self):
        m = mlr_train(np.array([[1, 0], [1, 1], [1, 2]], float), [1, 3, 5])
        assert np.allclose(m.theta, [1.0, 2.0], atol=1e-12)

    def test_duplicate_column(self):
        x = np.arange(10.0)
        with pytest.raises(RankDeficient):
            mlr_train(design_matrix(np.column_stack([x, x])), x)

    def test_underdetermined(self):
        with pytest.raises(RankDeficient):
            mlr_train(design_matrix(np.eye(2)), [1.0, 2.0])

    def test_requires_bias_column(self):
        with pytest.raises(DomainError):
            mlr_train(np.eye(3), [1.0, 2.0, 3.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_cgls_oracle(self, seed):
        rng = np.random.default_rng(seed)
        X = design_matrix(rng.normal(size=(50, 9)))
        y = X @ rng.normal(size=10) + rng.normal(scale=0.1, size=50)
        theta = mlr_train(X, y).theta
        oracle = cgls(X, y)
        assert np.max(np.abs(theta - oracle) / np.abs(oracle)) <= 1e-8

    def test_predict_spot_values(self):
        assert mlr_predict(LinearModel(np.zeros(3), ("a", "b")), [5.0, 6.0]) == 0.0
        assert mlr_predict(LinearModel([1.0, 2.0], ("x",)), [3.0]) == 7.0

    @given(
        theta=st.lists(st.floats(-10, 10), min_size=4, max_size=4),
        x1=st.lists(st.floats(-100, 100), min_size=3, max_size=3),
        x2=st.lists(st.floats(-100, 100), min_size=3, max_size=3),
    )
    def test_predict_is_affine(self, theta, x1, x2):
        m = LinearModel(theta, ("a", "b", "c"))
        lhs = mlr_predict(m, np.add(x1, x2))
        rhs = mlr_predict(m, x1) + mlr_predict(m, x2) - theta[0]
        assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + abs(lhs)))

    def test_predict_dimension(self):
        with pytest.raises(DimensionMismatch):
            mlr_predict(LinearModel([1.0, 2.0], ("x",)), [1.0, 2.0])

    def test_predict_matrix(self):
        m = LinearModel([1.0, 2.0], ("x",))
        assert np.array_equal(mlr_predict(m, np.array([[1.0], [2.0]])), [3.0, 5.0])


class TestNetwork:
    def test_tansig_identities(self):
        assert tansig(0.0) == 0.0
        assert tansig(50.0) == pytest.approx(1.0)
        z = np.linspace(-3, 3, 13)
        assert np.allclose(tansig(z), 2 / (1 + np.exp(-2 * z)) - 1, atol=1e-15)

    @pytest.mark.parametrize("p", [1, 3])
    def test_forward_matches_loop(self, p):
        rng = np.random.default_rng(p)
        X = rng.uniform(-1, 1, size=(7, 4))
        theta = rng.normal(size=n_weights(4, p))
        for out in ("tanh", "linear"):
            o, _ = nn_forward(theta, X, p, out)
            assert np.allclose(o, naive_network(theta, X, p, out), atol=1e-14)

    @pytest.mark.parametrize("output", ["tanh", "linear"])
    @pytest.mark.parametrize("p", [1, 2, 4])
    def test_jacobian_matches_finite_differences(self, output, p):
        rng = np.random.default_rng(10 + p)
        X = rng.uniform(-1, 1, size=(12, 9))
        t = rng.uniform(-0.8, 0.8, size=12)
        for _ in range(10):
            theta = rng.uniform(-1, 1, size=n_weights(9, p))
            J_fd = central_difference_jacobian(lambda th: t - nn_forward(th, X, p, output)[0], theta)
            J = nn_error_jacobian(theta, X, p, output)
            assert np.max(np.abs(J - J_fd)) / np.max(np.abs(J)) <= 1e-4

    def test_zero_weights_predict_midpoint(self):
        m = NeuralModel(2, 1, np.zeros(n_weights(2, 1)), [0, 0], [1, 1], 100.0, 200.0)
        assert nnr_predict(m, [0.3, 0.7]) == pytest.approx(150.0)

    def test_constant_target(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(30, 3))
        m = nnr_train(X, np.full(30, 150.0), seed=1)
        assert np.allclose(nnr_predict(m, X), 150.0, atol=1e-3)

    def test_fits_training_points(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(0, 1, size=(40, 2))
        y = 100 + 50 * X[:, 0] + 30 * X[:, 1] ** 2
        m = nnr_train(X, y, hidden_nodes=3, seed=4, opts=LMOptions(max_iters=300))
        err = nnr_predict(m, X) - y
        assert math.sqrt(np.mean(err**2)) < 1.0

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(size=(25, 4))
        y = X @ [1.0, 2.0, 3.0, 4.0]
        a = nnr_train(X, y, hidden_nodes=2, seed=9)
        b = nnr_train(X, y, hidden_nodes=2, seed=9)
        assert a.weights.tobytes() == b.weights.tobytes()

    def test_validation_keeps_best_weights(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(size=(60, 2))
        y = 100 + 100 * X[:, 0] + rng.normal(scale=5, size=60)
        m = nnr_train(X[:40], y[:40], hidden_nodes=4, seed=0, validation=(X[40:], y[40:]), patience=2)
        assert np.all(np.isfinite(m.weights))

    @given(x=st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3), seed=st.integers(0, 1000))
    def test_tanh_output_is_bounded(self, x, seed):
        w = np.random.default_rng(seed).normal(scale=5, size=n_weights(3, 2))
        m = NeuralModel(3, 2, w, [0, 0, 0], [1, 1, 1], 100.0, 200.0)
        y = nnr_predict(m, x)
        # +-1 output maps to the target range stretched by 1 / 0.8
        assert 100.0 - 12.5 - 1e-9 <= y <= 200.0 + 12.5 + 1e-9

    def test_dimension_mismatch(self):
        m = NeuralModel(2, 1, np.zeros(n_weights(2, 1)), [0, 0], [1, 1], 0.0, 1.0)
        with pytest.raises(DimensionMismatch):
            nnr_predict(m, [1.0, 2.0, 3.0])
        with pytest.raises(DimensionMismatch):
            nnr_train(np.ones((3, 2)), [1.0, 2.0])


class TestPower:
    def test_received_power(self):
        assert received_power(0.0, 5) == 0.0
        assert received_power(10.0, 4) == 2.5
        assert received_power(30.0, 4) == 3 * received_power(10.0, 4)
        with pytest.raises(DomainError):
            received_power(1.0, 0)

    def test_transmitted_power_of_rectangle(self):
        sens = SensorConfig(quantizer_bits=0, offset_level=0.3, record_duration=5.0)
        sig = simulate_transmitted_signal(sens, 0.5, 2.7, seed=0)
        assert transmitted_power(sig, 0.5) == pytest.approx(2.7**2, rel=1e-12)

    def test_transmitted_power_needs_pulse(self):
        sens = SensorConfig(quantizer_bits=0, record_duration=5.0)
        sig = simulate_transmitted_signal(sens, 0.5, 0.0, seed=0)
        with pytest.raises(DomainError):
            transmitted_power(sig, 0.5)


class TestCurveInversion:
    def test_power_at_a1_is_zero(self):
        assert power_based_estimate(2.724 * 7.0, 7.0, 2.724, -0.03116) == pytest.approx(0.0, abs=1e-12)

    def test_power_round_trip_150(self):
        ratio = 2.724 * math.exp(-0.03116 * 150)
        assert power_based_estimate(ratio, 1.0, 2.724, -0.03116) == pytest.approx(150.0, abs=1e-9)

    def test_peak_time_spot(self):
        t = 1.1259 * math.exp(0.0178 * 100)
        assert t == pytest.approx(6.676, abs=1e-3)
        assert peak_time_estimate(t, 1.1259, 0.0178) == pytest.approx(100.0, abs=1e-9)
        assert peak_time_estimate(1.1259, 1.1259, 0.0178) == 0.0

    @given(t1=st.floats(0.1, 100), t2=st.floats(0.1, 100))
    def test_peak_time_monotone(self, t1, t2):
        lo, hi = sorted((t1, t2))
        assert peak_time_estimate(lo, 1.1259, 0.0178) <= peak_time_estimate(hi, 1.1259, 0.0178)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            peak_time_estimate(0.0, 1.0, 0.01)
        with pytest.raises(DomainError):
            power_based_estimate(-1.0, 1.0, 1.0, -0.01)
        with pytest.raises(DegenerateRates):
            combined_estimate(1.0, 1.0, 1.0, 1.0, 0.02, 1.0, 0.02)

    def test_combined_at_origin(self):
        # P_R a2 = P_T t a1  ->  0
        assert combined_estimate(6.0, 2.0, 1.5, 2.0, -0.03, 1.0, 0.02) == pytest.approx(0.0, abs=1e-12)

    @given(
        d=st.floats(0, 300),
        a1=st.floats(0.1, 20),
        b1=st.floats(-0.06, -0.01),
        a2=st.floats(0.1, 5),
        b2=st.floats(0.01, 0.03),
        pt=st.floats(1, 20),
    )
    def test_estimators_agree_on_consistent_inputs(self, d, a1, b1, a2, b2, pt):
        P_R = pt * a1 * math.exp(b1 * d)
        t = a2 * math.exp(b2 * d)
        assert power_based_estimate(P_R, pt, a1, b1) == pytest.approx(d, abs=1e-9)
        assert peak_time_estimate(t, a2, b2) == pytest.approx(d, abs=1e-9)
        assert combined_estimate(P_R, pt, t, a1, b1, a2, b2) == pytest.approx(d, abs=1e-9)


class TestCurveParams:
    def test_published_lookup(self):
        p = CurveEstimatorParams.published()
        assert p.power_curve(0.5).a == 13.4001
        assert p.peaktime_curve(0.75 + 1e-12).b == 0.0221
        assert p.transmitted(0.25) == 7.3598

    def test_unknown_emission_time(self):
        with pytest.raises(UnknownEmissionTime):
            CurveEstimatorParams.published().estimate("peaktime", 0.3, t_peak=5.0)

    @pytest.mark.parametrize("te", TE)
    def test_round_trip_all_methods(self, te):
        p = CurveEstimatorParams.published()
        c1, c2, pt = PUBLISHED_POWER_CURVES[te], PUBLISHED_PEAKTIME_CURVES[te], p.transmitted(te)
        for d in range(0, 301, 10):
            P_R, t = pt * c1.a * math.exp(c1.b * d), c2.a * math.exp(c2.b * d)
            for method in ("power", "peaktime", "combined"):
                assert p.estimate(method, te, P_R=P_R, t_peak=t) == pytest.approx(d, abs=1e-9)

    def test_validation(self):
        with pytest.raises(ConfigError):
            CurveEstimatorParams(power={0.5: ExpCurveParams(1.0, 0.01)})
        with pytest.raises(ConfigError):
            CurveEstimatorParams(peaktime={0.5: ExpCurveParams(1.0, -0.01)})
        with pytest.raises(ConfigError):
            CurveEstimatorParams(tx_power={0.5: 0.0})

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            CurveEstimatorParams.published().estimate("sonar", 0.5)
