"""Distance estimators.

Two learned regressors (ordinary least squares and a one-hidden-layer
network trained by Levenberg-Marquardt) and three closed-form estimators
that invert exponential fits of received power and peak time against
distance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .channel import SampledSignal
from .errors import (
    ConfigError,
    DegenerateRates,
    DimensionMismatch,
    DomainError,
    NonFiniteLoss,
    NonFiniteResidual,
    RankDeficient,
    UnknownEmissionTime,
)
from .features import FEATURE_NAMES, ExtractionConfig, detection_threshold, estimate_offset
from .lsq import ExpCurveParams, LMOptions, lm_fit

logger = logging.getLogger(__name__)

# Published curve fits (a, b, rmse) keyed by emission time in seconds.
PUBLISHED_POWER_CURVES = {
    0.25: ExpCurveParams(2.724, -0.03116, 0.0096),
    0.5: ExpCurveParams(13.4001, -0.04146, 0.0211),
    0.75: ExpCurveParams(3.1888, -0.02973, 0.0171),
}
PUBLISHED_PEAKTIME_CURVES = {
    0.25: ExpCurveParams(1.1259, 0.0178, 6.6574),
    0.5: ExpCurveParams(0.2401, 0.0268, 9.1950),
    0.75: ExpCurveParams(0.5045, 0.0221, 7.7602),
}
# average transmitted power per emission time, V^2 (reported as W)
PUBLISHED_TX_POWER = {0.25: 7.3598, 0.5: 9.3666, 0.75: 11.0108}

TARGET_SPAN = 0.8


# ---------------------------------------------------------------------------
# multivariate linear regression


@dataclass(frozen=True)
class LinearModel:
    theta: np.ndarray
    feature_order: Tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).reshape(-1)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "feature_order", tuple(self.feature_order))
        if theta.size != len(self.feature_order) + 1:
            raise DimensionMismatch(
                f"{theta.size} coefficients for {len(self.feature_order)} features (+ bias)"
            )


def design_matrix(features) -> np.ndarray:
    F = np.atleast_2d(np.asarray(features, dtype=float))
    return np.column_stack((np.ones(F.shape[0]), F))


def mlr_train(X, d, feature_order: Optional[Sequence[str]] = None) -> LinearModel:
    """Least-squares coefficients for ``d ~ X theta``.

    ``X`` is the N x (m+1) design matrix whose first column is all ones.
    """
    X = np.asarray(X, dtype=float)
    d = np.asarray(d, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != d.size:
        raise DimensionMismatch(f"design matrix {X.shape} vs {d.size} targets")
    if not np.all(X[:, 0] == 1.0):
        raise DomainError("first design-matrix column must be the bias column of ones")
    if X.shape[0] < X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficient(f"design matrix {X.shape} has rank {np.linalg.matrix_rank(X)}")
    # same minimiser as (X^T X)^-1 X^T d without squaring the condition number
    theta, *_ = np.linalg.lstsq(X, d, rcond=None)
    if feature_order is None:
        m = X.shape[1] - 1
        feature_order = FEATURE_NAMES if m == len(FEATURE_NAMES) else tuple(f"x{j}" for j in range(1, m + 1))
    return LinearModel(theta, tuple(feature_order))


def mlr_predict(model: LinearModel, x):
    """``theta_0 + sum_j theta_j x_j``; accepts one vector or a row-per-sample matrix."""
    x = np.asarray(x, dtype=float)
    m = model.theta.size - 1
    if x.shape[-1] != m:
        raise DimensionMismatch(f"model expects {m} features, got {x.shape[-1]}")
    out = model.theta[0] + x @ model.theta[1:]
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# neural network regression


def tansig(z):
    """Hyperbolic tangent sigmoid ``2 / (1 + exp(-2z)) - 1``."""
    return np.tanh(z)


@dataclass(frozen=True)
class NeuralModel:
    """Single-hidden-layer network with its input/target scaling.

    Weights are packed as the hidden matrix ``(p, n+1)`` row by row (bias
    in column 0) followed by the output row ``(p+1,)`` (bias first).
    """

    n_inputs: int
    n_hidden: int
    weights: np.ndarray
    x_min: np.ndarray
    x_max: np.ndarray
    y_min: float
    y_max: float
    output_activation: str = "tanh"
    feature_order: Tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "x_min", np.array(self.x_min, dtype=float).reshape(-1))
        object.__setattr__(self, "x_max", np.array(self.x_max, dtype=float).reshape(-1))
        object.__setattr__(self, "feature_order", tuple(self.feature_order))
        if w.size != n_weights(self.n_inputs, self.n_hidden):
            raise DimensionMismatch(
                f"{w.size} weights for a {self.n_inputs}-{self.n_hidden}-1 network"
            )
        if self.x_min.size != self.n_inputs or self.x_max.size != self.n_inputs:
            raise DimensionMismatch("normalization ranges do not match the input count")
        if self.output_activation not in ("tanh", "linear"):
            raise ConfigError(f"unknown output activation {self.output_activation!r}")

    def normalize_inputs(self, X):
        return _scale_inputs(X, self.x_min, self.x_max)

    def denormalize(self, y_n):
        mid, half = _target_scale(self.y_min, self.y_max)
        return mid + half * np.asarray(y_n) / TARGET_SPAN


def n_weights(n: int, p: int) -> int:
    return (n + 1) * p + (p + 1)


def _scale_inputs(X, lo, hi):
    X = np.asarray(X, dtype=float)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, 2.0 * (X - lo) / safe - 1.0, 0.0)


def _target_scale(y_min, y_max):
    mid = 0.5 * (y_min + y_max)
    half = 0.5 * (y_max - y_min)
    return mid, (half if half > 0 else 1.0)


def _unpack(theta, n, p):
    k = (n + 1) * p
    return theta[:k].reshape(p, n + 1), theta[k:]


def nn_forward(theta, Xn, n_hidden, output="tanh"):
    """Return network output and hidden activations for normalized inputs."""
    Xn = np.atleast_2d(Xn)
    n = Xn.shape[1]
    W1, w2 = _unpack(theta, n, n_hidden)
    Xa = np.column_stack((np.ones(Xn.shape[0]), Xn))
    H = tansig(Xa @ W1.T)
    Ha = np.column_stack((np.ones(Xn.shape[0]), H))
    u = Ha @ w2
    o = tansig(u) if output == "tanh" else u
    return o, H


def nn_error_jacobian(theta, Xn, n_hidden, output="tanh"):
    """Backpropagated Jacobian of the pattern errors ``e = target - output``.

    Row ``i`` holds ``d e_i / d theta`` in the packed weight order.
    """
    Xn = np.atleast_2d(Xn)
    r, n = Xn.shape
    W1, w2 = _unpack(theta, n, n_hidden)
    o, H = nn_forward(theta, Xn, n_hidden, output)
    Xa = np.column_stack((np.ones(r), Xn))
    Ha = np.column_stack((np.ones(r), H))
    do_du = 1.0 - o * o if output == "tanh" else np.ones(r)
    d_out = do_du[:, None] * Ha
    # delta at each hidden unit, then outer product with the augmented input
    delta_h = do_du[:, None] * w2[None, 1:] * (1.0 - H * H)
    d_hid = (delta_h[:, :, None] * Xa[:, None, :]).reshape(r, -1)
    return -np.hstack((d_hid, d_out))


def nnr_train(
    features,
    distances,
    hidden_nodes: int = 1,
    opts: LMOptions | None = None,
    seed: int = 0,
    validation: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    patience: int = 6,
    output_activation: str = "tanh",
    feature_order: Optional[Sequence[str]] = None,
) -> NeuralModel:
    """Train a ``n-p-1`` tansig network with Levenberg-Marquardt.

    Inputs are min-max scaled to [-1, 1] and targets to [-0.8, 0.8] using
    the training set.  Weights start uniform on [-0.5, 0.5] from ``seed``.
    When ``validation`` is given, training stops once the validation error
    has not improved for ``patience`` accepted steps and the best weights
    seen are kept.
    """
    X = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(distances, dtype=float).reshape(-1)
    if X.shape[0] != y.size:
        raise DimensionMismatch(f"{X.shape[0]} patterns vs {y.size} targets")
    if hidden_nodes < 1:
        raise ConfigError("hidden_nodes must be >= 1")
    n = X.shape[1]
    p = hidden_nodes
    x_min, x_max = X.min(axis=0), X.max(axis=0)
    y_min, y_max = float(y.min()), float(y.max())
    mid, half = _target_scale(y_min, y_max)
    Xn = _scale_inputs(X, x_min, x_max)
    yn = TARGET_SPAN * (y - mid) / half

    rng = np.random.default_rng(seed)
    theta0 = rng.uniform(-0.5, 0.5, size=n_weights(n, p))

    def residuals(theta):
        return yn - nn_forward(theta, Xn, p, output_activation)[0]

    def jacobian(theta):
        return nn_error_jacobian(theta, Xn, p, output_activation)

    callback = None
    best = {"theta": theta0.copy(), "loss": math.inf, "stale": 0}
    if validation is not None:
        Xv = _scale_inputs(np.atleast_2d(np.asarray(validation[0], dtype=float)), x_min, x_max)
        yv = TARGET_SPAN * (np.asarray(validation[1], dtype=float).reshape(-1) - mid) / half

        def val_loss(theta):
            ev = yv - nn_forward(theta, Xv, p, output_activation)[0]
            return 0.5 * float(ev @ ev)

        best["loss"] = val_loss(theta0)

        def callback(it, theta, cost):
            loss = val_loss(theta)
            if loss < best["loss"]:
                best.update(theta=theta.copy(), loss=loss, stale=0)
            else:
                best["stale"] += 1
            return best["stale"] >= patience

    try:
        res = lm_fit(residuals, jacobian, theta0, opts or LMOptions(), callback=callback)
    except NonFiniteResidual as exc:
        raise NonFiniteLoss(str(exc)) from exc
    theta = best["theta"] if validation is not None else res.params
    if not np.all(np.isfinite(theta)):
        raise NonFiniteLoss("training produced non-finite weights")
    order = tuple(feature_order) if feature_order is not None else (
        FEATURE_NAMES if n == len(FEATURE_NAMES) else tuple(f"x{j}" for j in range(1, n + 1))
    )
    return NeuralModel(n, p, theta, x_min, x_max, y_min, y_max, output_activation, order)


def nnr_predict(model: NeuralModel, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.n_inputs:
        raise DimensionMismatch(f"model expects {model.n_inputs} inputs, got {x.shape[-1]}")
    o, _ = nn_forward(model.weights, model.normalize_inputs(np.atleast_2d(x)), model.n_hidden, model.output_activation)
    out = model.denormalize(o)
    return float(out[0]) if x.ndim == 1 else out


# ---------------------------------------------------------------------------
# curve-inversion estimators


def received_power(E_R: float, N_R: int) -> float:
    if N_R < 1:
        raise DomainError("N_R must be >= 1")
    return E_R / N_R


def transmitted_power(sig: SampledSignal, T_e: float, cfg: ExtractionConfig | None = None) -> float:
    """Mean squared offset-removed voltage over the emission window.

    The window opens at the first raw sample above the detection threshold
    and lasts ``T_e`` seconds (at least one sample).
    """
    cfg = cfg or ExtractionConfig()
    A_o = estimate_offset(sig, cfg.offset_samples)
    K = detection_threshold(A_o, cfg.threshold_margin)
    above = np.flatnonzero(sig.samples > K)
    if above.size == 0:
        raise DomainError(f"transmitted signal {sig.trial_id!r} never exceeds the threshold")
    start = int(above[0])
    width = max(1, int(round(T_e / sig.dt)))
    seg = sig.samples[start : start + width] - A_o
    return float(np.mean(seg * seg))


def _log_ratio(num, den):
    if not (num > 0 and den > 0):
        raise DomainError(f"logarithm argument {num}/{den} is not positive")
    return math.log(num / den)


def power_based_estimate(P_R, P_T, a1, b1) -> float:
    """``(1/b1) ln(P_R / (P_T a1))``."""
    if b1 == 0:
        raise DomainError("b1 must be nonzero")
    if not (P_T > 0 and a1 > 0):
        raise DomainError("P_T and a1 must be positive")
    return _log_ratio(P_R, P_T * a1) / b1


def peak_time_estimate(t_peak, a2, b2) -> float:
    """``(1/b2) ln(t_peak / a2)``."""
    if b2 == 0:
        raise DomainError("b2 must be nonzero")
    return _log_ratio(t_peak, a2) / b2


def combined_estimate(P_R, P_T, t_peak, a1, b1, a2, b2) -> float:
    """``(1/(b1-b2)) ln(P_R a2 / (P_T t_peak a1))``."""
    if b1 == b2:
        raise DegenerateRates("b1 == b2: the power and peak-time curves carry the same rate")
    if not (P_T > 0 and t_peak > 0 and a1 > 0):
        raise DomainError("P_T, t_peak and a1 must be positive")
    return _log_ratio(P_R * a2, P_T * t_peak * a1) / (b1 - b2)


def _te_key(T_e: float) -> float:
    return round(float(T_e), 9)


@dataclass
class CurveEstimatorParams:
    """Per-emission-time curve fits and average transmitted power."""

    power: Dict[float, ExpCurveParams] = field(default_factory=dict)
    peaktime: Dict[float, ExpCurveParams] = field(default_factory=dict)
    tx_power: Dict[float, float] = field(default_factory=dict)

    def __post_init__(self):
        self.power = {_te_key(k): v for k, v in self.power.items()}
        self.peaktime = {_te_key(k): v for k, v in self.peaktime.items()}
        self.tx_power = {_te_key(k): float(v) for k, v in self.tx_power.items()}
        for te, c in self.power.items():
            if not c.b < 0:
                raise ConfigError(f"power curve for T_e={te} must decay (b1 < 0), got b1={c.b}")
        for te, c in self.peaktime.items():
            if not c.b > 0:
                raise ConfigError(f"peak-time curve for T_e={te} must grow (b2 > 0), got b2={c.b}")
        for te, pt in self.tx_power.items():
            if not pt > 0:
                raise ConfigError(f"transmitted power for T_e={te} must be > 0")

    @classmethod
    def published(cls) -> "CurveEstimatorParams":
        return cls(dict(PUBLISHED_POWER_CURVES), dict(PUBLISHED_PEAKTIME_CURVES), dict(PUBLISHED_TX_POWER))

    @staticmethod
    def _lookup(table: Mapping[float, object], T_e: float, what: str):
        try:
            return table[_te_key(T_e)]
        except KeyError:
            raise UnknownEmissionTime(
                f"no {what} for T_e={T_e}; known: {sorted(table)}"
            ) from None

    def power_curve(self, T_e):
        return self._lookup(self.power, T_e, "power curve")

    def peaktime_curve(self, T_e):
        return self._lookup(self.peaktime, T_e, "peak-time curve")

    def transmitted(self, T_e):
        return self._lookup(self.tx_power, T_e, "transmitted power")

    def estimate(self, method: str, T_e: float, *, P_R=None, t_peak=None) -> float:
        if method == "power":
            c = self.power_curve(T_e)
            return power_based_estimate(P_R, self.transmitted(T_e), c.a, c.b)
        if method == "peaktime":
            c = self.peaktime_curve(T_e)
            return peak_time_estimate(t_peak, c.a, c.b)
        if method == "combined":
            c1, c2 = self.power_curve(T_e), self.peaktime_curve(T_e)
            return combined_estimate(P_R, self.transmitted(T_e), t_peak, c1.a, c1.b, c2.a, c2.b)
        raise ConfigError(f"unknown curve method {method!r}")


CURVE_METHODS = ("power", "peaktime", "combined")
