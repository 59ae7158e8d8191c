"""Levenberg-Marquardt nonlinear least squares and exponential curve fits."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, NonFiniteResidual, SingularNormalMatrix

logger = logging.getLogger(__name__)

MU_MAX = 1e16


@dataclass(frozen=True)
class LMOptions:
    """Solver settings.

    ``cost_tol`` applies to ``E = 0.5 * sum(e**2)``; ``step_tol`` is relative
    to the parameter norm.  ``mode`` is ``"lm"`` or ``"gauss-newton"``.
    """

    mu0: float = 1e-3
    gamma: float = 10.0
    max_iters: int = 500
    cost_tol: float = 1e-12
    step_tol: float = 1e-10
    mode: str = "lm"

    def __post_init__(self):
        if not self.gamma > 1:
            raise ConfigError("gamma must be > 1")
        if not self.mu0 > 0:
            raise ConfigError("mu0 must be > 0")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.mode not in ("lm", "gauss-newton"):
            raise ConfigError(f"unknown mode {self.mode!r}")


@dataclass
class FitResult:
    params: np.ndarray
    final_cost: float
    iterations: int
    converged: bool
    residual_rmse: float
    reason: str = ""
    cost_history: list = field(default_factory=list)


def _cost(e):
    return 0.5 * float(np.dot(e, e))


def _eval(residuals, theta):
    e = np.asarray(residuals(theta), dtype=float).reshape(-1)
    if not np.all(np.isfinite(e)):
        raise NonFiniteResidual(f"non-finite residual at parameters {theta!r}")
    return e


def lm_fit(
    residuals: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    theta0: Sequence[float],
    opts: LMOptions | None = None,
    callback: Callable[[int, np.ndarray, float], bool] | None = None,
) -> FitResult:
    """Minimise ``0.5 * ||e(theta)||^2`` with damped Gauss-Newton steps.

    Each step solves ``(J^T J + mu I) delta = J^T e`` and proposes
    ``theta - delta``.  A step that lowers the cost is accepted and ``mu`` is
    divided by ``gamma``; otherwise ``mu`` is multiplied by ``gamma`` and the
    step is recomputed.  In Gauss-Newton mode ``mu`` stays at zero and every
    step is taken.

    A trial point with non-finite residuals counts as a rejected step; only
    a non-finite start (or any non-finite point in Gauss-Newton mode) raises
    :class:`NonFiniteResidual`.

    ``callback(iteration, theta, cost)`` runs after every accepted step;
    returning True stops the fit (used for validation early stopping).
    """
    opts = opts or LMOptions()
    gn = opts.mode == "gauss-newton"
    theta = np.array(theta0, dtype=float).reshape(-1)
    if not np.all(np.isfinite(theta)):
        raise DomainError("initial parameters must be finite")
    e = _eval(residuals, theta)
    cost = _cost(e)
    history = [cost]
    mu = 0.0 if gn else opts.mu0
    n = theta.size
    eye = np.eye(n)
    accepted = 0
    reason = "max_iters"
    converged = False

    for _ in range(opts.max_iters):
        if cost <= opts.cost_tol:
            reason, converged = "cost_tol", True
            break
        J = np.asarray(jacobian(theta), dtype=float)
        if J.shape != (e.size, n):
            raise DomainError(f"jacobian shape {J.shape} != ({e.size}, {n})")
        JtJ = J.T @ J
        g = J.T @ e
        step_taken = False
        while True:
            try:
                delta = np.linalg.solve(JtJ + mu * eye, g)
                ok = np.all(np.isfinite(delta))
            except np.linalg.LinAlgError:
                ok = False
            if not ok:
                if gn:
                    raise SingularNormalMatrix("J^T J is singular (Gauss-Newton mode)")
                mu = max(mu * opts.gamma, opts.mu0)
                if mu > MU_MAX:
                    raise SingularNormalMatrix("normal matrix singular after damping escalation")
                continue
            if np.linalg.norm(delta) <= opts.step_tol * (np.linalg.norm(theta) + opts.step_tol):
                reason, converged = "step_tol", True
                break
            trial = theta - delta
            if gn:
                e_new = _eval(residuals, trial)
                c_new = _cost(e_new)
            else:
                # an overflowing trial step is rejected like any uphill step
                with np.errstate(over="ignore", invalid="ignore"):
                    e_new = np.asarray(residuals(trial), dtype=float).reshape(-1)
                c_new = _cost(e_new) if np.all(np.isfinite(e_new)) else np.inf
            if gn or c_new < cost:
                theta, e, cost = trial, e_new, c_new
                if not gn:
                    mu /= opts.gamma
                step_taken = True
                break
            mu *= opts.gamma
            if mu > MU_MAX:
                reason, converged = "mu_max", True
                break
        if not step_taken:
            break
        accepted += 1
        history.append(cost)
        if callback is not None and callback(accepted, theta, cost):
            reason, converged = "callback", True
            break
    else:
        if cost <= opts.cost_tol:
            reason, converged = "cost_tol", True

    logger.debug("lm_fit stop=%s iters=%d cost=%.3e", reason, accepted, cost)
    return FitResult(
        params=theta,
        final_cost=cost,
        iterations=accepted,
        converged=converged,
        residual_rmse=float(np.sqrt(2.0 * cost / e.size)) if e.size else 0.0,
        reason=reason,
        cost_history=history,
    )


@dataclass(frozen=True)
class ExpCurveParams:
    """``y = a * exp(b * d)`` with the RMSE of the fit over the supplied points."""

    a: float
    b: float
    rmse: float = 0.0

    def __call__(self, d):
        return self.a * np.exp(self.b * np.asarray(d, dtype=float))


def exp_model_jacobian(theta, d):
    """Jacobian of the residuals ``y - a exp(b d)`` with respect to ``(a, b)``."""
    a, b = theta
    ebd = np.exp(b * d)
    return np.column_stack((-ebd, -a * d * ebd))


def fit_exponential(
    points,
    theta0=None,
    opts: LMOptions | None = None,
    prepend_origin: bool = False,
) -> ExpCurveParams:
    """Fit ``y = a e^{b d}`` to ``(d, y)`` pairs.

    With ``prepend_origin`` the point ``(0, 0)`` joins the fit; the reported
    RMSE still covers only the supplied points.  The default start is
    ``(1, -0.01)`` for falling data and ``(1, 0.01)`` for rising data.

    Without explicit options the fit ignores the absolute cost threshold and
    runs until the step stalls: curve data can be small enough in magnitude
    that ``E < 1e-12`` is reached long before the parameters settle.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise DomainError("need at least two (d, y) points")
    d, y = pts[:, 0], pts[:, 1]
    if theta0 is None:
        slope = np.polyfit(d, y, 1)[0] if np.ptp(d) > 0 else 0.0
        theta0 = (1.0, 0.01 if slope > 0 else -0.01)
    dd, yy = (np.concatenate(([0.0], d)), np.concatenate(([0.0], y))) if prepend_origin else (d, y)

    def residuals(theta):
        return yy - theta[0] * np.exp(theta[1] * dd)

    if opts is None:
        opts = LMOptions(cost_tol=0.0)
    res = lm_fit(residuals, lambda th: exp_model_jacobian(th, dd), theta0, opts)
    a, b = (float(v) for v in res.params)
    rmse = float(np.sqrt(np.mean((y - a * np.exp(b * d)) ** 2)))
    return ExpCurveParams(a, b, rmse)
