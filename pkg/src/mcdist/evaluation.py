"""Error metrics, the Monte-Carlo split/train/test harness and velocity profiles."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, InsufficientData, MCDistError
from .estimators import (
    CurveEstimatorParams,
    design_matrix,
    mlr_predict,
    mlr_train,
    nnr_predict,
    nnr_train,
)
from .features import FeatureRecord
from .lsq import LMOptions

logger = logging.getLogger(__name__)

DEFAULT_SPLITS = {"mlr": (0.70, 0.0, 0.30), "nnr": (0.70, 0.15, 0.15)}


def rmse(estimates, actuals) -> float:
    est = np.asarray(estimates, dtype=float).reshape(-1)
    act = np.asarray(actuals, dtype=float).reshape(-1)
    if est.size != act.size:
        raise DomainError(f"{est.size} estimates vs {act.size} actual values")
    if est.size == 0:
        raise DomainError("rmse of an empty set")
    diff = est - act
    return math.sqrt(float(np.dot(diff, diff)) / diff.size)


def mape_per_distance(estimates, actual_d: float) -> float:
    """Mean absolute percentage error of estimates that share one true distance."""
    est = np.asarray(estimates, dtype=float).reshape(-1)
    if est.size == 0:
        raise DomainError("no estimates")
    if not actual_d > 0:
        raise DomainError("actual distance must be > 0")
    return 100.0 * float(np.mean(np.abs(est - actual_d))) / actual_d


def average_velocity(d: float, t_peak: float) -> float:
    if not t_peak > 0:
        raise DomainError("t_peak must be > 0")
    return d / t_peak


@dataclass(frozen=True)
class TrialRecord:
    """One estimate: Monte-Carlo trial index (0 for whole-set methods)."""

    trial: int
    trial_id: str
    distance: float
    estimate: float


@dataclass(frozen=True)
class DistanceStats:
    distance: float
    count: int
    mean: float
    std: float
    mape: float


@dataclass
class EvaluationReport:
    method: str
    rmse: float
    per_distance: List[DistanceStats]
    trials: int
    seed: Optional[int]
    split: Tuple[float, float, float] = (1.0, 0.0, 0.0)
    excluded: int = 0
    trial_rmse: List[float] = field(default_factory=list)
    records: List[TrialRecord] = field(default_factory=list)

    def recompute(self) -> "EvaluationReport":
        """Rebuild the aggregates from the embedded per-trial records."""
        return _aggregate(self.method, self.records, self.trials, self.seed, self.split, self.excluded)


def _per_distance(records: Sequence[TrialRecord]) -> List[DistanceStats]:
    groups = defaultdict(list)
    for r in records:
        groups[r.distance].append(r.estimate)
    out = []
    for d in sorted(groups):
        est = np.array(groups[d])
        out.append(DistanceStats(d, est.size, float(est.mean()), float(est.std()), mape_per_distance(est, d)))
    return out


def _aggregate(method, records, trials, seed, split, excluded) -> EvaluationReport:
    by_trial = defaultdict(list)
    for r in records:
        by_trial[r.trial].append(r)
    trial_rmse = [
        rmse([r.estimate for r in rs], [r.distance for r in rs]) for _, rs in sorted(by_trial.items())
    ]
    overall = float(np.mean(trial_rmse)) if trial_rmse else math.nan
    return EvaluationReport(
        method=method,
        rmse=overall,
        per_distance=_per_distance(records),
        trials=trials,
        seed=seed,
        split=tuple(split),
        excluded=excluded,
        trial_rmse=trial_rmse,
        records=list(records),
    )


def trial_seed(seed: int, index: int) -> np.random.SeedSequence:
    """Seed for Monte-Carlo trial ``index``; a pure function of its arguments."""
    return np.random.SeedSequence([int(seed), int(index)])


def _matrices(dataset: Sequence[FeatureRecord]):
    X = np.array([r.features.as_inputs() for r in dataset])
    y = np.array([r.distance for r in dataset], dtype=float)
    if np.any(~np.isfinite(y)):
        raise DomainError("every record needs a true distance")
    return X, y


def _split_sizes(n: int, split):
    f_train, f_val, _ = split
    n_train = int(round(f_train * n))
    n_val = int(round(f_val * n))
    return n_train, n_val, n - n_train - n_val


def _run_trial(index, X, y, ids, method, split, seed, hidden, opts, patience):
    rng = np.random.default_rng(trial_seed(seed, index))
    perm = rng.permutation(y.size)
    n_train, n_val, _ = _split_sizes(y.size, split)
    tr, va, te = perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :]
    if method == "mlr":
        model = mlr_train(design_matrix(X[tr]), y[tr])
        pred = mlr_predict(model, X[te])
    else:
        validation = (X[va], y[va]) if va.size else None
        weight_seed = int(rng.integers(0, 2**63 - 1))
        model = nnr_train(X[tr], y[tr], hidden, opts, weight_seed, validation, patience)
        pred = nnr_predict(model, X[te])
    return [TrialRecord(index, ids[k], float(y[k]), float(p)) for k, p in zip(te, np.atleast_1d(pred))]


def monte_carlo_evaluate(
    dataset: Sequence[FeatureRecord],
    method: str,
    trials: int,
    split: Optional[Tuple[float, float, float]] = None,
    seed: int = 0,
    hidden_nodes: int = 1,
    opts: LMOptions | None = None,
    patience: int = 6,
    workers: int = 1,
) -> EvaluationReport:
    """Repeat shuffle / split / train / test ``trials`` times.

    ``split`` is (train, validation, test) fractions; the validation part is
    used only by the network for early stopping.  Trial ``i`` draws its
    shuffle from ``SeedSequence([seed, i])``, so worker count and scheduling
    never change the report.
    """
    method = method.lower()
    if method not in DEFAULT_SPLITS:
        raise DomainError(f"unknown learned method {method!r}")
    split = tuple(split) if split is not None else DEFAULT_SPLITS[method]
    if len(split) != 3 or min(split) < 0 or not math.isclose(sum(split), 1.0):
        raise DomainError(f"split fractions {split} must be three non-negative values summing to 1")
    if trials < 1:
        raise DomainError("trials must be >= 1")
    X, y = _matrices(dataset)
    ids = [r.trial_id for r in dataset]
    n_train, n_val, n_test = _split_sizes(y.size, split)
    need = X.shape[1] + 2 if method == "mlr" else 2
    if n_train < need or n_test < 1:
        raise InsufficientData(
            f"{y.size} records give {n_train} training / {n_test} test rows; need >= {need} / 1"
        )
    run = partial(
        _run_trial, X=X, y=y, ids=ids, method=method, split=split, seed=seed,
        hidden=hidden_nodes, opts=opts, patience=patience,
    )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, range(trials), chunksize=max(1, trials // (4 * workers))))
    else:
        chunks = [run(i) for i in range(trials)]
    records = [r for chunk in chunks for r in chunk]
    return _aggregate(method, records, trials, seed, split, 0)


def evaluate_data_analysis(
    dataset: Sequence[FeatureRecord],
    params: CurveEstimatorParams,
    method: str,
) -> EvaluationReport:
    """Apply a closed-form estimator to every record (no train/test split).

    Records whose estimate is undefined (non-positive logarithm argument,
    unknown emission time) are skipped and counted in ``excluded``.
    """
    records = []
    excluded = 0
    for rec in dataset:
        f = rec.features
        try:
            P_R = f.received_power if method in ("power", "combined") else None
            d_hat = params.estimate(method, f.emission_time, P_R=P_R, t_peak=f.t_peak)
        except MCDistError as exc:
            logger.info("excluding %s: %s", rec.trial_id, exc)
            excluded += 1
            continue
        records.append(TrialRecord(0, rec.trial_id, float(rec.distance), d_hat))
    if not records:
        raise InsufficientData(f"all {excluded} records were excluded")
    return _aggregate(method, records, 1, None, (0.0, 0.0, 1.0), excluded)


def velocity_profile(dataset: Sequence[FeatureRecord]):
    """Mean ``d / t_peak`` per (emission time, distance) and the mean over emission times.

    Returns ``(per_te, overall)`` where ``per_te[T_e][d]`` is a mean velocity
    and ``overall[d]`` averages the per-emission-time values at ``d``.
    """
    acc = defaultdict(lambda: defaultdict(list))
    for rec in dataset:
        te = round(rec.features.emission_time, 9)
        acc[te][rec.distance].append(average_velocity(rec.distance, rec.features.t_peak))
    per_te = {te: {d: float(np.mean(v)) for d, v in sorted(ds.items())} for te, ds in sorted(acc.items())}
    dists = sorted({d for ds in per_te.values() for d in ds})
    overall = {d: float(np.mean([ds[d] for ds in per_te.values() if d in ds])) for d in dists}
    return per_te, overall
