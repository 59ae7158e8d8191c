"""Readers and writers for features, curve parameters, models, predictions and reports.

All numeric text is written with 17 significant digits (model files use
hexadecimal floats), so every writer/reader pair is an exact round trip.
"""

from __future__ import annotations

import csv
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .dataset import fmt
from .errors import ParseError
from .estimators import CurveEstimatorParams, LinearModel, NeuralModel
from .evaluation import EvaluationReport
from .features import FeatureRecord, FeatureVector
from .lsq import ExpCurveParams

FEATURE_HEADER = [
    "trial_id",
    "t_low_s",
    "c_low_v",
    "r_s",
    "delta_c_v",
    "g_v_per_s",
    "t_peak_s",
    "c_peak_v",
    "e_r_v2",
    "emission_time_s",
    "distance_cm",
    "n_r",
]
PARAMS_HEADER = ["model_name", "emission_time_s", "a", "b", "rmse"]
PREDICTION_HEADER = ["trial_id", "emission_time_s", "distance_cm", "estimate_cm", "status"]
MODEL_MAGIC = "mcdist-model"
MODEL_VERSION = 1


def _writer(f):
    return csv.writer(f, lineterminator="\n")


def _rows(path, expected: Sequence[str], optional_tail: int = 0):
    """Yield ``(lineno, row)`` after checking the header.

    The last ``optional_tail`` columns of ``expected`` may be absent from
    the file (rows are then padded with empty strings).
    """
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise ParseError("file is empty; expected a header row", path, 1)
        header = [h.strip() for h in header]
        ncols = len(header)
        if header != list(expected[:ncols]) or ncols < len(expected) - optional_tail:
            raise ParseError(f"header {header} does not match {list(expected)}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != ncols:
                raise ParseError(f"expected {ncols} columns, got {len(row)}", path, lineno)
            yield lineno, row + [""] * (len(expected) - ncols)


def _num(path, lineno, text):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"bad number {text!r}", path, lineno) from None


# features -----------------------------------------------------------------


def write_features(path, records: Iterable[FeatureRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = _writer(f)
        w.writerow(FEATURE_HEADER)
        for r in sorted(records, key=lambda r: r.trial_id):
            v = r.features
            w.writerow(
                [r.trial_id]
                + [fmt(x) for x in (v.t_low, v.c_low, v.rise_time, v.delta_c, v.gradient,
                                    v.t_peak, v.c_peak, v.energy, v.emission_time)]
                + [fmt(r.distance), str(v.n_r)]
            )


def read_features(path) -> List[FeatureRecord]:
    out = []
    for lineno, row in _rows(path, FEATURE_HEADER, optional_tail=1):
        vals = [_num(path, lineno, x) for x in row[1:10]]
        dist = _num(path, lineno, row[10]) if row[10].strip() else None
        try:
            n_r = int(row[11]) if row[11].strip() else 0
        except ValueError:
            raise ParseError(f"bad n_r {row[11]!r}", path, lineno) from None
        out.append(FeatureRecord(row[0], FeatureVector(*vals, n_r=n_r), dist))
    return out


# curve parameters -----------------------------------------------------------


def write_params(path, params: CurveEstimatorParams) -> None:
    """Rows ``power`` / ``peaktime`` carry (a, b, rmse); ``tx_power`` rows carry the average P_T in ``a``."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = _writer(f)
        w.writerow(PARAMS_HEADER)
        for name, table in (("power", params.power), ("peaktime", params.peaktime)):
            for te in sorted(table):
                c = table[te]
                w.writerow([name, fmt(te), fmt(c.a), fmt(c.b), fmt(c.rmse)])
        for te in sorted(params.tx_power):
            w.writerow(["tx_power", fmt(te), fmt(params.tx_power[te]), "", ""])


def read_params(path) -> CurveEstimatorParams:
    power, peak, tx = {}, {}, {}
    for lineno, row in _rows(path, PARAMS_HEADER):
        name = row[0].strip()
        te = _num(path, lineno, row[1])
        if name == "tx_power":
            tx[te] = _num(path, lineno, row[2])
        elif name in ("power", "peaktime"):
            c = ExpCurveParams(*(_num(path, lineno, x) for x in row[2:5]))
            (power if name == "power" else peak)[te] = c
        else:
            raise ParseError(f"unknown model_name {name!r}", path, lineno)
    return CurveEstimatorParams(power, peak, tx)


# models -------------------------------------------------------------------


def _hex(values) -> str:
    return " ".join(float(v).hex() for v in np.atleast_1d(values))


def _unhex(text) -> np.ndarray:
    return np.array([float.fromhex(t) for t in text.split()], dtype=float)


def write_model(path, model) -> None:
    """Versioned ``key value`` text; floats in hexadecimal notation."""
    lines = [f"{MODEL_MAGIC} {MODEL_VERSION}"]
    if isinstance(model, LinearModel):
        lines += ["kind mlr", "feature_order " + ",".join(model.feature_order), "theta " + _hex(model.theta)]
    elif isinstance(model, NeuralModel):
        lines += [
            "kind nnr",
            "feature_order " + ",".join(model.feature_order),
            f"layers {model.n_inputs} {model.n_hidden} 1",
            f"output_activation {model.output_activation}",
            "x_min " + _hex(model.x_min),
            "x_max " + _hex(model.x_max),
            "y_range " + _hex([model.y_min, model.y_max]),
            "weights " + _hex(model.weights),
        ]
    elif isinstance(model, CurveEstimatorParams):
        lines.append("kind curves")
        for name, table in (("power", model.power), ("peaktime", model.peaktime)):
            for te in sorted(table):
                c = table[te]
                lines.append(f"{name} " + _hex([te, c.a, c.b, c.rmse]))
        for te in sorted(model.tx_power):
            lines.append("tx_power " + _hex([te, model.tx_power[te]]))
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_model(path):
    with open(path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or lines[0].split() != [MODEL_MAGIC, str(MODEL_VERSION)]:
        raise ParseError(f"not a version-{MODEL_VERSION} model file", path, 1)
    kv: Dict[str, str] = {}
    multi: List[Tuple[int, str, str]] = []
    for lineno, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        key, _, value = ln.partition(" ")
        if key in ("power", "peaktime", "tx_power"):
            multi.append((lineno, key, value))
        else:
            kv[key] = value
    kind = kv.get("kind")
    try:
        if kind == "mlr":
            return LinearModel(_unhex(kv["theta"]), tuple(kv["feature_order"].split(",")))
        if kind == "nnr":
            n, p, _ = (int(x) for x in kv["layers"].split())
            y_min, y_max = _unhex(kv["y_range"])
            return NeuralModel(
                n, p, _unhex(kv["weights"]), _unhex(kv["x_min"]), _unhex(kv["x_max"]),
                float(y_min), float(y_max), kv["output_activation"].strip(),
                tuple(kv["feature_order"].split(",")),
            )
        if kind == "curves":
            power, peak, tx = {}, {}, {}
            for lineno, key, value in multi:
                vals = _unhex(value)
                if key == "tx_power":
                    tx[float(vals[0])] = float(vals[1])
                else:
                    (power if key == "power" else peak)[float(vals[0])] = ExpCurveParams(*map(float, vals[1:4]))
            return CurveEstimatorParams(power, peak, tx)
    except (KeyError, ValueError) as exc:
        raise ParseError(f"malformed {kind} model: {exc}", path) from None
    raise ParseError(f"unknown model kind {kind!r}", path)


# predictions and reports --------------------------------------------------


def write_predictions(path, rows) -> None:
    """``rows``: iterables of (trial_id, T_e, distance or None, estimate or None, status)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = _writer(f)
        w.writerow(PREDICTION_HEADER)
        for tid, te, d, est, status in sorted(rows, key=lambda r: r[0]):
            w.writerow([tid, fmt(te), fmt(d), fmt(est), status])


def read_predictions(path):
    out = []
    for lineno, row in _rows(path, PREDICTION_HEADER):
        out.append((
            row[0],
            _num(path, lineno, row[1]),
            _num(path, lineno, row[2]) if row[2] else None,
            _num(path, lineno, row[3]) if row[3] else None,
            row[4],
        ))
    return out


def write_report(prefix, report: EvaluationReport) -> List[str]:
    """Write ``<prefix>_summary.csv``, ``_per_distance.csv`` and ``_trials.csv``."""
    paths = [f"{prefix}_summary.csv", f"{prefix}_per_distance.csv", f"{prefix}_trials.csv"]
    with open(paths[0], "w", newline="", encoding="utf-8") as f:
        w = _writer(f)
        w.writerow(["method", "rmse_cm", "trials", "excluded", "seed", "split_train", "split_val", "split_test"])
        w.writerow([report.method, fmt(report.rmse), report.trials, report.excluded,
                    "" if report.seed is None else report.seed, *(fmt(s) for s in report.split)])
    with open(paths[1], "w", newline="", encoding="utf-8") as f:
        w = _writer(f)
        w.writerow(["method", "distance_cm", "count", "mean_cm", "std_cm", "mape_pct"])
        for s in report.per_distance:
            w.writerow([report.method, fmt(s.distance), s.count, fmt(s.mean), fmt(s.std), fmt(s.mape)])
    with open(paths[2], "w", newline="", encoding="utf-8") as f:
        w = _writer(f)
        w.writerow(["trial", "trial_id", "distance_cm", "estimate_cm"])
        for r in report.records:
            w.writerow([r.trial, r.trial_id, fmt(r.distance), fmt(r.estimate)])
    return paths


def write_velocity_profile(path, per_te, overall) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = _writer(f)
        w.writerow(["emission_time_s", "distance_cm", "mean_velocity_cm_per_s"])
        for te, ds in per_te.items():
            for d, v in ds.items():
                w.writerow([fmt(te), fmt(d), fmt(v)])
        for d, v in overall.items():
            w.writerow(["mean", fmt(d), fmt(v)])
