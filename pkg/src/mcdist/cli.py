"""Command-line pipeline: simulate, extract, fit-curves, train, estimate, evaluate, velocity-profile.

Every run exits 0 when all requested outputs were written.  Run-level
failures print one machine-readable line ``ERROR <ErrorClass>: <message>``
on stderr and exit 1; argument errors exit 2.  Trial-level extraction or
estimation failures are logged per trial and do not fail the run.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from collections import defaultdict
from dataclasses import replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import config as C
from . import formats
from .channel import simulate_transmitted_signal
from .dataset import Dataset, fmt, generate_design, load_dataset, save_dataset
from .errors import ConfigError, InsufficientData, MCDistError
from .estimators import (
    CURVE_METHODS,
    PUBLISHED_TX_POWER,
    CurveEstimatorParams,
    LinearModel,
    NeuralModel,
    design_matrix,
    mlr_predict,
    mlr_train,
    nnr_predict,
    nnr_train,
    transmitted_power,
)
from .evaluation import DEFAULT_SPLITS, evaluate_data_analysis, monte_carlo_evaluate, velocity_profile
from .features import FeatureRecord, extract_features
from .lsq import fit_exponential

logger = logging.getLogger("mcdist")

LEARNED_METHODS = tuple(DEFAULT_SPLITS)
TX_RECORD = 10.0  # seconds recorded per transmitted pulse


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, cfg) -> None:
    ds = generate_design(C.design_from(cfg), C.channel_from(cfg), C.sensor_from(cfg), cfg["seed"])
    save_dataset(ds, args.signals, args.labels)
    logger.info("wrote %d trials to %s", len(ds), args.signals)
    if args.tx_signals:
        sens = replace(C.sensor_from(cfg), record_duration=TX_RECORD)
        tx = []
        for index, sig in enumerate(ds):
            s = int(np.random.SeedSequence([cfg["seed"], index, 1]).generate_state(1, dtype=np.uint64)[0])
            tx.append(simulate_transmitted_signal(sens, sig.emission_time, cfg["tx_amplitude"], s, trial_id=sig.trial_id))
        save_dataset(Dataset(tx), args.tx_signals, args.tx_labels)


def cmd_extract(args, cfg) -> None:
    ds = load_dataset(args.signals, args.labels)
    ex = C.extraction_from(cfg)
    records, failures = [], []
    for sig in ds:
        try:
            records.append(FeatureRecord(sig.trial_id, extract_features(sig, ex), sig.true_distance))
        except MCDistError as exc:
            logger.warning("excluding %s: %s: %s", sig.trial_id, type(exc).__name__, exc)
            failures.append((sig.trial_id, type(exc).__name__, str(exc)))
    if not records:
        raise InsufficientData(f"feature extraction failed for all {len(ds)} trials")
    formats.write_features(args.features, records)
    log_path = args.exclusions or f"{args.features}.excluded.csv"
    with open(log_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["trial_id", "error", "message"])
        w.writerows(sorted(failures))
    logger.info("extracted %d trials, excluded %d", len(records), len(failures))


def _labeled(records: Sequence[FeatureRecord]) -> List[FeatureRecord]:
    out = [r for r in records if r.distance is not None]
    if not out:
        raise InsufficientData("no feature rows carry a true distance")
    return out


def measured_tx_power(signals_path, labels_path, cfg) -> Dict[float, float]:
    """Average transmitted power per emission time over a set of pulse recordings."""
    ds = load_dataset(signals_path, labels_path)
    ex = C.extraction_from(cfg)
    acc = defaultdict(list)
    for sig in ds:
        acc[round(sig.emission_time, 9)].append(transmitted_power(sig, sig.emission_time, ex))
    return {te: float(np.mean(v)) for te, v in sorted(acc.items())}


def fit_curves(records: Sequence[FeatureRecord], tx_power: Dict[float, float], opts, peaktime_origin=True):
    """Fit power and peak-time curves per emission time on per-distance averages."""
    groups = defaultdict(lambda: defaultdict(list))
    for r in _labeled(records):
        groups[round(r.features.emission_time, 9)][r.distance].append(r.features)
    power, peak = {}, {}
    for te, by_d in sorted(groups.items()):
        ds = sorted(by_d)
        if len(ds) < 2:
            raise InsufficientData(f"T_e={te}: need at least two distances, have {len(ds)}")
        t_mean = [float(np.mean([f.t_peak for f in by_d[d]])) for d in ds]
        peak[te] = fit_exponential(list(zip(ds, t_mean)), opts=opts, prepend_origin=peaktime_origin)
        if te in tx_power:
            p_mean = [float(np.mean([f.received_power for f in by_d[d]])) / tx_power[te] for d in ds]
            power[te] = fit_exponential(list(zip(ds, p_mean)), opts=opts)
        else:
            logger.warning("no transmitted power for T_e=%g; skipping the power curve", te)
    return CurveEstimatorParams(power, peak, {te: p for te, p in tx_power.items() if te in groups})


def cmd_fit_curves(args, cfg) -> None:
    records = formats.read_features(args.features)
    source = cfg["tx_power_source"]
    if source == "published":
        tx = dict(PUBLISHED_TX_POWER)
    elif source == "measured":
        if not (args.tx_signals and args.tx_labels):
            raise ConfigError("tx_power_source = measured needs --tx-signals and --tx-labels")
        tx = measured_tx_power(args.tx_signals, args.tx_labels, cfg)
    else:
        raise ConfigError(f"tx_power_source must be published or measured, got {source!r}")
    params = fit_curves(records, tx, C.lm_from(cfg, curve_fit=True), cfg["peaktime_origin"])
    formats.write_params(args.params, params)


def _inputs(records):
    return np.array([r.features.as_inputs() for r in records])


def cmd_train(args, cfg) -> None:
    method = cfg["method"]
    records = _labeled(formats.read_features(args.features))
    X = _inputs(records)
    y = np.array([r.distance for r in records])
    if method == "mlr":
        model = mlr_train(design_matrix(X), y)
    elif method == "nnr":
        model = nnr_train(X, y, cfg["hidden_nodes"], C.lm_from(cfg), cfg["seed"])
    else:
        raise ConfigError(f"train supports {LEARNED_METHODS}, got {method!r}")
    formats.write_model(args.model, model)


def cmd_estimate(args, cfg) -> None:
    method = cfg["method"]
    records = formats.read_features(args.features)
    rows = []
    if method in LEARNED_METHODS:
        if not args.model:
            raise ConfigError(f"method {method} needs --model")
        model = formats.read_model(args.model)
        expected = LinearModel if method == "mlr" else NeuralModel
        if not isinstance(model, expected):
            raise ConfigError(f"{args.model} does not hold a {method} model")
        predict = mlr_predict if method == "mlr" else nnr_predict
        est = np.atleast_1d(predict(model, _inputs(records)))
        rows = [(r.trial_id, r.features.emission_time, r.distance, float(e), "ok") for r, e in zip(records, est)]
    elif method in CURVE_METHODS:
        if not args.params:
            raise ConfigError(f"method {method} needs --params")
        params = formats.read_params(args.params)
        for r in records:
            f = r.features
            try:
                d_hat = params.estimate(method, f.emission_time, P_R=f.received_power, t_peak=f.t_peak)
                rows.append((r.trial_id, f.emission_time, r.distance, d_hat, "ok"))
            except MCDistError as exc:
                logger.warning("no estimate for %s: %s", r.trial_id, exc)
                rows.append((r.trial_id, f.emission_time, r.distance, None, type(exc).__name__))
    else:
        raise ConfigError(f"unknown method {method!r}")
    formats.write_predictions(args.predictions, rows)


def cmd_evaluate(args, cfg) -> None:
    method = cfg["method"]
    records = _labeled(formats.read_features(args.features))
    if method in LEARNED_METHODS:
        report = monte_carlo_evaluate(
            records, method, cfg["trials"], cfg["split"], cfg["seed"], cfg["hidden_nodes"],
            C.lm_from(cfg), cfg["patience"], cfg["workers"],
        )
    elif method in CURVE_METHODS:
        if not args.params:
            raise ConfigError(f"method {method} needs --params")
        report = evaluate_data_analysis(records, formats.read_params(args.params), method)
    else:
        raise ConfigError(f"unknown method {method!r}")
    formats.write_report(args.report_prefix, report)
    if not math.isfinite(report.rmse):
        raise InsufficientData("evaluation produced a non-finite RMSE")
    print(f"{method} rmse_cm={fmt(report.rmse)} excluded={report.excluded}")


def cmd_velocity_profile(args, cfg) -> None:
    per_te, overall = velocity_profile(_labeled(formats.read_features(args.features)))
    formats.write_velocity_profile(args.output, per_te, overall)


# ---------------------------------------------------------------------------
# argument parsing


COMMANDS = {
    "simulate": (cmd_simulate, "generate the synthetic design and write signals/labels CSVs"),
    "extract": (cmd_extract, "signals/labels CSVs to a features CSV"),
    "fit-curves": (cmd_fit_curves, "fit power and peak-time curves per emission time"),
    "train": (cmd_train, "train an mlr or nnr model on all labeled feature rows"),
    "estimate": (cmd_estimate, "apply a model or curve parameters to feature rows"),
    "evaluate": (cmd_evaluate, "write RMSE / per-distance report CSVs"),
    "velocity-profile": (cmd_velocity_profile, "mean d / t_peak per distance and emission time"),
}

PATH_ARGS = {
    "simulate": [("signals", True), ("labels", True), ("tx-signals", False), ("tx-labels", False)],
    "extract": [("signals", True), ("labels", True), ("features", True), ("exclusions", False)],
    "fit-curves": [("features", True), ("params", True), ("tx-signals", False), ("tx-labels", False)],
    "train": [("features", True), ("model", True)],
    "estimate": [("features", True), ("predictions", True), ("model", False), ("params", False)],
    "evaluate": [("features", True), ("report-prefix", True), ("params", False)],
    "velocity-profile": [("features", True), ("output", True)],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcdist", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        io = p.add_argument_group("files")
        for path_name, required in PATH_ARGS[name]:
            io.add_argument("--" + path_name, required=required, metavar="PATH")
        p.add_argument("--config", metavar="PATH", help=f"key = value config file (default: ${C.ENV_VAR})")
        p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
        opts = p.add_argument_group("settings (override the config file)")
        for key, spec in C.KEYS.items():
            default = ",".join(map(str, spec.default)) if isinstance(spec.default, tuple) else spec.default
            opts.add_argument(C.flag_name(key), dest="cfg_" + key, default=None, metavar="VALUE",
                              help=f"{spec.help} [{default}]")
    return parser


def _overrides(args) -> Dict[str, object]:
    out = {}
    for key in C.KEYS:
        raw = getattr(args, "cfg_" + key, None)
        if raw is not None:
            out[key] = C.coerce(key, raw, C.flag_name(key))
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    func = COMMANDS[args.command][0]
    try:
        cfg = C.resolve(args.config, _overrides(args))
        func(args, cfg)
    except (MCDistError, OSError) as exc:
        msg = " ".join(str(exc).split())
        print(f"ERROR {type(exc).__name__}: {msg}", file=sys.stderr)
        logger.debug("traceback", exc_info=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
