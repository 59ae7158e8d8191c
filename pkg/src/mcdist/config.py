"""Flat ``key = value`` run configuration.

Precedence, lowest first: built-in defaults, the config file (``--config``
or the ``MCDIST_CONFIG`` environment variable), then command-line flags.
Every key in :data:`KEYS` has a matching flag (``offset_samples`` becomes
``--offset-samples``).  Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, Mapping, Optional

from .channel import ChannelParams, SensorConfig
from .dataset import DEFAULT_DESIGN_CHANNEL, DEFAULT_DESIGN_SENSOR, DesignSpec
from .errors import ConfigError
from .features import ExtractionConfig
from .lsq import LMOptions

ENV_VAR = "MCDIST_CONFIG"


def _floats(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(float(x) for x in text)
    return tuple(float(x) for x in str(text).replace(" ", "").split(",") if x)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _str(text) -> str:
    return str(text).strip()


@dataclass(frozen=True)
class Key:
    parse: Callable[[Any], Any]
    default: Any
    help: str


_D = DesignSpec()
_LM = LMOptions()
_EX = ExtractionConfig()

KEYS: Dict[str, Key] = {
    # design / simulation
    "seed": Key(int, 0, "master seed for simulation and Monte-Carlo shuffles"),
    "distances": Key(_floats, _D.distances, "comma-separated distances in cm"),
    "emission_times": Key(_floats, _D.emission_times, "comma-separated emission times in s"),
    "replications": Key(int, _D.replications, "trials per (distance, emission time) cell"),
    "channel_model": Key(_str, _D.model, "channel model: diffusion, flow or advection"),
    "calibrated_flow": Key(_bool, True, "tune flow speed per cell to the reference peak-time profile"),
    "released_quantity": Key(float, DEFAULT_DESIGN_CHANNEL.released_quantity, "released quantity per second of emission"),
    "diffusion_coeff": Key(float, DEFAULT_DESIGN_CHANNEL.diffusion_coeff, "diffusion coefficient in cm^2/s"),
    "flow_velocity": Key(float, DEFAULT_DESIGN_CHANNEL.flow_velocity, "flow speed in cm/s (when not calibrated)"),
    "sampling_rate": Key(float, DEFAULT_DESIGN_SENSOR.sampling_rate, "sensor rate in Hz"),
    "offset_level": Key(float, DEFAULT_DESIGN_SENSOR.offset_level, "sensor baseline in V"),
    "noise_std": Key(float, DEFAULT_DESIGN_SENSOR.noise_std, "additive Gaussian noise std in V"),
    "gain": Key(float, DEFAULT_DESIGN_SENSOR.gain, "sensor gain in V per concentration unit"),
    "quantizer_bits": Key(int, DEFAULT_DESIGN_SENSOR.quantizer_bits, "converter resolution; 0 disables quantization"),
    "short_record": Key(float, _D.short_record, "record length in s up to the cutoff distance"),
    "long_record": Key(float, _D.long_record, "record length in s beyond the cutoff distance"),
    "long_record_cutoff": Key(float, _D.long_record_cutoff, "distance in cm above which the long record is used"),
    "tx_amplitude": Key(float, 2.7, "transmitted pulse height in V above the offset"),
    # extraction
    "offset_samples": Key(int, _EX.offset_samples, "leading samples averaged for the offset"),
    "threshold_margin": Key(float, _EX.threshold_margin, "detection margin in V above the offset"),
    "window_before": Key(int, _EX.window_before, "moving-average samples before the centre"),
    "window_after": Key(int, _EX.window_after, "moving-average samples after the centre"),
    # optimisation
    "lm_mu0": Key(float, _LM.mu0, "initial LM damping"),
    "lm_gamma": Key(float, _LM.gamma, "LM damping update factor"),
    "lm_max_iters": Key(int, _LM.max_iters, "LM iteration cap"),
    "lm_cost_tol": Key(float, None, "LM stop when half the squared error falls below this (unset: 1e-12 for training, 0 for curve fits)"),
    "lm_step_tol": Key(float, _LM.step_tol, "LM stop on relative step size"),
    # estimation / evaluation
    "method": Key(_str, "peaktime", "mlr, nnr, power, peaktime or combined"),
    "hidden_nodes": Key(int, 1, "network hidden-layer width"),
    "patience": Key(int, 6, "validation-failure count that stops network training"),
    "trials": Key(int, 100, "Monte-Carlo repetitions"),
    "split": Key(_floats, None, "train,validation,test fractions (method default when unset)"),
    "workers": Key(int, 1, "worker processes for Monte-Carlo trials"),
    "tx_power_source": Key(_str, "published", "published or measured transmitted power"),
    "peaktime_origin": Key(_bool, True, "anchor the peak-time fit at (0, 0)"),
}


def flag_name(key: str) -> str:
    return "--" + key.replace("_", "-")


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Any]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = coerce(key, value.strip(), f"{source}:{lineno}")
    return out


def coerce(key: str, value: Any, where: str = "") -> Any:
    try:
        return KEYS[key].parse(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or key}: bad value for {key}: {exc}") from None


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            return parse_config_text(f.read(), str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None


def resolve(file_path: Optional[str], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Merge defaults, config file and flag values (``None`` means unset)."""
    values = {k: spec.default for k, spec in KEYS.items()}
    values.update(load_config_file(file_path or os.environ.get(ENV_VAR)))
    values.update({k: v for k, v in overrides.items() if v is not None and k in KEYS})
    return values


# builders -------------------------------------------------------------------


def design_from(cfg: Mapping[str, Any]) -> DesignSpec:
    kw = dict(
        distances=tuple(cfg["distances"]),
        emission_times=tuple(cfg["emission_times"]),
        replications=cfg["replications"],
        model=cfg["channel_model"],
        short_record=cfg["short_record"],
        long_record=cfg["long_record"],
        long_record_cutoff=cfg["long_record_cutoff"],
    )
    if not cfg["calibrated_flow"]:
        kw["peak_time_profile"] = None
    return DesignSpec(**kw)


def channel_from(cfg: Mapping[str, Any]) -> ChannelParams:
    v = cfg["flow_velocity"]
    return replace(
        DEFAULT_DESIGN_CHANNEL,
        released_quantity=cfg["released_quantity"],
        diffusion_coeff=cfg["diffusion_coeff"],
        flow_velocity=v,
        flow_vector=(v, 0.0, 0.0),
    )


def sensor_from(cfg: Mapping[str, Any]) -> SensorConfig:
    return replace(
        DEFAULT_DESIGN_SENSOR,
        sampling_rate=cfg["sampling_rate"],
        offset_level=cfg["offset_level"],
        noise_std=cfg["noise_std"],
        gain=cfg["gain"],
        quantizer_bits=cfg["quantizer_bits"],
    )


def extraction_from(cfg: Mapping[str, Any]) -> ExtractionConfig:
    return ExtractionConfig(
        offset_samples=cfg["offset_samples"],
        threshold_margin=cfg["threshold_margin"],
        window_before=cfg["window_before"],
        window_after=cfg["window_after"],
    )


def lm_from(cfg: Mapping[str, Any], curve_fit: bool = False) -> LMOptions:
    cost_tol = cfg["lm_cost_tol"]
    if cost_tol is None:
        cost_tol = 0.0 if curve_fit else _LM.cost_tol
    return LMOptions(
        mu0=cfg["lm_mu0"],
        gamma=cfg["lm_gamma"],
        max_iters=cfg["lm_max_iters"],
        cost_tol=cost_tol,
        step_tol=cfg["lm_step_tol"],
    )
