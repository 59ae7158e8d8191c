"""Analytical channel models and a synthetic sensor front end.

Three closed-form concentration models are provided:

* free diffusion from an instantaneous point release,
* diffusion with a constant flow towards the receiver,
* the anisotropic advection-diffusion (triple Gaussian) solution.

:func:`simulate_received_signal` turns one of them into a sampled voltage
trace the way a metal-oxide sensor behind an ADC would report it: constant
offset, linear gain, additive Gaussian noise and optional uniform
quantization.  Release happens at ``t = 0`` and recording starts at the
same instant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "ChannelParams",
    "SensorConfig",
    "SampledSignal",
    "MODELS",
    "diffusion_concentration",
    "diffusion_flow_concentration",
    "advection_concentration",
    "diffusion_peak_time",
    "flow_peak_time",
    "flow_velocity_for_peak_time",
    "simulate_received_signal",
    "simulate_transmitted_signal",
    "reynolds_number",
]

MODELS = ("diffusion", "flow", "advection")

Vec3 = Tuple[float, float, float]


@dataclass(frozen=True)
class ChannelParams:
    """Physical parameters shared by the three channel models.

    ``released_quantity`` and ``diffusion_coeff`` / ``flow_velocity`` drive
    the radial models; the remaining fields drive the advection model.
    Both source strengths are per second of emission: the simulator scales
    them by the emission time.
    """

    released_quantity: float = 1.0
    diffusion_coeff: float = 0.1149980886
    flow_velocity: float = 23.53
    anisotropic_diffusion: Vec3 = (0.1149980886, 0.1149980886, 0.1149980886)
    flow_vector: Vec3 = (23.53, 0.0, 0.0)
    source_point: Vec3 = (0.0, 0.0, 0.0)
    released_mass: float = 1.0

    def __post_init__(self):
        if not self.released_quantity >= 0:
            raise ConfigError(f"released_quantity must be >= 0, got {self.released_quantity}")
        if not self.diffusion_coeff > 0:
            raise ConfigError(f"diffusion_coeff must be > 0, got {self.diffusion_coeff}")
        if len(self.anisotropic_diffusion) != 3 or min(self.anisotropic_diffusion) <= 0:
            raise ConfigError("anisotropic_diffusion needs three positive coefficients")
        if len(self.flow_vector) != 3 or len(self.source_point) != 3:
            raise ConfigError("flow_vector and source_point must have three components")
        if not self.released_mass >= 0:
            raise ConfigError(f"released_mass must be >= 0, got {self.released_mass}")


@dataclass(frozen=True)
class SensorConfig:
    sampling_rate: float = 10.0
    record_duration: float = 100.0
    offset_level: float = 0.5
    noise_std: float = 0.0
    gain: float = 1.0
    quantizer_bits: int = 10
    full_scale: Tuple[float, float] = (0.0, 5.0)

    def __post_init__(self):
        if not self.sampling_rate > 0:
            raise ConfigError("sampling_rate must be > 0")
        if not self.record_duration > 0:
            raise ConfigError("record_duration must be > 0")
        if not self.noise_std >= 0:
            raise ConfigError("noise_std must be >= 0")
        if int(self.quantizer_bits) != self.quantizer_bits or not 0 <= self.quantizer_bits <= 16:
            raise ConfigError("quantizer_bits must be an integer in 0..16")
        lo, hi = self.full_scale
        if not hi > lo:
            raise ConfigError("full_scale must be an increasing (low, high) pair")

    @property
    def dt(self) -> float:
        return 1.0 / self.sampling_rate

    @property
    def n_samples(self) -> int:
        return max(1, int(round(self.record_duration * self.sampling_rate)))

    @property
    def quantizer_step(self) -> Optional[float]:
        if self.quantizer_bits == 0:
            return None
        lo, hi = self.full_scale
        return (hi - lo) / (2 ** self.quantizer_bits - 1)

    def quantize(self, values: np.ndarray) -> np.ndarray:
        """Mid-tread uniform quantizer with saturation at the full-scale ends."""
        step = self.quantizer_step
        if step is None:
            return np.asarray(values, dtype=float)
        lo, hi = self.full_scale
        codes = np.rint((np.clip(values, lo, hi) - lo) / step)
        return lo + codes * step


@dataclass(frozen=True)
class SampledSignal:
    """Uniformly sampled voltage trace.

    ``samples`` is stored as a read-only float array.  ``true_distance`` is
    the label in cm, ``None`` for unlabeled recordings.
    """

    samples: np.ndarray
    dt: float
    t0: float = 0.0
    trial_id: str = ""
    emission_time: float = 0.0
    true_distance: Optional[float] = None

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float).reshape(-1)
        if arr.size == 0:
            raise DomainError("a signal needs at least one sample")
        if not np.all(np.isfinite(arr)):
            raise DomainError(f"signal {self.trial_id!r} has non-finite samples")
        if not self.dt > 0:
            raise DomainError("dt must be > 0")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    def time_at(self, index: int) -> float:
        return self.t0 + self.dt * index

    def with_samples(self, samples) -> "SampledSignal":
        return replace(self, samples=samples)


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("time must be > 0")
    return t


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def diffusion_concentration(Q, D, d, t):
    """Concentration at radius ``d`` for free 3-D diffusion, ``Q/(4 pi D t)^1.5 exp(-d^2/4Dt)``."""
    if not D > 0:
        raise DomainError(f"diffusion coefficient must be > 0, got {D}")
    t = _check_time(t)
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise DomainError("distance must be >= 0")
    c = Q / (4.0 * math.pi * D * t) ** 1.5 * np.exp(-(d * d) / (4.0 * D * t))
    return _scalar(c)


def diffusion_flow_concentration(Q, D, d, v, t):
    """Concentration for diffusion with a constant flow ``v`` along the TX-RX axis."""
    if not D > 0:
        raise DomainError(f"diffusion coefficient must be > 0, got {D}")
    t = _check_time(t)
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("distance must be > 0")
    c = Q * d / np.sqrt(4.0 * math.pi * D * t**3) * np.exp(-((v * t - d) ** 2) / (4.0 * D * t))
    return _scalar(c)


def advection_concentration(params: ChannelParams, point: Sequence[float], t):
    """Advection-diffusion solution for an instantaneous release at ``params.source_point``."""
    t = _check_time(t)
    Dx, Dy, Dz = params.anisotropic_diffusion
    vx, vy, vz = params.flow_vector
    x0, y0, z0 = params.source_point
    x, y, z = point
    expo = (
        -((x - (x0 + vx * t)) ** 2) / (4.0 * Dx * t)
        - ((y - (y0 + vy * t)) ** 2) / (4.0 * Dy * t)
        - ((z - (z0 + vz * t)) ** 2) / (4.0 * Dz * t)
    )
    c = params.released_mass / ((4.0 * math.pi * t) ** 1.5 * math.sqrt(Dx * Dy * Dz)) * np.exp(expo)
    return _scalar(c)


def diffusion_peak_time(D: float, d: float) -> float:
    """Time of maximum concentration under free diffusion, ``d^2 / (6 D)``."""
    if not D > 0:
        raise DomainError("diffusion coefficient must be > 0")
    return d * d / (6.0 * D)


def flow_peak_time(D: float, d: float, v: float) -> float:
    """Time of maximum concentration for diffusion with flow.

    Setting the time derivative of the log-concentration to zero gives
    ``v^2 t^2 + 6 D t - d^2 = 0``; the positive root is written in the
    cancellation-free form ``d^2 / (3D + sqrt(9D^2 + v^2 d^2))``.
    """
    if not D > 0:
        raise DomainError("diffusion coefficient must be > 0")
    return d * d / (3.0 * D + math.sqrt(9.0 * D * D + v * v * d * d))


def flow_velocity_for_peak_time(D: float, d: float, t_peak: float) -> float:
    """Flow speed that puts the concentration maximum at ``t_peak``."""
    if not t_peak > 0:
        raise DomainError("t_peak must be > 0")
    rad = d * d - 6.0 * D * t_peak
    if rad < 0:
        raise DomainError(
            f"no flow speed gives a peak at {t_peak} s for d={d} cm, D={D}: "
            "free diffusion already peaks earlier"
        )
    return math.sqrt(rad) / t_peak


def _model_curve(ch: ChannelParams, model: str, d: float, T_e: float, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    live = t > 0
    tl = t[live]
    if model == "diffusion":
        out[live] = diffusion_concentration(ch.released_quantity * T_e, ch.diffusion_coeff, d, tl)
    elif model == "flow":
        out[live] = diffusion_flow_concentration(
            ch.released_quantity * T_e, ch.diffusion_coeff, d, ch.flow_velocity, tl
        )
    elif model == "advection":
        x0, y0, z0 = ch.source_point
        scaled = replace(ch, released_mass=ch.released_mass * T_e)
        out[live] = advection_concentration(scaled, (x0 + d, y0, z0), tl)
    else:
        raise ConfigError(f"unknown channel model {model!r}; expected one of {MODELS}")
    return out


def simulate_received_signal(
    ch: ChannelParams,
    sens: SensorConfig,
    model: str,
    d: float,
    T_e: float,
    seed: int,
    trial_id: str = "",
) -> SampledSignal:
    """Sample ``offset + gain * C(t) + noise`` at the sensor rate.

    The released amount is proportional to ``T_e``.  The advection model
    places the receiver ``d`` cm downstream of the source along +x.
    Identical arguments give bitwise-identical output.
    """
    if not d > 0:
        raise DomainError("distance must be > 0")
    if not T_e >= 0:
        raise DomainError("emission time must be >= 0")
    t = sens.dt * np.arange(sens.n_samples)
    v = sens.offset_level + sens.gain * _model_curve(ch, model, d, T_e, t)
    if sens.noise_std > 0:
        rng = np.random.default_rng(seed)
        v = v + rng.normal(0.0, sens.noise_std, size=v.size)
    v = sens.quantize(v)
    return SampledSignal(v, sens.dt, 0.0, trial_id, T_e, d)


def simulate_transmitted_signal(
    sens: SensorConfig,
    T_e: float,
    amplitude: float,
    seed: int,
    pre_roll: float = 1.0,
    trial_id: str = "",
) -> SampledSignal:
    """Rectangular pulse of length ``T_e`` as seen by a sensor next to the sprayer."""
    t = sens.dt * np.arange(sens.n_samples)
    on = (t >= pre_roll) & (t < pre_roll + T_e)
    v = sens.offset_level + amplitude * on
    if sens.noise_std > 0:
        rng = np.random.default_rng(seed)
        v = v + rng.normal(0.0, sens.noise_std, size=v.size)
    v = sens.quantize(v)
    return SampledSignal(v, sens.dt, 0.0, trial_id, T_e, None)


def reynolds_number(V_l: float, V_a: float, a: float, nu_a: float) -> float:
    """Droplet Reynolds number ``2 |V_l - V_a| a / nu_a`` (cgs units)."""
    if not nu_a > 0:
        raise DomainError("kinematic viscosity must be > 0")
    if not a > 0:
        raise DomainError("droplet radius must be > 0")
    return 2.0 * abs(V_l - V_a) * a / nu_a
