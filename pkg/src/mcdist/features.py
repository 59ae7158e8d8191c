"""Feature extraction from a received molecular signal.

Pipeline, in order: offset from the first raw samples, detection threshold,
moving-average smoothing, threshold detection, first peak, nearest local
minimum before it, 10 % / 90 % reference points on the rising edge, and the
received energy up to the peak.  Everything after the offset is computed on
the smoothed trace.
"""

from __future__ import annotations

import logging
from dataclasses import astuple, dataclass, fields

import numpy as np

from .channel import SampledSignal
from .errors import ConfigError, DegenerateEdge, DomainError, NoDetection, NoPeak

logger = logging.getLogger(__name__)

FEATURE_NAMES = (
    "t_low",
    "c_low",
    "rise_time",
    "delta_c",
    "gradient",
    "t_peak",
    "c_peak",
    "energy",
    "emission_time",
)


@dataclass(frozen=True)
class ExtractionConfig:
    offset_samples: int = 5
    threshold_margin: float = 0.1
    window_before: int = 3
    window_after: int = 3

    def __post_init__(self):
        if self.offset_samples < 1:
            raise ConfigError("offset_samples must be >= 1")
        if not self.threshold_margin > 0:
            raise ConfigError("threshold_margin must be > 0")
        if self.window_before < 0 or self.window_after < 0:
            raise ConfigError("window sizes must be >= 0")


@dataclass(frozen=True)
class FeatureVector:
    """The nine estimator inputs of one trial.

    ``n_r`` is the number of samples summed into ``energy`` (first sample up
    to and including the peak); the power estimator needs it.
    """

    t_low: float
    c_low: float
    rise_time: float
    delta_c: float
    gradient: float
    t_peak: float
    c_peak: float
    energy: float
    emission_time: float
    n_r: int = 0

    def as_inputs(self) -> np.ndarray:
        return np.array(astuple(self)[: len(FEATURE_NAMES)], dtype=float)

    @property
    def received_power(self) -> float:
        if self.n_r < 1:
            raise DomainError("feature vector carries no sample count for the energy")
        return self.energy / self.n_r


def estimate_offset(sig: SampledSignal, p: int) -> float:
    """Initial offset level: mean of the first ``p`` samples."""
    if p < 1:
        raise DomainError("p must be >= 1")
    if p > len(sig):
        raise DomainError(f"signal has {len(sig)} samples, fewer than p={p}")
    return float(np.mean(sig.samples[:p]))


def detection_threshold(A_o: float, A_thr: float) -> float:
    return A_o + A_thr


def moving_average(x: np.ndarray, W1: int, W2: int) -> np.ndarray:
    """Window ``[n-W1, n+W2]`` mean; the window is truncated at both ends."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if W1 < 0 or W2 < 0:
        raise DomainError("window sizes must be >= 0")
    if W1 + W2 + 1 > n:
        raise DomainError(f"window of {W1 + W2 + 1} samples exceeds signal length {n}")
    if W1 == 0 and W2 == 0:
        return x.copy()
    win = W1 + W2 + 1
    out = np.empty(n)
    # interior: full windows; identical windows give identical sums
    out[W1 : n - W2] = np.lib.stride_tricks.sliding_window_view(x, win).sum(axis=1) / win
    for i in range(W1):
        out[i] = x[: i + W2 + 1].mean()
    for i in range(n - W2, n):
        out[i] = x[i - W1 :].mean()
    return np.clip(out, x.min(), x.max())


def smooth(sig: SampledSignal, W1: int, W2: int) -> SampledSignal:
    return sig.with_samples(moving_average(sig.samples, W1, W2))


def detect(sig: SampledSignal, K: float) -> bool:
    return bool(np.any(sig.samples > K))


def first_peak_index(x: np.ndarray, start: int = 0) -> int:
    """Index of the first positive-to-negative change of the first difference.

    Zero differences inherit the previous sign, so a plateau peak resolves
    to its last sample.  Leading zero differences carry no sign.
    """
    x = np.asarray(x, dtype=float)
    sign = np.sign(np.diff(x))
    rising = False
    for k, s in enumerate(sign):
        if s > 0:
            rising = True
        elif s < 0:
            if rising and k >= start:
                return k
            rising = False
    raise NoPeak("no positive-to-negative change in the first difference")


def find_first_peak(sig: SampledSignal, start: int = 0) -> int:
    if len(sig) < 3:
        raise NoPeak("need at least 3 samples to locate a peak")
    return first_peak_index(sig.samples, start)


def find_preceding_local_min(sig: SampledSignal, peak_idx: int) -> int:
    """Nearest local minimum before ``peak_idx``, or 0 if there is none.

    This is the first-peak rule applied to the inverted prefix read
    backwards from the peak, so flat stretches are crossed the same way
    the peak search crosses them.
    """
    x = sig.samples
    if not 0 <= peak_idx < x.size:
        raise DomainError(f"peak index {peak_idx} out of range")
    back = -x[peak_idx::-1]
    try:
        return peak_idx - first_peak_index(back)
    except NoPeak:
        return 0


def _round_half_up_tenths(gap: int, tenths: int) -> int:
    # exact integer form of floor(tenths/10 * gap + 1/2)
    return (tenths * gap + 5) // 10


def reference_indices(min_idx: int, peak_idx: int) -> tuple[int, int]:
    if min_idx >= peak_idx:
        raise DegenerateEdge(f"minimum index {min_idx} is not before peak index {peak_idx}")
    gap = peak_idx - min_idx
    lo = min_idx + _round_half_up_tenths(gap, 1)
    hi = min_idx + _round_half_up_tenths(gap, 9)
    if lo <= min_idx or hi <= lo:
        raise DegenerateEdge(
            f"rising edge of {gap} samples too short for distinct reference points"
        )
    return lo, hi


def reference_points(sig: SampledSignal, min_idx: int, peak_idx: int):
    """``(t_low, C_low, t_high, C_high)`` at 10 % and 90 % of the index span."""
    lo, hi = reference_indices(min_idx, peak_idx)
    x = sig.samples
    return sig.time_at(lo), float(x[lo]), sig.time_at(hi), float(x[hi])


def received_energy(sig: SampledSignal, A_o: float, N_R: int) -> float:
    """Sum of squared offset-removed samples over the first ``N_R`` samples."""
    if N_R < 0 or N_R > len(sig):
        raise DomainError(f"N_R={N_R} outside 0..{len(sig)}")
    seg = sig.samples[:N_R] - A_o
    return float(np.dot(seg, seg))


def extract_features(sig: SampledSignal, cfg: ExtractionConfig | None = None, T_e: float | None = None) -> FeatureVector:
    """Run the whole extraction pipeline on one recording.

    The peak search starts at the first sample above the threshold, so
    baseline ripple before the arrival is never mistaken for the first
    peak.  Raises :class:`NoDetection`, :class:`NoPeak` or
    :class:`DegenerateEdge`.
    """
    cfg = cfg or ExtractionConfig()
    if T_e is None:
        T_e = sig.emission_time
    A_o = estimate_offset(sig, cfg.offset_samples)
    K = detection_threshold(A_o, cfg.threshold_margin)
    y = smooth(sig, cfg.window_before, cfg.window_after)
    above = np.flatnonzero(y.samples > K)
    if above.size == 0:
        raise NoDetection(f"no sample above K={K:.6g} V")
    peak = find_first_peak(y, start=int(above[0]))
    lo_min = find_preceding_local_min(y, peak)
    t_low, c_low, t_high, c_high = reference_points(y, lo_min, peak)
    R = t_high - t_low
    dC = c_high - c_low
    n_r = peak + 1
    return FeatureVector(
        t_low=t_low,
        c_low=c_low,
        rise_time=R,
        delta_c=dC,
        gradient=dC / R,
        t_peak=y.time_at(peak),
        c_peak=float(y.samples[peak]),
        energy=received_energy(y, A_o, n_r),
        emission_time=float(T_e),
        n_r=n_r,
    )


def feature_field_names():
    return [f.name for f in fields(FeatureVector)]


@dataclass(frozen=True)
class FeatureRecord:
    """Features of one trial plus its identity and (optional) true distance."""

    trial_id: str
    features: FeatureVector
    distance: float | None = None
