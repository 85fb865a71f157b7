"""Generation and calculus of the input signals used by the simulators.

The central object is :class:`Waveform`, a uniformly sampled real time
series.  Band-limited noise is produced by convolving seeded white noise
with a compactly supported smooth bump, so that its autocorrelation is
exactly zero beyond the requested coherence time.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "Waveform",
    "SmoothNoiseSpec",
    "derive_seed",
    "bump_kernel",
    "gen_smooth_noise",
    "gen_step",
    "gen_constant",
    "differentiate",
    "integrate",
    "autocorrelation",
]


@dataclass(frozen=True)
class Waveform:
    """A uniformly sampled real time series.

    Attributes
    ----------
    dt : float
        Seconds per sample, strictly positive.
    t0 : float
        Time of the first sample in seconds.
    samples : np.ndarray
        Finite 1-D float array, at least one sample.  Treated as
        immutable; all derived statistics are over the stored samples.
    """

    dt: float
    t0: float
    samples: np.ndarray

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("samples must be a nonempty 1-D sequence")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        """Time spanned by the samples: dt x (len - 1)."""
        return self.dt * (len(self) - 1)

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def with_samples(self, samples: np.ndarray) -> "Waveform":
        return Waveform(self.dt, self.t0, samples)


@dataclass(frozen=True)
class SmoothNoiseSpec:
    """Full description of one band-limited noise waveform.

    The same spec (seed included) always yields the identical waveform.
    """

    coherence_time: float
    sigma: float
    seed: int
    duration: float
    dt: float


def derive_seed(master: int, label: str) -> int:
    """Stable 64-bit seed for a named stream under a master seed.

    Uses blake2b so the mapping is identical on every platform.
    """
    digest = hashlib.blake2b(f"{master}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def _n_samples(duration: float, dt: float) -> int:
    return int(round(duration / dt)) + 1


def bump_kernel(coherence_time: float, dt: float) -> np.ndarray:
    """Sampled smooth bump exp(-1/(1-u^2)), zero outside u in (-1, 1).

    The support is scaled to ``coherence_time`` seconds, which makes the
    autocorrelation of noise filtered with this kernel identically zero
    for every lag of at least ``coherence_time``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if coherence_time < 2 * dt:
        raise ValueError(
            f"coherence_time must be at least 2*dt ({2 * dt}), got {coherence_time}"
        )
    half = int(round(coherence_time / (2 * dt)))
    u = np.arange(-half, half + 1) / half
    kernel = np.zeros(u.size)
    inside = np.abs(u) < 1
    kernel[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return kernel


def _smooth_noise_samples(
    n: int, dt: float, coherence_time: float, sigma: float, seed: int
) -> np.ndarray:
    """Core generator used by both the public API and the simulators."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return np.zeros(n)
    kernel = bump_kernel(coherence_time, dt)
    half = (kernel.size - 1) // 2
    # One coherence time of extra white noise each side, trimmed after
    # the convolution, so every retained sample sees a full kernel.
    pad = 2 * half
    rng = np.random.Generator(np.random.Philox(key=seed))
    white = rng.standard_normal(n + 2 * pad)
    smoothed = fftconvolve(white, kernel, mode="valid")
    smoothed = smoothed[(smoothed.size - n) // 2 : (smoothed.size - n) // 2 + n]
    # Rescale so the sample standard deviation equals sigma exactly; the
    # mean is left untouched (it is zero only in expectation).
    return smoothed * (sigma / smoothed.std())


def gen_smooth_noise(spec: SmoothNoiseSpec) -> Waveform:
    """Band-limited Gaussian noise with exact sample std ``spec.sigma``.

    The empirical autocorrelation vanishes (up to estimation noise) at
    every lag of at least ``spec.coherence_time``.
    """
    if spec.dt <= 0 or spec.duration <= 0:
        raise ValueError("dt and duration must be positive")
    if spec.coherence_time < 2 * spec.dt:
        raise ValueError("coherence_time must be at least 2*dt")
    if spec.duration < 10 * spec.coherence_time:
        raise ValueError(
            "duration must be at least 10 coherence times for the statistics "
            f"to mean anything (got {spec.duration} < {10 * spec.coherence_time})"
        )
    n = _n_samples(spec.duration, spec.dt)
    samples = _smooth_noise_samples(n, spec.dt, spec.coherence_time, spec.sigma, spec.seed)
    return Waveform(spec.dt, 0.0, samples)


def gen_step(
    t_step: float, before: float, after: float, duration: float, dt: float
) -> Waveform:
    """Step waveform: ``before`` for t < t_step, ``after`` from t_step on."""
    if not 0 <= t_step <= duration:
        raise ValueError(f"t_step must lie within [0, {duration}], got {t_step}")
    n = _n_samples(duration, dt)
    t = dt * np.arange(n)
    return Waveform(dt, 0.0, np.where(t < t_step, before, after))


def gen_constant(value: float, duration: float, dt: float) -> Waveform:
    return Waveform(dt, 0.0, np.full(_n_samples(duration, dt), float(value)))


def differentiate(w: Waveform) -> Waveform:
    """Forward difference (w[i+1] - w[i]) / dt, one sample shorter.

    Consistent with the forward-Euler integrator used by the plant
    simulators; callers align channels by truncating the last sample.
    """
    if len(w) < 2:
        raise ValueError("differentiate needs at least two samples")
    return Waveform(w.dt, w.t0, np.diff(w.samples) / w.dt)


def integrate(w: Waveform, initial: float = 0.0) -> Waveform:
    """Cumulative Euler sum: out[0] = initial, out[i+1] = out[i] + w[i] dt.

    One sample longer than the input; inverts :func:`differentiate` up to
    the initial value.
    """
    out = np.empty(len(w) + 1)
    out[0] = initial
    np.cumsum(w.samples * w.dt, out=out[1:])
    out[1:] += initial
    return Waveform(w.dt, w.t0, out)


def autocorrelation(w: Waveform, lag: float) -> float:
    """Pearson correlation of the series with itself shifted by ``lag``."""
    if lag < 0:
        raise ValueError("lag must be nonnegative")
    steps = lag / w.dt
    k = int(round(steps))
    if abs(steps - k) > 1e-6:
        raise ValueError(f"lag {lag} is not a multiple of dt {w.dt}")
    if lag >= w.duration / 2:
        raise ValueError("lag too large for a meaningful estimate")
    if k == 0:
        return 1.0
    a = w.samples[:-k] - w.samples[:-k].mean()
    b = w.samples[k:] - w.samples[k:].mean()
    return float(a @ b / np.sqrt((a @ a) * (b @ b)))
