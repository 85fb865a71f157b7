"""Correlation machinery: pairwise and partial correlations with
significance calibration, plus the derivative/telescoping checks.

Partial correlations are computed as the correlation of least-squares
residuals (SVD-based, stable under the near-collinear conditioning sets
these loops produce).  Deterministic linear dependence is detected and
reported as an :class:`Undefined` entry with an optional noise-regularized
value instead of a garbage coefficient.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .signals import Waveform, derive_seed, differentiate, _smooth_noise_samples

__all__ = [
    "Undefined",
    "ZeroVarianceError",
    "correlation",
    "partial_correlation",
    "SignificanceCalibration",
    "calibrate_significance",
    "Classification",
    "classify",
    "rejection_ratio",
    "decimate",
    "mutual_information",
    "DerivativeTheoremReport",
    "verify_derivative_theorems",
    "CorrelationReport",
    "build_report",
]

# Residual std below this multiple of the raw std counts as deterministic.
EPS_DEFINED = 1e-9

# Fraction of each channel's std used as measurement noise when an
# undefined conditional correlation is regularized.
REGULARIZE_NOISE_FRACTION = 0.10


class ZeroVarianceError(ValueError):
    """Correlation is undefined because one side has no variance."""

    def __init__(self, side: str):
        super().__init__(f"zero variance on {side}")
        self.side = side


@dataclass(frozen=True)
class Undefined:
    """Marker for a correlation that does not exist for this data.

    ``reason`` is machine-readable; ``regularized`` holds the value
    obtained after adding measurement noise, when that pass was run.
    """

    reason: str
    side: str | None = None
    regularized: float | None = None

    def to_dict(self) -> dict:
        d = {"undefined": self.reason}
        if self.side is not None:
            d["side"] = self.side
        if self.regularized is not None:
            d["regularized"] = self.regularized
        return d


def _as_array(x) -> np.ndarray:
    if isinstance(x, Waveform):
        return x.samples
    return np.asarray(x, dtype=np.float64)


def correlation(x, y) -> float:
    """Product-moment (Pearson) correlation of two aligned series."""
    a, b = _as_array(x), _as_array(y)
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("correlation needs at least two samples")
    a = a - a.mean()
    b = b - b.mean()
    va, vb = float(a @ a), float(b @ b)
    if va == 0.0 and vb == 0.0:
        raise ZeroVarianceError("both")
    if va == 0.0:
        raise ZeroVarianceError("x")
    if vb == 0.0:
        raise ZeroVarianceError("y")
    return float(np.clip((a @ b) / math.sqrt(va * vb), -1.0, 1.0))


def _residuals(target: np.ndarray, design: np.ndarray) -> np.ndarray:
    beta, *_ = np.linalg.lstsq(design, target, rcond=None)
    return target - design @ beta


def partial_correlation(
    x,
    y,
    given: Sequence = (),
    *,
    eps: float = EPS_DEFINED,
    regularize: bool = True,
    noise_fraction: float = REGULARIZE_NOISE_FRACTION,
    noise_seed: int = 0,
) -> Union[float, Undefined]:
    """Correlation of x and y after regressing both on ``given``.

    The regression includes an intercept; an empty conditioning set
    reduces exactly to :func:`correlation`.  If either residual has
    standard deviation below ``eps`` times its raw standard deviation the
    relation is deterministic and :class:`Undefined` is returned; when
    ``regularize`` is set, the value recomputed with independent Gaussian
    measurement noise (``noise_fraction`` of each channel's std) is
    attached as the regularized entry.
    """
    a, b = _as_array(x), _as_array(y)
    zs = [_as_array(z) for z in given]
    if not zs:
        try:
            return correlation(a, b)
        except ZeroVarianceError as exc:
            return Undefined(reason="zero variance", side=exc.side)
    n = a.size
    if any(z.size != n for z in zs) or b.size != n:
        raise ValueError("all series must have the same length")
    design = np.column_stack([np.ones(n)] + zs)
    ra = _residuals(a, design)
    rb = _residuals(b, design)
    sa, sb = ra.std(), rb.std()
    bad = []
    if sa <= eps * max(a.std(), np.finfo(float).tiny):
        bad.append("x")
    if sb <= eps * max(b.std(), np.finfo(float).tiny):
        bad.append("y")
    if bad:
        side = "both" if len(bad) == 2 else bad[0]
        reg = None
        if regularize and noise_fraction > 0:
            reg = _regularized_pcorr(a, b, zs, noise_fraction, noise_seed)
        return Undefined(
            reason="deterministic given conditioning set", side=side, regularized=reg
        )
    ra = ra - ra.mean()
    rb = rb - rb.mean()
    return float(np.clip((ra @ rb) / (n * sa * sb), -1.0, 1.0))


def _regularized_pcorr(a, b, zs, noise_fraction, noise_seed) -> float | None:
    rng = np.random.Generator(np.random.Philox(key=noise_seed))
    noisy = []
    for col in [a, b, *zs]:
        noisy.append(col + rng.standard_normal(col.size) * noise_fraction * col.std())
    value = partial_correlation(noisy[0], noisy[1], noisy[2:], regularize=False)
    return value if isinstance(value, float) else None


@dataclass(frozen=True)
class SignificanceCalibration:
    """Empirical spread of the correlation between two independent
    waveforms of the given shape; the basis for the significance floor."""

    coherence_time: float
    n_steps: int
    dt: float
    n_runs: int
    seed: int
    std_of_null_correlation: float


def _null_correlation(coherence_time, n_steps, dt, seed, run) -> float:
    if coherence_time <= dt:
        # white-noise control: independent samples
        rng_a = np.random.Generator(np.random.Philox(key=derive_seed(seed, f"null/{run}/a")))
        rng_b = np.random.Generator(np.random.Philox(key=derive_seed(seed, f"null/{run}/b")))
        return correlation(rng_a.standard_normal(n_steps), rng_b.standard_normal(n_steps))
    a = _smooth_noise_samples(n_steps, dt, coherence_time, 1.0, derive_seed(seed, f"null/{run}/a"))
    b = _smooth_noise_samples(n_steps, dt, coherence_time, 1.0, derive_seed(seed, f"null/{run}/b"))
    return correlation(a, b)


def calibrate_significance(
    coherence_time: float,
    n_steps: int,
    dt: float,
    n_runs: int,
    seed: int,
    workers: int = 1,
) -> SignificanceCalibration:
    """Sample std of the null correlation over ``n_runs`` independent pairs.

    Pass ``coherence_time <= dt`` for the white-noise control.  Run seeds
    are derived per index, so the result is independent of ``workers``.
    """
    if n_runs < 30:
        raise ValueError("n_runs must be at least 30 for a usable spread estimate")
    args = [(coherence_time, n_steps, dt, seed, run) for run in range(n_runs)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            corrs = list(pool.map(lambda t: _null_correlation(*t), args))
    else:
        corrs = [_null_correlation(*t) for t in args]
    return SignificanceCalibration(
        coherence_time=coherence_time,
        n_steps=n_steps,
        dt=dt,
        n_runs=n_runs,
        seed=seed,
        std_of_null_correlation=float(np.std(corrs, ddof=1)),
    )


# classify() bands: below the floor is noise; the two weak grades cover
# what the reference tables label "very weak" and "weak".
VERY_WEAK_MAX = 0.20
WEAK_MAX = 0.45


@dataclass(frozen=True)
class Classification:
    kind: str  # "zero" | "very_weak" | "weak" | "value"
    value: float | None = None  # signed, rounded to 0.1, for kind == "value"
    negative: bool = False

    @property
    def label(self) -> str:
        if self.kind == "zero":
            return "0"
        if self.kind in ("very_weak", "weak"):
            word = "very weak" if self.kind == "very_weak" else "weak"
            return f"-{word}" if self.negative else word
        v = self.value
        return f"{v:g}" if v != int(v) else f"{int(v)}"

    def __str__(self) -> str:
        return self.label


def classify(r: float, floor: float = 0.05) -> Classification:
    """Round a correlation into the display grades used by the tables."""
    if floor <= 0:
        raise ValueError("floor must be positive")
    mag = abs(r)
    if mag < floor:
        return Classification("zero")
    if mag < VERY_WEAK_MAX:
        return Classification("very_weak", negative=r < 0)
    if mag < WEAK_MAX:
        return Classification("weak", negative=r < 0)
    rounded = math.floor(mag * 10 + 0.5) / 10  # half away from zero
    return Classification("value", value=math.copysign(rounded, r))


def rejection_ratio(trace) -> float:
    """sigma(D) / sigma(R - P): how much the loop attenuates disturbances.

    Uses the composite D0 + D1 when no plain D channel exists (and the
    perception-side disturbance D_P for the two-disturbance loops) and
    treats a missing R as a constant zero reference.  A perfectly held P
    yields ``inf``; a disturbance-free run yields 0.
    """
    if "D" in trace.channels:
        d = trace.steady("D")
    elif "D0" in trace.channels:
        d = trace.steady("D0") + trace.steady("D1")
    elif "D_P" in trace.channels:
        d = trace.steady("D_P")
    else:
        raise ValueError("trace has no disturbance channel (D, D0/D1 or D_P)")
    p = trace.steady("P")
    r = trace.steady("R") if "R" in trace.channels else np.zeros_like(p)
    err = (r - p).std()
    sd = d.std()
    if sd == 0:
        return 0.0
    if err == 0:
        return math.inf
    return float(sd / err)


def decimate(w: Waveform, interval: float) -> Waveform:
    """Every (interval/dt)-th sample, starting at the first."""
    steps = interval / w.dt
    m = int(round(steps))
    if m < 1 or abs(steps - m) > 1e-6:
        raise ValueError(f"interval {interval} is not a positive multiple of dt {w.dt}")
    return Waveform(w.dt * m, w.t0, w.samples[::m].copy())


def mutual_information(x, y, n_bins: int = 16) -> float:
    """Plug-in mutual information of an equal-width 2-D histogram, in nats.

    Intended for order-of-magnitude contrasts only; no bias correction.
    """
    a, b = _as_array(x), _as_array(y)
    if a.size != b.size:
        raise ValueError("length mismatch")
    if a.size < 1000:
        raise ValueError("mutual information estimate needs at least 1000 samples")
    if n_bins < 8:
        raise ValueError("use at least 8 bins")
    if a.std() == 0 or b.std() == 0:
        raise ZeroVarianceError("x" if a.std() == 0 else "y")
    counts, _, _ = np.histogram2d(a, b, bins=n_bins)
    p = counts / counts.sum()
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(max((p[nz] * np.log(p[nz] / (px @ py)[nz])).sum(), 0.0))


@dataclass(frozen=True)
class DerivativeTheoremReport:
    """Numerical check that a bounded series is uncorrelated with its
    forward difference, plus the exponential counterexample and the
    discrete telescoping identity."""

    matched_corr: float  # corr(x, dx/dt) after matching the endpoints
    matched_tolerance: float
    exp_corr: float  # corr(e^t, its forward difference): exactly 1
    telescoping_rel_error: float

    @property
    def matched_ok(self) -> bool:
        return abs(self.matched_corr) < self.matched_tolerance

    @property
    def exp_ok(self) -> bool:
        return abs(self.exp_corr - 1.0) < 1e-6

    @property
    def telescoping_ok(self) -> bool:
        return self.telescoping_rel_error < 1e-9

    @property
    def all_ok(self) -> bool:
        return self.matched_ok and self.exp_ok and self.telescoping_ok


def telescoping_error(w: Waveform) -> float:
    """Relative error of sum (x_i + x_{i+1})(x_{i+1} - x_i) = x_N^2 - x_0^2."""
    x = w.samples
    lhs = float(np.dot(x[:-1] + x[1:], np.diff(x)))
    rhs = float(x[-1] ** 2 - x[0] ** 2)
    scale = max(float(np.max(x**2)), np.finfo(float).tiny)
    return abs(lhs - rhs) / scale


def match_endpoints(w: Waveform) -> Waveform:
    """Subtract the straight line through the endpoints' offset so that
    the first and last samples agree (the closed-interval hypothesis)."""
    n = len(w)
    ramp = (w.samples[-1] - w.samples[0]) * np.arange(n) / (n - 1)
    return w.with_samples(w.samples - ramp)


def verify_derivative_theorems(
    w: Waveform, tolerance: float = 0.02
) -> DerivativeTheoremReport:
    """Check the zero-correlation results on ``w`` (length >= 100)."""
    if len(w) < 100:
        raise ValueError("need at least 100 samples")
    matched = match_endpoints(w)
    dm = differentiate(matched)
    matched_corr = correlation(matched.samples[:-1], dm.samples)

    t = np.arange(0.0, 5.0, 0.001)
    exp_wave = Waveform(0.001, 0.0, np.exp(t))
    de = differentiate(exp_wave)
    exp_corr = correlation(exp_wave.samples[:-1], de.samples)

    return DerivativeTheoremReport(
        matched_corr=matched_corr,
        matched_tolerance=tolerance,
        exp_corr=exp_corr,
        telescoping_rel_error=telescoping_error(w),
    )


@dataclass(frozen=True)
class ConditionalEntry:
    x: str
    y: str
    given: tuple[str, ...]
    value: Union[float, Undefined]

    def to_dict(self) -> dict:
        v = self.value.to_dict() if isinstance(self.value, Undefined) else self.value
        return {"x": self.x, "y": self.y, "given": list(self.given), "value": v}


@dataclass
class CorrelationReport:
    """Labelled pairwise (and optionally conditional) correlations.

    ``pairwise`` holds NaN where a correlation is undefined; the matching
    reason lives in ``undefined_pairs``.  The diagonal is identically 1
    and the matrix is symmetric.
    """

    labels: list[str]
    pairwise: np.ndarray
    n_samples: int
    noise_floor: float
    undefined_pairs: dict[frozenset, Undefined] = field(default_factory=dict)
    conditional: list[ConditionalEntry] = field(default_factory=list)
    degenerate_labels: frozenset = frozenset()  # zero-variance channels

    def get(self, x: str, y: str) -> Union[float, Undefined]:
        i, j = self.labels.index(x), self.labels.index(y)
        v = self.pairwise[i, j]
        if np.isnan(v):
            return self.undefined_pairs[frozenset((x, y))]
        return float(v)

    def classified(self, x: str, y: str, floor: float | None = None) -> Union["Classification", Undefined]:
        """Significance grade of a pairwise entry under the report's floor."""
        v = self.get(x, y)
        if isinstance(v, Undefined):
            return v
        return classify(v, self.noise_floor if floor is None else floor)

    def get_conditional(self, x: str, y: str, given: Iterable[str]) -> Union[float, Undefined]:
        key = frozenset(given)
        for entry in self.conditional:
            if {entry.x, entry.y} == {x, y} and frozenset(entry.given) == key:
                return entry.value
        raise KeyError(f"no conditional entry for ({x},{y} | {sorted(key)})")

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([""] + self.labels)
            for i, row_label in enumerate(self.labels):
                row = [row_label]
                for j in range(len(self.labels)):
                    v = self.pairwise[i, j]
                    row.append("undefined" if np.isnan(v) else repr(float(v)))
                writer.writerow(row)

    def to_json_dict(self) -> dict:
        pairs = []
        for i in range(len(self.labels)):
            for j in range(i + 1, len(self.labels)):
                key = frozenset((self.labels[i], self.labels[j]))
                v = self.pairwise[i, j]
                pairs.append(
                    {
                        "x": self.labels[i],
                        "y": self.labels[j],
                        "value": self.undefined_pairs[key].to_dict()
                        if np.isnan(v)
                        else float(v),
                    }
                )
        return {
            "labels": self.labels,
            "n_samples": self.n_samples,
            "noise_floor": self.noise_floor,
            "pairwise": pairs,
            "conditional": [entry.to_dict() for entry in self.conditional],
        }


def _all_subsets(pool: list[str], max_size: int):
    from itertools import combinations

    for size in range(max_size + 1):
        yield from combinations(pool, size)


def build_report(
    data: Mapping[str, np.ndarray],
    labels: Sequence[str] | None = None,
    *,
    floor: float = 0.05,
    max_cond: int = 0,
    noise_seed: int = 0,
) -> CorrelationReport:
    """Correlation report over named series (e.g. ``trace.channels``).

    With ``max_cond > 0`` every pair gets conditional entries for all
    conditioning subsets of the remaining labels up to that size, which is
    what the skeleton search consumes.
    """
    if labels is None:
        labels = list(data)
    arrays = {name: _as_array(data[name]) for name in labels}
    n = len(next(iter(arrays.values()))) if arrays else 0
    m = len(labels)
    matrix = np.eye(m)
    degenerate = frozenset(name for name in labels if arrays[name].std() == 0)
    undefined: dict[frozenset, Undefined] = {}
    for i in range(m):
        for j in range(i + 1, m):
            try:
                v = correlation(arrays[labels[i]], arrays[labels[j]])
            except ZeroVarianceError as exc:
                side_label = {
                    "x": labels[i],
                    "y": labels[j],
                    "both": f"{labels[i]},{labels[j]}",
                }[exc.side]
                undefined[frozenset((labels[i], labels[j]))] = Undefined(
                    reason=f"zero variance: {side_label}", side=exc.side
                )
                v = np.nan
            matrix[i, j] = matrix[j, i] = v
    conditional: list[ConditionalEntry] = []
    if max_cond > 0:
        for i in range(m):
            for j in range(i + 1, m):
                x, y = labels[i], labels[j]
                others = [c for c in labels if c not in (x, y)]
                for subset in _all_subsets(others, max_cond):
                    if not subset:
                        continue
                    value = partial_correlation(
                        arrays[x],
                        arrays[y],
                        [arrays[z] for z in subset],
                        noise_seed=derive_seed(noise_seed, f"{x}|{y}|{','.join(subset)}"),
                    )
                    conditional.append(ConditionalEntry(x, y, tuple(subset), value))
    return CorrelationReport(
        labels=list(labels),
        pairwise=matrix,
        n_samples=n,
        noise_floor=floor,
        undefined_pairs=undefined,
        conditional=conditional,
        degenerate_labels=degenerate,
    )


def trace_report(trace, *, floor: float = 0.05, max_cond: int = 0, labels=None) -> CorrelationReport:
    """Report over a Trace's channels, transient discarded."""
    names = labels if labels is not None else trace.names
    data = {name: trace.steady(name) for name in names}
    return build_report(data, names, floor=floor, max_cond=max_cond,
                        noise_seed=trace.scenario.seed)
