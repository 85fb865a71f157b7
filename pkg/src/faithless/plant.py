"""Fixed-step simulation of the demonstration dynamical systems.

Every model is integrated with explicit forward Euler at the scenario's
time step, producing a :class:`Trace` of named, sample-aligned channels.
The linear recurrences are evaluated with ``scipy.signal.lfilter``, which
is exact for these difference equations and fast enough for million-step
runs.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from .signals import Waveform, derive_seed, gen_step, _smooth_noise_samples

__all__ = [
    "MODELS",
    "SmoothNoiseInput",
    "StepInput",
    "ConstantInput",
    "RampInput",
    "InputSpec",
    "ScenarioSpec",
    "Trace",
    "InstabilityError",
    "simulate",
    "calibrate_sigma_do",
    "settling_time",
]

MODELS = (
    "IntegralLoop",
    "SplitDisturbanceLoop",
    "ProportionalLoop",
    "Capacitor",
    "PassiveEquilibrium",
    "FeedforwardLoop",
)

# Input channels each model accepts; any omitted channel is held at zero.
MODEL_INPUTS = {
    "IntegralLoop": ("R", "D"),
    "SplitDisturbanceLoop": ("R", "D0", "D1"),
    "ProportionalLoop": ("R", "D_O", "D_P"),
    "Capacitor": ("V",),
    "PassiveEquilibrium": ("D",),
    "FeedforwardLoop": ("R", "D_O", "D_P"),
}

# Trajectories above this multiple of the input scale abort the run.
INSTABILITY_FACTOR = 1e6

# Share of the reference-tracking error budget assigned to the output-side
# disturbance when its amplitude is calibrated automatically (see
# calibrate_sigma_do).
ERROR_MATCH_FRACTION = 0.88


class InstabilityError(RuntimeError):
    """A channel exceeded the runaway guard; the configuration is unstable."""

    def __init__(self, channel: str, peak: float, limit: float):
        super().__init__(
            f"channel {channel} reached |{peak:.3g}| > {limit:.3g}; "
            "the loop configuration is unstable"
        )
        self.channel = channel
        self.peak = peak


@dataclass(frozen=True)
class SmoothNoiseInput:
    coherence_time: float
    sigma: Union[float, str] = 1.0  # a float, or "auto" for D_O calibration
    seed: int | None = None  # derived from the scenario seed when absent

    kind = "smooth_noise"

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "coherence_time": self.coherence_time, "sigma": self.sigma}
        if self.seed is not None:
            d["seed"] = self.seed
        return d


@dataclass(frozen=True)
class StepInput:
    t_step: float
    before: float
    after: float

    kind = "step"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "t_step": self.t_step,
            "before": self.before,
            "after": self.after,
        }


@dataclass(frozen=True)
class ConstantInput:
    value: float

    kind = "constant"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class RampInput:
    slope: float
    start: float = 0.0

    kind = "ramp"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "slope": self.slope, "start": self.start}


InputSpec = Union[SmoothNoiseInput, StepInput, ConstantInput, RampInput]

_INPUT_KINDS = {
    "smooth_noise": SmoothNoiseInput,
    "step": StepInput,
    "constant": ConstantInput,
    "ramp": RampInput,
}


def input_from_dict(d: dict, where: str = "input") -> InputSpec:
    if not isinstance(d, dict) or "kind" not in d:
        raise ValueError(f"{where}: expected an object with a 'kind' field")
    kind = d["kind"]
    cls = _INPUT_KINDS.get(kind)
    if cls is None:
        raise ValueError(f"{where}.kind: unknown input kind {kind!r}")
    args = {k: v for k, v in d.items() if k != "kind"}
    try:
        return cls(**args)
    except TypeError as exc:
        raise ValueError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to reproduce one simulation run bit-for-bit."""

    model: str
    dt: float
    n_steps: int
    seed: int
    k: float = 0.0  # loop gain (IntegralLoop, SplitDisturbanceLoop, ProportionalLoop)
    lag: float = 0.0  # transport lag in seconds, a multiple of dt
    inputs: dict[str, InputSpec] = field(default_factory=dict)
    initial_state: dict[str, float] = field(default_factory=dict)
    kappa: float | None = None  # spring constant (PassiveEquilibrium)
    friction: float | None = None  # viscous friction (PassiveEquilibrium)
    bias: float = 0.0  # disturbance-measurement bias (FeedforwardLoop)
    discard_transient: float | None = None  # seconds; None = 5 settling times

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"model: unknown model {self.model!r}; expected one of {MODELS}")
        if self.dt <= 0:
            raise ValueError(f"dt: must be positive, got {self.dt}")
        if self.n_steps <= 0:
            raise ValueError(f"n_steps: must be a positive integer, got {self.n_steps}")
        if self.lag < 0:
            raise ValueError(f"lag: must be nonnegative, got {self.lag}")
        steps = self.lag / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"lag: {self.lag} is not a multiple of dt {self.dt}")
        allowed = MODEL_INPUTS[self.model]
        for name in self.inputs:
            if name not in allowed:
                raise ValueError(
                    f"inputs.{name}: model {self.model} accepts only {allowed}"
                )
        for name, spec in self.inputs.items():
            if isinstance(spec, SmoothNoiseInput) and spec.sigma == "auto":
                if not (self.model == "ProportionalLoop" and name == "D_O"):
                    raise ValueError(
                        f"inputs.{name}.sigma: 'auto' is only supported for D_O "
                        "of the ProportionalLoop"
                    )
        if self.model == "PassiveEquilibrium":
            if not self.kappa or self.kappa <= 0:
                raise ValueError("kappa: must be positive for PassiveEquilibrium")
            if not self.friction or self.friction <= 0:
                raise ValueError("friction: must be positive for PassiveEquilibrium")
        if self.model == "IntegralLoop" and self.lag > 0 and self.k * self.lag >= 1:
            warnings.warn(
                f"k*lag = {self.k * self.lag:.3g} >= 1: the lagged integral loop "
                "is unstable in this regime",
                stacklevel=2,
            )

    @property
    def lag_steps(self) -> int:
        return int(round(self.lag / self.dt))

    @property
    def duration(self) -> float:
        return self.dt * (self.n_steps - 1)

    def input_seed(self, channel: str) -> int:
        spec = self.inputs.get(channel)
        if isinstance(spec, SmoothNoiseInput) and spec.seed is not None:
            return spec.seed
        return derive_seed(self.seed, channel)

    def to_dict(self) -> dict:
        d = {
            "model": self.model,
            "dt": self.dt,
            "n_steps": self.n_steps,
            "seed": self.seed,
            "k": self.k,
            "lag": self.lag,
            "inputs": {name: s.to_dict() for name, s in sorted(self.inputs.items())},
            "initial_state": dict(sorted(self.initial_state.items())),
            "bias": self.bias,
            "discard_transient": self.discard_transient,
        }
        if self.kappa is not None:
            d["kappa"] = self.kappa
        if self.friction is not None:
            d["friction"] = self.friction
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        if not isinstance(d, dict):
            raise ValueError("scenario: expected a JSON object")
        known = {
            "model", "dt", "n_steps", "seed", "k", "lag", "inputs",
            "initial_state", "kappa", "friction", "bias", "discard_transient",
        }
        for key in d:
            if key not in known:
                raise ValueError(f"scenario.{key}: unknown field")
        for req in ("model", "dt", "n_steps", "seed"):
            if req not in d:
                raise ValueError(f"scenario.{req}: required field missing")
        inputs = {
            name: input_from_dict(spec, f"inputs.{name}")
            for name, spec in d.get("inputs", {}).items()
        }
        return cls(
            model=d["model"],
            dt=d["dt"],
            n_steps=int(d["n_steps"]),
            seed=int(d["seed"]),
            k=d.get("k", 0.0),
            lag=d.get("lag", 0.0),
            inputs=inputs,
            initial_state={k: float(v) for k, v in d.get("initial_state", {}).items()},
            kappa=d.get("kappa"),
            friction=d.get("friction"),
            bias=d.get("bias", 0.0),
            discard_transient=d.get("discard_transient"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Trace:
    """Named, sample-aligned channels produced by one simulation run."""

    channels: dict[str, Waveform]
    scenario: ScenarioSpec
    warmup_steps: int = 0

    def __post_init__(self):
        lengths = {len(w) for w in self.channels.values()}
        dts = {w.dt for w in self.channels.values()}
        t0s = {w.t0 for w in self.channels.values()}
        if len(lengths) > 1 or len(dts) > 1 or len(t0s) > 1:
            raise ValueError("all channels must share dt, t0 and length")

    def __getitem__(self, name: str) -> Waveform:
        return self.channels[name]

    @property
    def names(self) -> list[str]:
        return list(self.channels)

    @property
    def n_samples(self) -> int:
        return len(next(iter(self.channels.values())))

    def steady(self, name: str) -> np.ndarray:
        """Samples of a channel with the initial transient discarded."""
        return self.channels[name].samples[self.warmup_steps :]

    def to_csv(self, path) -> None:
        data = {"time": next(iter(self.channels.values())).times()}
        data.update({name: w.samples for name, w in self.channels.items()})
        pd.DataFrame(data).to_csv(path, index=False, float_format="%.12g")


def settling_time(spec: ScenarioSpec) -> float | None:
    """Characteristic settling time of the closed loop, if there is one."""
    if spec.model in ("IntegralLoop", "SplitDisturbanceLoop", "ProportionalLoop"):
        return 1.0 / spec.k if spec.k > 0 else None
    if spec.model == "PassiveEquilibrium":
        return spec.friction / spec.kappa
    return None


def _warmup_steps(spec: ScenarioSpec) -> int:
    if spec.discard_transient is not None:
        seconds = spec.discard_transient
    else:
        settle = settling_time(spec)
        seconds = 0.0 if settle is None else 5.0 * settle
    return min(int(round(seconds / spec.dt)), spec.n_steps - 1)


def resolve_input(spec: ScenarioSpec, channel: str) -> Waveform:
    """Materialise one input channel as a Waveform of n_steps samples."""
    n, dt = spec.n_steps, spec.dt
    inp = spec.inputs.get(channel)
    if inp is None:
        return Waveform(dt, 0.0, np.zeros(n))
    if isinstance(inp, ConstantInput):
        return Waveform(dt, 0.0, np.full(n, float(inp.value)))
    if isinstance(inp, StepInput):
        w = gen_step(inp.t_step, inp.before, inp.after, dt * (n - 1), dt)
        return w
    if isinstance(inp, RampInput):
        return Waveform(dt, 0.0, inp.start + inp.slope * dt * np.arange(n))
    if isinstance(inp, SmoothNoiseInput):
        sigma = inp.sigma
        if sigma == "auto":
            raise ValueError(
                f"inputs.{channel}.sigma is 'auto'; resolve the scenario with "
                "calibrate_sigma_do (simulate() does this automatically)"
            )
        samples = _smooth_noise_samples(
            n, dt, inp.coherence_time, float(sigma), spec.input_seed(channel)
        )
        return Waveform(dt, 0.0, samples)
    raise TypeError(f"unsupported input spec {inp!r}")


def _input_scale(inputs: dict[str, Waveform]) -> float:
    peaks = [float(np.max(np.abs(w.samples))) for w in inputs.values()]
    scale = max(peaks, default=0.0)
    return scale if scale > 0 else 1.0


def _guard(channels: dict[str, np.ndarray], scale: float) -> None:
    limit = INSTABILITY_FACTOR * scale
    for name, samples in channels.items():
        peak = float(np.max(np.abs(samples)))
        if not np.isfinite(peak) or peak > limit:
            raise InstabilityError(name, peak, limit)


def _first_order(a_coeff: float, drive: np.ndarray, x0: float) -> np.ndarray:
    """x[i+1] = a x[i] + drive[i], x[0] = x0, evaluated without a Python loop."""
    particular = lfilter([0.0, 1.0], [1.0, -a_coeff], drive)
    if x0 == 0.0:
        return particular
    homogeneous = x0 * np.power(a_coeff, np.arange(drive.size))
    return homogeneous + particular


def _integral_like(spec: ScenarioSpec, disturbance: np.ndarray, extra: dict) -> dict:
    """Shared core of IntegralLoop and SplitDisturbanceLoop.

    O[i+1] = O[i] + k (R[i] - P[i]) dt with P[i] = O[i - L] + D[i] and O
    frozen at its initial value for negative indices.
    """
    k, dt, L = spec.k, spec.dt, spec.lag_steps
    n = spec.n_steps
    R = resolve_input(spec, "R")
    o0 = spec.initial_state.get("O", 0.0)
    drive = k * dt * (R.samples - disturbance - o0)
    a = np.zeros(L + 2)
    a[0], a[1] = 1.0, -1.0
    a[L + 1] += k * dt
    O = o0 + lfilter([0.0, 1.0], a, drive)
    if L > 0:
        O_lagged = np.concatenate([np.full(L, o0), O[:-L]])
    else:
        O_lagged = O
    P = O_lagged + disturbance
    E = R.samples - P
    return {"P": P, "R": R.samples, "E": E, "O": O, **extra}


def _simulate_integral(spec: ScenarioSpec) -> dict:
    D = resolve_input(spec, "D")
    return _integral_like(spec, D.samples, {"D": D.samples})


def _simulate_split(spec: ScenarioSpec) -> dict:
    D0 = resolve_input(spec, "D0")
    D1 = resolve_input(spec, "D1")
    D = D0.samples + D1.samples
    out = _integral_like(spec, D, {"D0": D0.samples, "D1": D1.samples, "D": D})
    out["O+D0"] = out["O"] + D0.samples
    return out


def _simulate_proportional(spec: ScenarioSpec) -> dict:
    k, dt = spec.k, spec.dt
    R = resolve_input(spec, "R").samples
    D_O = resolve_input(spec, "D_O").samples
    D_P = resolve_input(spec, "D_P").samples
    x0 = spec.initial_state.get("X", 0.0)
    # X[i+1] = X[i] + (O[i] + D_O[i]) dt with O = k (R - P), P = D_P + X
    drive = dt * (k * R - k * D_P + D_O)
    X = _first_order(1.0 - k * dt, drive, x0)
    P = D_P + X
    E = R - P
    O = k * E
    return {"P": P, "R": R, "E": E, "O": O, "D_O": D_O, "D_P": D_P}


def _simulate_capacitor(spec: ScenarioSpec) -> dict:
    V = resolve_input(spec, "V")
    raw = np.diff(V.samples) / spec.dt
    v_trunc = V.samples[:-1]
    if v_trunc.std() == 0:
        raise ValueError(
            "V is constant, so the scaling that equalises the V and I "
            "standard deviations is undefined"
        )
    # A ramp gives a constant current (up to rounding jitter in the
    # differences); the scaling is then moot, keep 1.
    spread = raw.std()
    if spread <= 1e-9 * max(float(np.max(np.abs(raw))), np.finfo(float).tiny):
        return {"V": v_trunc, "I": raw}
    return {"V": v_trunc, "I": (v_trunc.std() / spread) * raw}


def _simulate_passive(spec: ScenarioSpec) -> dict:
    # Overdamped relaxation tau dP/dt = -P + D/kappa with tau = friction/kappa.
    tau = spec.friction / spec.kappa
    dt = spec.dt
    D = resolve_input(spec, "D").samples
    p0 = spec.initial_state.get("P", 0.0)
    P = _first_order(1.0 - dt / tau, (dt / (tau * spec.kappa)) * D, p0)
    return {"P": P, "D": D, "O": -spec.kappa * P}


def _simulate_feedforward(spec: ScenarioSpec) -> dict:
    # Output cancels the *measured* output-side disturbance and never looks
    # at P, so any measurement bias integrates into an unbounded drift.
    dt = spec.dt
    R = resolve_input(spec, "R").samples
    D_O = resolve_input(spec, "D_O").samples
    D_P = resolve_input(spec, "D_P").samples
    O = -(D_O + spec.bias)
    x0 = spec.initial_state.get("X", 0.0)
    X = x0 + np.concatenate([[0.0], np.cumsum((O + D_O)[:-1]) * dt])
    P = D_P + X
    return {"P": P, "R": R, "E": R - P, "O": O, "D_O": D_O, "D_P": D_P}


_SIMULATORS = {
    "IntegralLoop": _simulate_integral,
    "SplitDisturbanceLoop": _simulate_split,
    "ProportionalLoop": _simulate_proportional,
    "Capacitor": _simulate_capacitor,
    "PassiveEquilibrium": _simulate_passive,
    "FeedforwardLoop": _simulate_feedforward,
}


def resolve_auto_sigma(spec: ScenarioSpec) -> ScenarioSpec:
    """Replace a sigma='auto' D_O input with its calibrated amplitude."""
    inp = spec.inputs.get("D_O")
    if not (isinstance(inp, SmoothNoiseInput) and inp.sigma == "auto"):
        return spec
    sigma = calibrate_sigma_do(spec)
    inputs = dict(spec.inputs)
    inputs["D_O"] = replace(inp, sigma=sigma)
    return replace(spec, inputs=inputs)


def simulate(spec: ScenarioSpec) -> Trace:
    """Run one scenario and return its Trace.

    Deterministic: the same spec (seed included) yields the identical
    trace.  Raises :class:`InstabilityError` if any channel exceeds
    1e6 times the input scale.
    """
    spec = resolve_auto_sigma(spec)
    arrays = _SIMULATORS[spec.model](spec)
    input_waves = {
        name: resolve_input(spec, name) for name in MODEL_INPUTS[spec.model]
    }
    _guard(arrays, _input_scale(input_waves))
    dt = spec.dt
    channels = {name: Waveform(dt, 0.0, samples) for name, samples in arrays.items()}
    return Trace(channels=channels, scenario=spec, warmup_steps=_warmup_steps(spec))


def _error_sigma(spec: ScenarioSpec, active: str, sigma: float) -> float:
    """Std of E when only one disturbance channel of the loop is active."""
    inputs = {}
    inp = spec.inputs.get(active)
    if not isinstance(inp, SmoothNoiseInput):
        raise ValueError(f"inputs.{active}: calibration needs a smooth-noise input")
    inputs[active] = replace(inp, sigma=sigma)
    probe = replace(spec, inputs=inputs)
    trace = simulate(probe)
    return float(trace.steady("E").std())


def calibrate_sigma_do(
    spec: ScenarioSpec,
    match_fraction: float = ERROR_MATCH_FRACTION,
    tol: float = 0.02,
    max_iter: int = 8,
) -> float:
    """Amplitude for D_O such that its error contribution is a fixed
    fraction of the error contribution of D_P.

    Secant iteration on sigma(D_O) until
    sigma(E | D_O only) = match_fraction * sigma(E | D_P only) within
    ``tol`` relative error.  The loop is linear, so this converges in one
    step up to floating-point noise.
    """
    dp = spec.inputs.get("D_P")
    if not isinstance(dp, SmoothNoiseInput) or dp.sigma == "auto":
        raise ValueError("calibration needs a concrete smooth-noise D_P input")
    target = match_fraction * _error_sigma(spec, "D_P", float(dp.sigma))
    sigma = float(dp.sigma)  # starting guess
    response = _error_sigma(spec, "D_O", sigma)
    for _ in range(max_iter):
        if abs(response - target) <= tol * target:
            break
        sigma *= target / response
        response = _error_sigma(spec, "D_O", sigma)
    else:
        raise RuntimeError("sigma(D_O) calibration did not converge")
    return sigma
