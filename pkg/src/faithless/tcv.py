"""Test for the Controlled Variable.

Disturb a plant, compare each candidate variable's observed response with
the response the declared physical path predicts, and flag candidates
that stay put.  A flagged candidate plus some other channel moving in
near-perfect opposition to the disturbance is the signature of a control
loop acting on that variable.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

from .plant import ConstantInput, ScenarioSpec, SmoothNoiseInput, settling_time, simulate
from .stats import correlation

__all__ = ["CandidateResult", "TcvReport", "run_tcv"]

DEFAULT_THRESHOLD = 10.0
OPPOSING_CUT = -0.9
# the disturbance must be slow enough for the loop to act on it
MIN_COHERENCE_SETTLING_RATIO = 10.0


@dataclass(frozen=True)
class CandidateResult:
    channel: str
    expected_sigma: float  # disturbance mapped through the declared path
    observed_sigma: float  # std of (disturbed - undisturbed) response
    stability_ratio: float  # expected / observed
    controlled: bool | None  # None when no verdict was issued


@dataclass
class TcvReport:
    disturbance_channel: str
    threshold: float
    candidates: list[CandidateResult]
    opposing: list[tuple[str, float]]  # (channel, corr with disturbance)
    warning: str | None = None
    disturbance_correlations: dict[str, float] | None = None

    @property
    def verdict_available(self) -> bool:
        return self.warning is None

    def controlled_channels(self) -> list[str]:
        return [c.channel for c in self.candidates if c.controlled]

    def to_dict(self) -> dict:
        return {
            "disturbance_channel": self.disturbance_channel,
            "threshold": self.threshold,
            "warning": self.warning,
            "candidates": [
                {
                    "channel": c.channel,
                    "expected_sigma": c.expected_sigma,
                    "observed_sigma": c.observed_sigma,
                    "stability_ratio": None
                    if math.isinf(c.stability_ratio)
                    else c.stability_ratio,
                    "controlled": c.controlled,
                }
                for c in self.candidates
            ],
            "opposing": [{"channel": ch, "corr": r} for ch, r in self.opposing],
            "disturbance_correlations": self.disturbance_correlations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self) -> str:
        lines = [f"disturbance: {self.disturbance_channel}  threshold: {self.threshold:g}"]
        if self.warning:
            lines.append(f"WARNING: {self.warning}")
        for c in self.candidates:
            ratio = "inf" if math.isinf(c.stability_ratio) else f"{c.stability_ratio:.1f}"
            verdict = (
                "no verdict" if c.controlled is None
                else ("CONTROLLED" if c.controlled else "responds freely")
            )
            lines.append(
                f"  {c.channel}: expected sigma {c.expected_sigma:.3g}, "
                f"observed {c.observed_sigma:.3g}, ratio {ratio} -> {verdict}"
            )
        if self.opposing:
            for ch, r in self.opposing:
                lines.append(f"  opposing output candidate: {ch} (corr {r:+.3f})")
        elif self.verdict_available:
            lines.append("  no opposing output found")
        return "\n".join(lines)


def _without_disturbance(spec: ScenarioSpec, channel: str) -> ScenarioSpec:
    inputs = dict(spec.inputs)
    inputs[channel] = ConstantInput(0.0)
    return replace(spec, inputs=inputs)


def run_tcv(
    plant: ScenarioSpec,
    disturbance_channel: str,
    candidates: set[str] | list[str],
    threshold: float = DEFAULT_THRESHOLD,
    opposing_cut: float = OPPOSING_CUT,
    open_path_gain: float = 1.0,
) -> TcvReport:
    """Apply the controlled-variable test to one plant configuration.

    Simulates the plant with and without the disturbance; a candidate is
    flagged controlled when (expected effect)/(observed effect) reaches
    ``threshold``.  For the additive disturbances used here the expected
    effect is sigma(D) times ``open_path_gain``.

    If the disturbance varies faster than the loop can respond (coherence
    under 10 settling times) no verdict is issued, only a degraded-power
    warning: only by letting the loop act can the test see it acting.
    """
    spec = plant
    disturbance_input = spec.inputs.get(disturbance_channel)
    if disturbance_input is None:
        raise ValueError(f"plant has no input on channel {disturbance_channel}")

    warning = None
    settle = settling_time(spec)
    if settle is not None and isinstance(disturbance_input, SmoothNoiseInput):
        required = MIN_COHERENCE_SETTLING_RATIO * settle
        if disturbance_input.coherence_time < required:
            warning = (
                f"disturbance coherence {disturbance_input.coherence_time:g}s is under "
                f"{MIN_COHERENCE_SETTLING_RATIO:g} settling times ({required:g}s); "
                "the loop cannot act on it, so the test has no power"
            )

    disturbed = simulate(spec)
    baseline = simulate(_without_disturbance(spec, disturbance_channel))
    d = disturbed.steady(disturbance_channel)
    expected = float(d.std()) * open_path_gain

    results = []
    for channel in sorted(candidates):
        response = disturbed.steady(channel) - baseline.steady(channel)
        observed = float(response.std())
        ratio = math.inf if observed == 0 else expected / observed
        controlled = None if warning else bool(ratio >= threshold)
        results.append(
            CandidateResult(
                channel=channel,
                expected_sigma=expected,
                observed_sigma=observed,
                stability_ratio=ratio,
                controlled=controlled,
            )
        )

    corrs: dict[str, float] = {}
    for channel in disturbed.names:
        if channel == disturbance_channel:
            continue
        series = disturbed.steady(channel)
        if series.std() == 0 or d.std() == 0:
            continue
        corrs[channel] = correlation(series, d)

    # An opposing output only means something when a variable is being held
    # constant; never nominate the disturbance or a flagged variable itself.
    opposing: list[tuple[str, float]] = []
    flagged = {c.channel for c in results if c.controlled}
    if flagged:
        for channel, r in corrs.items():
            if channel in flagged:
                continue
            if r <= opposing_cut:
                opposing.append((channel, r))
        opposing.sort(key=lambda item: item[1])

    return TcvReport(
        disturbance_channel=disturbance_channel,
        threshold=threshold,
        candidates=results,
        opposing=opposing,
        warning=warning,
        disturbance_correlations=corrs,
    )
