"""Point-set emission for the voltage/current demonstration.

One long capacitor run supplies five CSV panels: the two time series, a
dense scatter over a short window (where the trajectories are visible),
and decimated scatters over a short and a long window (where each point
is an independent draw and the V-I relation is gone).  Rendering is left
to external tools.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import pandas as pd

from .plant import ScenarioSpec, SmoothNoiseInput, simulate
from .stats import correlation, decimate, mutual_information

__all__ = ["Figure1Summary", "figure1"]

DT = 0.01
COHERENCE = 1.0
LONG_DURATION = 40_000.0  # decimated panel: 20k independent points
DENSE_WINDOW = 50.0  # short enough that trajectories dominate the scatter
TIMESERIES_WINDOW = 20.0
SAMPLE_INTERVAL = 2.0  # twice the coherence time
SHORT_SAMPLED_WINDOW = 200.0
MI_BINS = 16


@dataclass(frozen=True)
class Figure1Summary:
    corr_dense: float
    corr_sampled: float
    mi_dense: float
    mi_sampled: float
    std_v: float
    std_i: float
    n_dense: int
    n_sampled: int

    def to_dict(self) -> dict:
        return {
            "corr_dense": self.corr_dense,
            "corr_sampled": self.corr_sampled,
            "mi_dense_nats": self.mi_dense,
            "mi_sampled_nats": self.mi_sampled,
            "std_v": self.std_v,
            "std_i": self.std_i,
            "n_dense": self.n_dense,
            "n_sampled": self.n_sampled,
            "sample_interval": SAMPLE_INTERVAL,
            "mi_bins": MI_BINS,
        }


def _write(path: Path, frame: pd.DataFrame) -> None:
    frame.to_csv(path, index=False, float_format="%.12g")


def figure1(seed: int, out_dir) -> Figure1Summary:
    """Write the five panel CSVs plus a JSON summary; returns the summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_steps = int(round(LONG_DURATION / DT)) + 1
    spec = ScenarioSpec(
        model="Capacitor",
        dt=DT,
        n_steps=n_steps,
        seed=seed,
        inputs={"V": SmoothNoiseInput(coherence_time=COHERENCE, sigma=1.0)},
    )
    trace = simulate(spec)
    v, i = trace["V"], trace["I"]
    t = v.times()

    n_ts = int(TIMESERIES_WINDOW / DT)
    _write(out / "fig1a_voltage.csv", pd.DataFrame({"time": t[:n_ts], "V": v.samples[:n_ts]}))
    _write(out / "fig1b_current.csv", pd.DataFrame({"time": t[:n_ts], "I": i.samples[:n_ts]}))

    n_dense = int(DENSE_WINDOW / DT)
    vd, id_ = v.samples[:n_dense], i.samples[:n_dense]
    _write(out / "fig1c_dense_scatter.csv", pd.DataFrame({"V": vd, "I": id_}))

    vs_all = decimate(v, SAMPLE_INTERVAL)
    is_all = decimate(i, SAMPLE_INTERVAL)
    n_short = int(SHORT_SAMPLED_WINDOW / SAMPLE_INTERVAL)
    _write(
        out / "fig1d_sampled_scatter.csv",
        pd.DataFrame({"V": vs_all.samples[:n_short], "I": is_all.samples[:n_short]}),
    )
    _write(
        out / "fig1e_sampled_scatter_long.csv",
        pd.DataFrame({"V": vs_all.samples, "I": is_all.samples}),
    )

    summary = Figure1Summary(
        corr_dense=correlation(vd, id_),
        corr_sampled=correlation(vs_all.samples, is_all.samples),
        mi_dense=mutual_information(vd, id_, MI_BINS),
        mi_sampled=mutual_information(vs_all.samples, is_all.samples, MI_BINS),
        std_v=float(v.samples.std()),
        std_i=float(i.samples.std()),
        n_dense=n_dense,
        n_sampled=len(vs_all),
    )
    (out / "fig1_summary.json").write_text(
        json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    return summary
