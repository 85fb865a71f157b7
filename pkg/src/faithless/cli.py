"""Command-line front end.

Subcommands: simulate, table, figure1, verify-theorems, calibrate,
discover, tcv.  Every command writes its outputs plus a manifest
recording the fully resolved scenario, seeds, tool version and output
hashes, so any run can be reproduced byte-for-byte.

Exit codes: 0 success, 1 validation failure, 2 numerical instability,
3 acceptance-tolerance failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .causal import (
    causality_vs_correlation_text,
    faithfulness_violations,
    loop_ground_truth,
    pc_skeleton,
)
from .figures import figure1
from .plant import InstabilityError, ScenarioSpec, simulate
from .signals import Waveform, differentiate, _smooth_noise_samples
from .stats import (
    calibrate_significance,
    correlation,
    trace_report,
    verify_derivative_theorems,
)
from .tables import run_table, table_numbers
from .tcv import run_tcv

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INSTABILITY = 2
EXIT_TOLERANCE = 3

DEFAULT_SEED = 2
SEED_ENV_VAR = "FAITHLESS_SEED"


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; keep 2 reserved for instability
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message, EXIT_VALIDATION)


def default_seed() -> int:
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"{SEED_ENV_VAR} must be an integer, got {env!r}")
    return DEFAULT_SEED


def builtin_config_names() -> list[str]:
    root = resources.files("faithless.configs")
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def load_config_text(path_or_name: str) -> tuple[str, str]:
    """Return (text, resolved name).  Bare names resolve to bundled configs."""
    p = Path(path_or_name)
    if p.exists():
        return p.read_text(), str(p)
    if "/" not in path_or_name and "\\" not in path_or_name:
        name = path_or_name if path_or_name.endswith(".json") else path_or_name + ".json"
        entry = resources.files("faithless.configs").joinpath(name)
        if entry.is_file():
            return entry.read_text(), f"builtin:{name}"
    raise CliError(f"config not found: {path_or_name}")


def parse_scenario(text: str, origin: str, seed_override: int | None) -> ScenarioSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{origin}: line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if seed_override is not None:
        data["seed"] = seed_override
    try:
        return ScenarioSpec.from_dict(data)
    except (ValueError, TypeError) as exc:
        raise CliError(f"{origin}: {exc}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(
    out_dir: Path,
    command: str,
    invocation: dict,
    started: float,
    scenario: ScenarioSpec | None = None,
    extra: dict | None = None,
) -> Path:
    outputs = {
        p.name: _sha256(p)
        for p in sorted(out_dir.iterdir())
        if p.is_file() and p.name != "manifest.json"
    }
    manifest = {
        "command": command,
        "tool_version": __version__,
        "invocation": invocation,
        "outputs": outputs,
        "wall_clock_seconds": round(time.time() - started, 3),
    }
    if scenario is not None:
        manifest["scenario"] = scenario.to_dict()
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    started = time.time()
    text, origin = load_config_text(args.config)
    spec = parse_scenario(text, origin, args.seed)
    out = _out_dir(args)
    try:
        trace = simulate(spec)
    except InstabilityError as exc:
        print(f"instability: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    trace.to_csv(out / "trace.csv")
    report = trace_report(trace, floor=args.floor)
    report.to_csv(out / "correlations.csv")
    (out / "correlations.json").write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )
    write_manifest(
        out,
        "simulate",
        {"command": "simulate", "config": args.config, "seed": spec.seed, "floor": args.floor},
        started,
        scenario=trace.scenario,
    )
    print(f"simulated {spec.model} for {spec.n_steps} steps -> {out}")
    return EXIT_OK


def cmd_table(args) -> int:
    started = time.time()
    seed = args.seed if args.seed is not None else default_seed()
    if args.number not in table_numbers():
        raise CliError(f"table must be one of {table_numbers()}")
    result = run_table(args.number, seed)
    out = _out_dir(args)
    rows = result.to_rows()
    import csv

    with open(out / f"table{args.number}_cells.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    (out / f"table{args.number}_report.txt").write_text(result.render() + "\n")
    write_manifest(
        out,
        "table",
        {"command": "table", "number": args.number, "seed": seed},
        started,
        extra={
            "scenarios": {s.name: s.scenario.to_dict() for s in result.subtables},
            "all_pass": result.all_pass,
        },
    )
    print(result.render())
    return EXIT_OK if result.all_pass else EXIT_TOLERANCE


def cmd_figure1(args) -> int:
    started = time.time()
    seed = args.seed if args.seed is not None else default_seed()
    out = _out_dir(args)
    summary = figure1(seed, out)
    write_manifest(
        out, "figure1", {"command": "figure1", "seed": seed}, started,
        extra={"summary": summary.to_dict()},
    )
    print(json.dumps(summary.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_verify_theorems(args) -> int:
    started = time.time()
    seed = args.seed if args.seed is not None else default_seed()
    out = _out_dir(args)
    n, dt = 1_000_000, 0.001
    noise = Waveform(dt, 0.0, _smooth_noise_samples(n, dt, 1.0, 1.0, seed))
    report = verify_derivative_theorems(noise)

    raw_corr = correlation(noise.samples[:-1], differentiate(noise).samples)

    n_sine = 8_000_000
    dt_sine = 2 * math.pi / n_sine
    sine = Waveform(dt_sine, 0.0, np.sin(dt_sine * np.arange(n_sine + 1)))
    sine_corr = correlation(sine.samples[:-1], differentiate(sine).samples)

    checks = [
        ("closed-interval zero correlation (endpoints matched)",
         f"corr(x, dx/dt) = {report.matched_corr:+.2e}", report.matched_ok),
        ("long-run zero correlation (bounded signal)",
         f"corr(x, dx/dt) = {raw_corr:+.2e}", abs(raw_corr) < 0.02),
        ("exponential counterexample",
         f"corr(e^t, de^t/dt) = {report.exp_corr:.9f}", report.exp_ok),
        ("telescoping identity",
         f"relative error = {report.telescoping_rel_error:.2e}", report.telescoping_ok),
        ("sine over whole periods",
         f"corr(sin, dsin/dt) = {sine_corr:+.2e}", abs(sine_corr) < 1e-6),
    ]
    lines = []
    for name, detail, ok in checks:
        lines.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        print(lines[-1])
    (out / "theorems.txt").write_text("\n".join(lines) + "\n")
    (out / "theorems.json").write_text(
        json.dumps(
            {
                "matched_corr": report.matched_corr,
                "long_run_corr": raw_corr,
                "exp_corr": report.exp_corr,
                "telescoping_rel_error": report.telescoping_rel_error,
                "sine_corr": sine_corr,
                "all_pass": all(ok for _, _, ok in checks),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    write_manifest(out, "verify-theorems", {"command": "verify-theorems", "seed": seed}, started)
    return EXIT_OK if all(ok for _, _, ok in checks) else EXIT_TOLERANCE


def cmd_calibrate(args) -> int:
    started = time.time()
    seed = args.seed if args.seed is not None else default_seed()
    out = _out_dir(args)
    cal = calibrate_significance(
        coherence_time=args.coherence_time,
        n_steps=args.n_steps,
        dt=args.dt,
        n_runs=args.runs,
        seed=seed,
        workers=args.workers,
    )
    payload = {
        "coherence_time": cal.coherence_time,
        "n_steps": cal.n_steps,
        "dt": cal.dt,
        "n_runs": cal.n_runs,
        "seed": cal.seed,
        "std_of_null_correlation": cal.std_of_null_correlation,
    }
    (out / "calibration.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    write_manifest(
        out,
        "calibrate",
        {
            "command": "calibrate",
            "coherence_time": args.coherence_time,
            "n_steps": args.n_steps,
            "dt": args.dt,
            "runs": args.runs,
            "seed": seed,
            "workers": args.workers,
        },
        started,
    )
    print(f"std of null correlation: {cal.std_of_null_correlation:.5f}")
    return EXIT_OK


def cmd_discover(args) -> int:
    started = time.time()
    text, origin = load_config_text(args.config)
    spec = parse_scenario(text, origin, args.seed)
    out = _out_dir(args)
    try:
        trace = simulate(spec)
    except InstabilityError as exc:
        print(f"instability: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    graph, channels = loop_ground_truth(trace)
    report = trace_report(trace, floor=args.floor, max_cond=args.max_cond, labels=channels)
    faith = faithfulness_violations(graph, report, floor=args.floor)
    faith.skeleton_learned = pc_skeleton(report, floor=args.floor, max_cond=args.max_cond)
    diagram = causality_vs_correlation_text(graph, report, floor=args.floor)
    (out / "discovery.json").write_text(
        json.dumps(
            {"graph": graph.to_dict(), "faithfulness": faith.to_dict()},
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    (out / "diagram.txt").write_text(diagram + "\n")
    (out / "correlations.json").write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )
    write_manifest(
        out,
        "discover",
        {
            "command": "discover",
            "config": args.config,
            "seed": spec.seed,
            "floor": args.floor,
            "max_cond": args.max_cond,
        },
        started,
        scenario=trace.scenario,
    )
    print(diagram)
    learned = sorted(sorted(p) for p in faith.skeleton_learned)
    truth = sorted(sorted(p) for p in faith.skeleton_truth)
    print(f"\nlearned skeleton: {learned}")
    print(f"true adjacency:   {truth}")
    return EXIT_OK


def cmd_tcv(args) -> int:
    started = time.time()
    text, origin = load_config_text(args.config)
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{origin}: line {exc.lineno}, column {exc.colno}: {exc.msg}")
    for req in ("scenario", "disturbance_channel", "candidates"):
        if req not in cfg:
            raise CliError(f"{origin}: missing field {req!r}")
    if args.seed is not None:
        cfg["scenario"]["seed"] = args.seed
    try:
        spec = ScenarioSpec.from_dict(cfg["scenario"])
    except (ValueError, TypeError) as exc:
        raise CliError(f"{origin}: scenario: {exc}")
    out = _out_dir(args)
    try:
        report = run_tcv(
            spec,
            cfg["disturbance_channel"],
            cfg["candidates"],
            threshold=cfg.get("threshold", 10.0),
        )
    except InstabilityError as exc:
        print(f"instability: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    (out / "tcv.json").write_text(report.to_json() + "\n")
    (out / "tcv.txt").write_text(report.summary() + "\n")
    write_manifest(
        out,
        "tcv",
        {"command": "tcv", "config": args.config, "seed": spec.seed},
        started,
        scenario=spec,
    )
    print(report.summary())
    return EXIT_OK


def rerun_manifest(manifest_path, out_dir) -> int:
    """Re-execute the command recorded in a manifest into a fresh directory."""
    manifest = json.loads(Path(manifest_path).read_text())
    inv = manifest["invocation"]
    argv = [inv["command"]]
    if inv["command"] == "table":
        argv.append(str(inv["number"]))
    for key, value in inv.items():
        if key in ("command", "number") or value is None:
            continue
        argv += [f"--{key.replace('_', '-')}", str(value)]
    argv += ["--out", str(out_dir)]
    return main(argv)


def build_parser() -> _Parser:
    parser = _Parser(prog="faithless", description=__doc__)
    parser.add_argument("--version", action="version", version=f"faithless {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=False):
        if config:
            p.add_argument(
                "--config",
                required=True,
                help="scenario JSON path, or the name of a bundled config "
                f"({', '.join(n[:-5] for n in builtin_config_names())})",
            )
        p.add_argument("--seed", type=int, default=None,
                       help=f"master seed (default: ${SEED_ENV_VAR} or {DEFAULT_SEED})")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("simulate", help="run one scenario, write trace and correlations")
    add_common(p, config=True)
    p.add_argument("--floor", type=float, default=0.05)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("table", help="reproduce a numbered reference table with verdicts")
    p.add_argument("number", type=int)
    add_common(p)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("figure1", help="emit the voltage/current panel point sets")
    add_common(p)
    p.set_defaults(func=cmd_figure1)

    p = sub.add_parser("verify-theorems", help="numerical derivative-correlation checks")
    add_common(p)
    p.set_defaults(func=cmd_verify_theorems)

    p = sub.add_parser("calibrate", help="null-correlation significance calibration")
    add_common(p)
    p.add_argument("--coherence-time", type=float, default=1.0)
    p.add_argument("--n-steps", type=int, default=1_000_000)
    p.add_argument("--dt", type=float, default=0.001)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("discover", help="skeleton search vs ground truth on a scenario")
    add_common(p, config=True)
    p.add_argument("--floor", type=float, default=0.05)
    p.add_argument("--max-cond", type=int, default=2)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("tcv", help="test for the controlled variable")
    add_common(p, config=True)
    p.set_defaults(func=cmd_tcv)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
