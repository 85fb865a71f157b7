import json
import hashlib
from pathlib import Path

from faithless.cli import (
    EXIT_INSTABILITY,
    EXIT_OK,
    EXIT_TOLERANCE,
    EXIT_VALIDATION,
    builtin_config_names,
    main,
    rerun_manifest,
)

SMALL_SCENARIO = {
    "model": "IntegralLoop",
    "k": 100.0,
    "dt": 0.001,
    "n_steps": 20_000,
    "seed": 2,
    "inputs": {
        "R": {"kind": "constant", "value": 0.0},
        "D": {"kind": "smooth_noise", "coherence_time": 0.2, "sigma": 1.0},
    },
}


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestSimulate:
    def test_outputs_and_manifest(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_SCENARIO)
        out = tmp_path / "run"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == EXIT_OK
        for name in ("trace.csv", "correlations.csv", "correlations.json", "manifest.json"):
            assert (out / name).exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["scenario"]["seed"] == 2
        for name, digest in manifest["outputs"].items():
            assert sha(out / name) == digest

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_SCENARIO)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", cfg, "--out", str(out1)]) == EXIT_OK
        assert rerun_manifest(out1 / "manifest.json", out2) == EXIT_OK
        for name in ("trace.csv", "correlations.csv", "correlations.json"):
            assert sha(out1 / name) == sha(out2 / name)

    def test_seed_override(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_SCENARIO)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--config", cfg, "--out", str(out1), "--seed", "5"])
        manifest = json.loads((out1 / "manifest.json").read_text())
        assert manifest["scenario"]["seed"] == 5
        main(["simulate", "--config", cfg, "--out", str(out2)])
        assert sha(out1 / "trace.csv") != sha(out2 / "trace.csv")

    def test_invalid_dt_rejected(self, tmp_path, capsys):
        bad = dict(SMALL_SCENARIO, dt=-0.001)
        cfg = write_config(tmp_path, bad)
        out = tmp_path / "run"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == EXIT_VALIDATION
        assert "dt" in capsys.readouterr().err
        assert not (out / "trace.csv").exists()

    def test_malformed_json_names_line(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{"model": "IntegralLoop",\n  "dt": }')
        out = tmp_path / "run"
        assert main(["simulate", "--config", str(path), "--out", str(out)]) == EXIT_VALIDATION
        assert "line 2" in capsys.readouterr().err

    def test_missing_config(self, tmp_path, capsys):
        assert (
            main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
            == EXIT_VALIDATION
        )

    def test_instability_exit_code(self, tmp_path, capsys, recwarn):
        bad = dict(SMALL_SCENARIO, lag=0.02, n_steps=200_000)  # k*lag = 2
        cfg = write_config(tmp_path, bad)
        out = tmp_path / "run"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == EXIT_INSTABILITY
        assert "unstable" in capsys.readouterr().err

    def test_builtin_example1_reproduces_reference_correlations(self, tmp_path):
        assert "example1.json" in builtin_config_names()
        out = tmp_path / "ex1"
        assert main(["simulate", "--config", "example1", "--out", str(out)]) == EXIT_OK
        payload = json.loads((out / "correlations.json").read_text())
        pairs = {frozenset((p["x"], p["y"])): p["value"] for p in payload["pairwise"]}
        assert pairs[frozenset(("O", "D"))] < -0.99
        assert abs(pairs[frozenset(("O", "P"))]) < 0.05
        assert abs(pairs[frozenset(("P", "D"))]) < 0.08
        assert isinstance(pairs[frozenset(("P", "R"))], dict)  # constant R: undefined
        assert len((out / "trace.csv").read_text().splitlines()) == 1_000_001


class TestTable:
    def test_table_2_passes(self, tmp_path, capsys):
        out = tmp_path / "t2"
        assert main(["table", "2", "--out", str(out)]) == EXIT_OK
        text = capsys.readouterr().out
        assert "PASS" in text
        cells = (out / "table2_cells.csv").read_text().splitlines()
        assert cells[0].startswith("subtable,x,y,computed")
        assert len(cells) == 4
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["all_pass"] is True

    def test_unknown_table_rejected(self, tmp_path, capsys):
        assert main(["table", "77", "--out", str(tmp_path / "t")]) == EXIT_VALIDATION

    def test_failed_cells_exit_tolerance(self, tmp_path, capsys, monkeypatch):
        import faithless.cli as cli
        import faithless.tables as tables_mod

        real = tables_mod.run_table

        def sabotaged(number, seed):
            result = real(number, seed)
            for cell in result.subtables[0].cells:
                cell.passed = False
            return result

        monkeypatch.setattr(cli, "run_table", sabotaged)
        assert main(["table", "2", "--out", str(tmp_path / "t")]) == EXIT_TOLERANCE
        assert "FAIL" in capsys.readouterr().out


class TestOtherCommands:
    def test_calibrate_small(self, tmp_path):
        out = tmp_path / "cal"
        code = main([
            "calibrate", "--out", str(out), "--coherence-time", "0.1",
            "--n-steps", "20000", "--dt", "0.001", "--runs", "30", "--seed", "3",
        ])
        assert code == EXIT_OK
        payload = json.loads((out / "calibration.json").read_text())
        assert 0.01 < payload["std_of_null_correlation"] < 0.12

    def test_calibrate_rerun_matches(self, tmp_path):
        out1, out2 = tmp_path / "c1", tmp_path / "c2"
        args = ["calibrate", "--coherence-time", "0.1", "--n-steps", "20000",
                "--dt", "0.001", "--runs", "30", "--seed", "3"]
        assert main(args + ["--out", str(out1)]) == EXIT_OK
        assert rerun_manifest(out1 / "manifest.json", out2) == EXIT_OK
        assert sha(out1 / "calibration.json") == sha(out2 / "calibration.json")

    def test_discover_small(self, tmp_path, capsys):
        cfg = write_config(tmp_path, SMALL_SCENARIO)
        out = tmp_path / "disc"
        assert main(["discover", "--config", cfg, "--out", str(out)]) == EXIT_OK
        payload = json.loads((out / "discovery.json").read_text())
        assert payload["graph"]["nodes"] == ["D", "P", "O"]
        assert (out / "diagram.txt").read_text().startswith("Causality")

    def test_tcv_command(self, tmp_path, capsys):
        scenario = dict(SMALL_SCENARIO, n_steps=100_000)
        scenario["inputs"] = dict(
            scenario["inputs"],
            D={"kind": "smooth_noise", "coherence_time": 1.0, "sigma": 1.0},
        )
        cfg = write_config(
            tmp_path,
            {
                "scenario": scenario,
                "disturbance_channel": "D",
                "candidates": ["P", "O"],
                "threshold": 10.0,
            },
            name="tcv.json",
        )
        out = tmp_path / "tcv"
        assert main(["tcv", "--config", cfg, "--out", str(out)]) == EXIT_OK
        payload = json.loads((out / "tcv.json").read_text())
        flagged = [c for c in payload["candidates"] if c["controlled"]]
        assert [c["channel"] for c in flagged] == ["P"]

    def test_tcv_missing_field(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"scenario": SMALL_SCENARIO}, name="tcv.json")
        assert main(["tcv", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_VALIDATION

    def test_env_seed_default(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("FAITHLESS_SEED", "4")
        out = tmp_path / "t2"
        assert main(["table", "2", "--out", str(out)]) in (EXIT_OK, EXIT_TOLERANCE)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["invocation"]["seed"] == 4

    def test_bad_env_seed(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("FAITHLESS_SEED", "banana")
        assert main(["table", "2", "--out", str(tmp_path / "t")]) == EXIT_VALIDATION

    def test_usage_error_is_validation_exit(self, capsys):
        assert main(["simulate"]) == EXIT_VALIDATION

    def test_verify_theorems(self, tmp_path, capsys):
        out = tmp_path / "thm"
        assert main(["verify-theorems", "--out", str(out), "--seed", "2"]) == EXIT_OK
        text = capsys.readouterr().out
        assert text.count("PASS") == 5
        payload = json.loads((out / "theorems.json").read_text())
        assert payload["all_pass"] is True
        assert (out / "theorems.txt").exists()

    def test_figure1(self, tmp_path):
        out = tmp_path / "fig"
        assert main(["figure1", "--out", str(out), "--seed", "2"]) == EXIT_OK
        for name in (
            "fig1a_voltage.csv",
            "fig1b_current.csv",
            "fig1c_dense_scatter.csv",
            "fig1d_sampled_scatter.csv",
            "fig1e_sampled_scatter_long.csv",
            "fig1_summary.json",
            "manifest.json",
        ):
            assert (out / name).exists()
        summary = json.loads((out / "fig1_summary.json").read_text())
        assert summary["mi_dense_nats"] > summary["mi_sampled_nats"]
