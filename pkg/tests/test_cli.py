import json

import numpy as np
import pytest

import switchdyn as sd
from switchdyn.cli import main


def run_cli(*args):
    return main([str(a) for a in args])


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


class TestSimulateCommand:
    def test_outputs_and_manifest(self, tmp_path):
        out = tmp_path / "run"
        rc = run_cli("simulate", "--model", "lorenz-switch", "--T", "5",
                     "--dt", "0.1", "--seed", "7", "-o", out,
                     "--integrator", "rk4-fixed", "--step", "0.005")
        assert rc == 0
        for name in ("trajectory.csv", "events.csv", "manifest.json"):
            assert (out / name).exists()
        man = read_json(out / "manifest.json")
        assert man["command"] == "simulate"
        assert man["config"]["seed"] == 7
        assert man["workers"] == 1
        assert set(man["outputs"]) == {"trajectory.csv", "events.csv"}

    def test_full_precision_serialization(self, tmp_path):
        out = tmp_path / "run"
        run_cli("simulate", "--model", "linear-2d", "--T", "1", "--dt", "0.25",
                "--seed", "1", "-o", out)
        row = (out / "trajectory.csv").read_text().splitlines()[1].split(",")
        # values round-trip exactly through the decimal form
        assert float(row[0]) == 0.0
        x = float(row[1])
        assert format(x, ".17g") == row[1]

    def test_manifest_rerun_bit_for_bit(self, tmp_path):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        rc = run_cli("simulate", "--model", "lorenz-switch", "--T", "5",
                     "--dt", "0.1", "--seed", "3", "-o", out1)
        assert rc == 0
        rc = run_cli("rerun", out1 / "manifest.json", "-o", out2)
        assert rc == 0
        for name in ("trajectory.csv", "events.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        m1 = read_json(out1 / "manifest.json")
        m2 = read_json(out2 / "manifest.json")
        m1.pop("wall_time_s"), m2.pop("wall_time_s")
        m1["config"].pop("output_dir"), m2["config"].pop("output_dir")
        assert m1 == m2


class TestLyapunovCommand:
    def test_transverse_block_positive(self, tmp_path):
        out = tmp_path / "lyap"
        rc = run_cli("lyapunov", "--model", "lorenz-switch", "--block", "B",
                     "--T", "300", "--replicates", "4", "--seed", "5", "-o", out)
        assert rc == 0
        est = read_json(out / "lyapunov.json")["estimate"]
        assert est["value"] > 0.0

    def test_min_scan_method(self, tmp_path):
        out = tmp_path / "scan"
        rc = run_cli("lyapunov", "--model", "linear-2d", "--method", "min-scan",
                     "--T", "100", "--replicates", "2", "--n-starts", "4",
                     "--seed", "5", "-o", out)
        assert rc == 0
        est = read_json(out / "lyapunov.json")["estimate"]
        assert est["flag"] == "heuristic-minimum"


class TestClassifyCommand:
    def test_matches_library(self, tmp_path):
        out = tmp_path / "c"
        rc = run_cli("classify2d", "--b", "2,0", "--c", "1,3", "--d", "-1,-1",
                     "--q", "[[-1,1],[1,-1]]", "-o", out)
        assert rc == 0
        got = read_json(out / "classify.json")
        v = sd.classify_2d_triangular([2, 0], [1, 3], [-1, -1], [0.5, 0.5])
        assert got["case_id"] == v.case_id
        assert got["lambda_plus"] == v.lambda_plus
        assert got["lambda_minus"] == v.lambda_minus

    def test_requires_weights(self, tmp_path):
        rc = run_cli("classify2d", "--b", "1,1", "--c", "1,1", "--d", "0,0",
                     "-o", tmp_path)
        assert rc == 1


class TestCheckTriangularCommand:
    def test_pass_exit_zero(self, tmp_path):
        rc = run_cli("check-triangular", "--model", "linear-block", "--T", "400",
                     "--replicates", "5", "--seed", "2", "-o", tmp_path)
        assert rc == 0
        rep = read_json(tmp_path / "check_triangular.json")
        assert rep["passed"]


class TestOccupationCommand:
    def test_histogram_written(self, tmp_path):
        rc = run_cli("occupation", "--model", "lorenz-switch", "--T", "50",
                     "--dt", "0.1", "--burn-in", "5", "--bins", "8",
                     "--face-delta", "0.05", "--seed", "4", "-o", tmp_path)
        assert rc == 0
        rep = read_json(tmp_path / "occupation.json")
        assert abs(rep["total_mass"] - 1.0) < 1e-9
        assert "face_mass" in rep
        assert (tmp_path / "histogram.csv").exists()


class TestExtinctionCommand:
    def test_pass_and_fail_exit_codes(self, tmp_path):
        # scalar contraction; slope is -1
        rc = run_cli("extinction", "--model", "linear-2d",
                     "--set", "b=-1,-1", "--set", "c=0,0", "--set", "d=-1,-1",
                     "--T", "20", "--dt", "0.1", "--target", "-0.9",
                     "--seed", "3", "-o", tmp_path / "ok")
        assert rc == 0
        rep = read_json(tmp_path / "ok" / "extinction.json")
        assert rep["slope"] == pytest.approx(-1.0, abs=1e-6)
        rc = run_cli("extinction", "--model", "linear-2d",
                     "--set", "b=-1,-1", "--set", "c=0,0", "--set", "d=-1,-1",
                     "--T", "20", "--dt", "0.1", "--target", "-1.5",
                     "--seed", "3", "-o", tmp_path / "bad")
        assert rc == 3


class TestBracketCommand:
    def test_lorenz_strong(self, tmp_path):
        rc = run_cli("bracket", "--model", "lorenz-switch", "--x", "3,-2,15",
                     "--kind", "strong", "--depth", "3", "-o", tmp_path)
        assert rc == 0
        rep = read_json(tmp_path / "bracket.json")
        assert rep["rank"] == 3 and rep["full_rank"]


class TestSweepCommand:
    def test_r0_monotone_crossing(self, tmp_path):
        rc = run_cli("sweep", "--model", "sirs", "--sub-command", "lyapunov",
                     "--param", "beta.1", "--grid", "0.1,0.3,0.5,0.7,0.9",
                     "--T", "40", "--replicates", "2", "--seed", "9",
                     "-o", tmp_path)
        assert rc == 0
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        head = lines[0].split(",")
        idx = head.index("r0")
        r0s = [float(r.split(",")[idx]) for r in lines[1:]]
        assert all(a < b for a, b in zip(r0s, r0s[1:]))
        crossings = sum(1 for a, b in zip(r0s, r0s[1:]) if a < 1.0 <= b)
        assert crossings == 1

    def test_deterministic_bytes(self, tmp_path):
        args = ("sweep", "--model", "sirs", "--sub-command", "lyapunov",
                "--param", "beta.1", "--grid", "0.3,0.6", "--T", "30",
                "--replicates", "2", "--seed", "9")
        run_cli(*args, "-o", tmp_path / "x")
        run_cli(*args, "-o", tmp_path / "y")
        assert ((tmp_path / "x" / "sweep.csv").read_bytes()
                == (tmp_path / "y" / "sweep.csv").read_bytes())

    def test_empty_grid_is_validation_error(self, tmp_path):
        rc = run_cli("sweep", "--model", "sirs", "--sub-command", "lyapunov",
                     "--param", "beta.1", "--grid", "", "-o", tmp_path)
        assert rc == 1


class TestExitCodes:
    def test_unknown_model_is_validation_error(self, tmp_path):
        assert run_cli("simulate", "--model", "no-such", "-o", tmp_path) == 1

    def test_numeric_failure(self, tmp_path):
        # exploding linear system overflows to non-finite state
        rc = run_cli("simulate", "--model", "linear-2d", "--set", "b=900,900",
                     "--T", "5", "--dt", "0.5", "--seed", "1", "-o", tmp_path,
                     "--integrator", "rk4-fixed", "--step", "0.01")
        assert rc == 2


class TestConfigFile:
    def test_file_plus_flag_precedence(self, tmp_path):
        cfgfile = tmp_path / "exp.toml"
        cfgfile.write_text(
            'model = "lorenz-switch"\n'
            "[plan]\n"
            "horizon = 5.0\n"
            "sample_dt = 0.5\n"
            "seed = 1\n"
            "[integrator]\n"
            'method = "rk4-fixed"\n'
            "step = 0.01\n"
            "[model_params]\n"
            "r = [28.0, 30.0]\n")
        out = tmp_path / "o"
        rc = run_cli("simulate", "--config", cfgfile, "--seed", "2", "-o", out)
        assert rc == 0
        man = read_json(out / "manifest.json")
        assert man["config"]["seed"] == 2            # flag wins
        assert man["config"]["horizon"] == 5.0       # from file
        assert man["config"]["model_params"]["r"] == [28.0, 30.0]
