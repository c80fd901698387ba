"""Command-line tests: output, determinism and exit codes."""

import io
import json
import subprocess
import sys

import numpy as np
import pytest

from weakthresh.cli import main, parse_grid
from weakthresh.persist import import_csv, read_instance
from weakthresh.solvers import l1_oracle_bruteforce


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestGridParsing:
    def test_range_inclusive(self):
        assert parse_grid("0.05:0.95:0.05") == [round(0.05 * i, 2) for i in range(1, 20)]

    def test_list_and_empty(self):
        assert parse_grid("0.1, 0.3") == [0.1, 0.3]
        assert parse_grid("") == []
        assert parse_grid("0.5:0.4:0.1") == []


class TestThreshold:
    def test_all(self, capsys):
        code, out, _ = run(["threshold", "--alpha", "0.5", "--method", "all"], capsys)
        assert code == 0
        rows = out.strip().splitlines()[1:]
        betas = [float(r.split(",")[1]) for r in rows]
        assert len(rows) == 3 and max(betas) - min(betas) <= 1e-4

    def test_alpha_one(self, capsys):
        code, out, _ = run(["threshold", "--alpha", "1.0", "--method", "fund"], capsys)
        assert code == 0 and out.splitlines()[1].split(",")[1] == "1"

    @pytest.mark.parametrize("alpha", ["1.5", "0", "-0.2", "abc", "nan", "0,5"])
    def test_bad_alpha(self, alpha, capsys):
        code, _, err = run(["threshold", "--alpha", alpha], capsys)
        assert code == 2 and "error" in err

    def test_bad_method(self, capsys):
        assert run(["threshold", "--alpha", "0.5", "--method", "lasso"], capsys)[0] == 2


class TestCurve:
    def test_19_rows_round_trip(self, tmp_path, capsys):
        p = tmp_path / "c.csv"
        code, _, _ = run(["curve", "--grid", "0.05:0.95:0.05", "--method", "fund", "--out", str(p)], capsys)
        assert code == 0
        lines = p.read_text().splitlines()
        assert lines[0].startswith("# weakthresh ") and "--grid 0.05:0.95:0.05" in lines[0]
        assert len(lines) == 1 + 1 + 19
        curve = import_csv(p)
        assert len(curve.points) == 19 and not curve.monotonicity_violations()

    def test_unwritable(self, tmp_path, capsys):
        code, _, err = run(["curve", "--grid", "0.5", "--out", str(tmp_path / "no" / "x.csv")], capsys)
        assert code == 1 and "cannot write" in err

    def test_empty_grid(self, capsys):
        assert run(["curve", "--grid", ""], capsys)[0] == 2

    def test_bad_grid(self, capsys):
        assert run(["curve", "--grid", "0.1:0.5"], capsys)[0] == 2
        assert run(["curve", "--grid", "0.1:0.5:0"], capsys)[0] == 2
        assert run(["curve", "--grid", "0.5,0.3"], capsys)[0] == 1


class TestEquivalence:
    def test_default(self, capsys):
        code, out, _ = run(["equivalence"], capsys)
        assert code == 0 and out.strip().endswith("PASS")

    def test_tight(self, capsys):
        code, out, _ = run(["equivalence", "--grid", "0.5", "--tol", "1e-16"], capsys)
        assert code == 1 and out.strip().endswith("FAIL")

    def test_empty(self, capsys):
        assert run(["equivalence", "--grid", ""], capsys)[0] == 2

    @pytest.mark.parametrize("tol", ["0", "-1", "x"])
    def test_bad_tol(self, tol, capsys):
        assert run(["equivalence", "--tol", tol], capsys)[0] == 2


class TestGenSolve:
    def test_pipeline_matches_oracle(self, tmp_path, capsys):
        p = tmp_path / "i.json"
        assert run(["gen", "--n", "12", "--m", "6", "--k", "1", "--seed", "3", "--out", str(p)], capsys)[0] == 0
        inst = read_instance(p)
        x_or, unique = l1_oracle_bruteforce(inst)
        code, out, _ = run(["solve", "--instance", str(p), "--solver", "bp"], capsys)
        assert code == 0
        fields = dict(line.split("=") for line in out.strip().splitlines())
        assert fields["certified_optimal"] == "true"
        if unique:
            assert np.max(np.abs(x_or - inst.truth)) <= 1e-6
            assert float(fields["rel_error"]) <= 1e-6

    def test_gen_deterministic(self, capsys):
        a = run(["gen", "--n", "20", "--m", "10", "--k", "2", "--seed", "5"], capsys)[1]
        b = run(["gen", "--n", "20", "--m", "10", "--k", "2", "--seed", "5"], capsys)[1]
        assert a == b and json.loads(a)["k"] == 2

    def test_no_truth(self, tmp_path, capsys):
        p = tmp_path / "i.json"
        p.write_text(json.dumps({"n": 4, "m": 2, "matrix": [[1, 0, 2, 0], [0, 1, 0, 3]], "y": [1, 1]}))
        code, out, _ = run(["solve", "--instance", str(p), "--solver", "omp"], capsys)
        assert code == 1  # omp needs k, which an instance without truth does not carry
        code, out, _ = run(["solve", "--instance", str(p), "--solver", "bp"], capsys)
        assert code == 0 and "residual_norm=" in out and "rel_error" not in out

    @pytest.mark.parametrize(
        "argv",
        [
            ["gen", "--n", "5", "--m", "6", "--k", "1"],
            ["gen", "--n", "10", "--m", "4", "--k", "5"],
            ["gen", "--n", "0", "--m", "0", "--k", "0"],
            ["gen", "--n", "10", "--m", "5", "--k", "1", "--seed", "-3"],
            ["gen", "--n", "10", "--m", "5"],
            ["solve", "--instance", "x.json", "--solver", "lasso"],
            ["solve"],
        ],
    )
    def test_usage_errors(self, argv, capsys):
        assert run(argv, capsys)[0] == 2

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(["solve", "--instance", str(tmp_path / "nope.json")], capsys)
        assert code == 1 and "cannot read" in err

    def test_corrupt_file(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{")
        assert run(["solve", "--instance", str(p)], capsys)[0] == 1


class TestPhase:
    def test_beta_zero_cell(self, capsys):
        code, out, _ = run(["phase", "--n", "40", "--alpha-grid", "0.5", "--beta-grid", "0", "--trials", "3"], capsys)
        assert code == 0
        d = import_csv(io.StringIO(out))
        assert d.cells[0].success_rate == 1.0

    def test_byte_identical_across_workers(self, tmp_path, capsys):
        base = ["phase", "--n", "40", "--alpha-grid", "0.3,0.6", "--beta-grid", "0.05,0.1",
                "--trials", "4", "--seed", "9"]
        outs = []
        for w in ("1", "2"):
            p = tmp_path / f"p{w}.csv"
            assert run(base + ["--workers", w, "--out", str(p)], capsys)[0] == 0
            outs.append(p.read_bytes())
        assert outs[0] == outs[1]

    @pytest.mark.parametrize(
        "argv",
        [
            ["--alpha-grid", "", "--beta-grid", "0"],
            ["--alpha-grid", "1.5", "--beta-grid", "0"],
            ["--alpha-grid", "0.5", "--beta-grid", "-0.1"],
            ["--alpha-grid", "0.5", "--beta-grid", "0", "--trials", "0"],
            ["--alpha-grid", "0.5", "--beta-grid", "0", "--solver", "x"],
        ],
    )
    def test_usage_errors(self, argv, capsys):
        assert run(["phase", "--n", "40"] + argv, capsys)[0] == 2

    def test_unwritable(self, tmp_path, capsys):
        argv = ["phase", "--n", "10", "--alpha-grid", "0.5", "--beta-grid", "0", "--trials", "1",
                "--out", str(tmp_path / "no" / "p.csv")]
        assert run(argv, capsys)[0] == 1


class TestTopLevel:
    @pytest.mark.parametrize("cmd", ["threshold", "curve", "equivalence", "gen", "solve", "phase"])
    def test_help(self, cmd, capsys):
        code, out, _ = run([cmd, "--help"], capsys)
        assert code == 0 and "--" in out

    def test_no_command(self, capsys):
        assert run([], capsys)[0] == 2

    def test_unknown_command(self, capsys):
        assert run(["plot"], capsys)[0] == 2

    def test_abbreviations_rejected(self, capsys):
        assert run(["threshold", "--alph", "0.5"], capsys)[0] == 2

    def test_module_entry_point(self):
        r = subprocess.run([sys.executable, "-m", "weakthresh", "threshold", "--alpha", "2"],
                           capture_output=True, text=True)
        assert r.returncode == 2
        r = subprocess.run([sys.executable, "-m", "weakthresh", "threshold", "--alpha", "0.25", "--method", "amp"],
                           capture_output=True, text=True)
        assert r.returncode == 0 and r.stdout.splitlines()[1].startswith("0.25,")
