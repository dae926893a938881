"""Command-line surface: exit codes, formats, determinism."""

import json

import pytest

from jkl.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestValidate:
    def test_preset_ok(self, capsys):
        code, _, err = run(capsys, "validate", "--preset", "bimol")
        assert code == 0
        assert "ok" in err

    def test_cubic_valid_for_simulation(self, capsys):
        code, _, _ = run(capsys, "validate", "--preset", "cubic")
        assert code == 0

    def test_malformed_file(self, capsys, tmp_path):
        path = tmp_path / "bad.rxn"
        path.write_text("species A\nR: A -> @ 1.0\n")
        code, _, err = run(capsys, "validate", "--model", str(path))
        assert code == 2
        assert "line 2" in err

    def test_missing_model_arg(self, capsys):
        code, _, err = run(capsys, "validate")
        assert code == 2


class TestAnalyze:
    def test_table_and_json_agree(self, capsys):
        code, out_json, _ = run(capsys, "analyze", "--preset", "enzyme", "--json")
        assert code == 0
        report = json.loads(out_json)
        assert report["mu"] == pytest.approx(25.0)
        code, out_tab, _ = run(capsys, "analyze", "--preset", "enzyme")
        assert code == 0
        assert repr(report["M"]) in out_tab
        assert repr(report["mu"]) in out_tab

    def test_cubic_rejected_exit_3(self, capsys):
        code, _, err = run(capsys, "analyze", "--preset", "cubic")
        assert code == 3
        assert "order-3" in err

    def test_weight_file(self, capsys, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text("1 1 2\n")
        code, out, _ = run(capsys, "analyze", "--preset", "reversible",
                           "--weight", str(path), "--json")
        assert code == 0
        rep = json.loads(out)
        assert rep["l"] == [1.0, 1.0, 2.0]
        assert rep["alpha"] == 0.0  # the conserved weight kills the drift


class TestSimulate:
    def test_deterministic_csv(self, capsys):
        code, out1, _ = run(capsys, "simulate", "--preset", "bimol",
                            "--t-end", "5", "--seed", "3")
        code2, out2, _ = run(capsys, "simulate", "--preset", "bimol",
                             "--t-end", "5", "--seed", "3")
        assert code == code2 == 0
        assert out1 == out2
        assert out1.splitlines()[0] == "time,A,B"

    def test_grid_resampling(self, capsys):
        code, out, _ = run(capsys, "simulate", "--preset", "bimol",
                           "--t-end", "2", "--seed", "1", "--grid", "4")
        assert code == 0
        assert len(out.splitlines()) == 6  # header + 5 grid points

    def test_rtc_method(self, capsys):
        code, out, _ = run(capsys, "simulate", "--preset", "bimol",
                           "--t-end", "2", "--seed", "1", "--method", "rtc")
        assert code == 0

    def test_out_file(self, capsys, tmp_path):
        path = tmp_path / "traj.csv"
        code, out, _ = run(capsys, "simulate", "--preset", "bimol",
                           "--t-end", "1", "--seed", "2", "--out", str(path))
        assert code == 0 and out == ""
        assert path.read_text().startswith("time,A,B")


class TestEnsembleCouple:
    def test_ensemble_csv(self, capsys):
        code, out, _ = run(capsys, "ensemble", "--preset", "bimol", "--t-end", "2",
                           "--grid", "4", "--samples", "50", "--seed", "5", "--p", "2")
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "time,p,estimate,stderr,n"
        assert len(lines) == 1 + 5 * 2

    def test_couple_rms_zero_for_identity(self, capsys):
        code, out, _ = run(capsys, "couple", "--preset", "bimol", "--t-end", "1",
                           "--grid", "2", "--samples", "20", "--seed", "5")
        assert code == 0
        for line in out.splitlines()[1:]:
            assert float(line.split(",")[1]) == 0.0

    def test_couple_single_pair(self, capsys):
        code, out, _ = run(capsys, "couple", "--preset", "bimol", "--t-end", "1",
                           "--grid", "2", "--samples", "1", "--seed", "5",
                           "--x0", "5,5", "--perturb", "k2=-0.5")
        assert code == 0
        assert out.splitlines()[0] == "time,A,B,A_pert,B_pert"

    def test_bad_perturb_flag(self, capsys):
        code, _, err = run(capsys, "couple", "--preset", "bimol", "--t-end", "1",
                           "--samples", "4", "--perturb", "k2")
        assert code == 2

    def test_unknown_parameter_perturb(self, capsys):
        code, _, err = run(capsys, "couple", "--preset", "bimol", "--t-end", "1",
                           "--samples", "4", "--perturb", "zz=0.1")
        assert code == 2


class TestBounds:
    def test_first_moment_values(self, capsys):
        code, out, _ = run(capsys, "bounds", "--preset", "bimol", "--kind", "first",
                           "--t-end", "1", "--grid", "2")
        assert code == 0
        rows = [line.split(",") for line in out.splitlines()[1:]]
        assert float(rows[-1][1]) == pytest.approx(2.0)

    def test_coeff_zero_delta_zero_curve(self, capsys):
        code, out, _ = run(capsys, "bounds", "--preset", "bimol", "--kind", "coeff",
                           "--t-end", "0.1", "--grid", "3", "--x0", "10,10",
                           "--variant", "small-time")
        assert code == 0
        assert all(float(l.split(",")[1]) == 0.0 for l in out.splitlines()[1:])

    def test_cubic_kind(self, capsys):
        code, out, _ = run(capsys, "bounds", "--preset", "cubic", "--kind", "cubic",
                           "--x0", "3", "--t-end", "0.05", "--grid", "2")
        assert code == 0
        assert float(out.splitlines()[1].split(",")[1]) == pytest.approx(6.0)

    def test_asymptotic_json(self, capsys):
        code, out, _ = run(capsys, "bounds", "--preset", "extended-bimol",
                           "--kind", "asymptotic", "--p", "1")
        assert code == 0
        assert json.loads(out)["kappa"] == pytest.approx(2.0)

    def test_analyzer_rejection_propagates(self, capsys):
        code, _, err = run(capsys, "bounds", "--preset", "cubic", "--kind", "first",
                           "--t-end", "1")
        assert code == 3


class TestCme:
    def test_moments_csv(self, capsys):
        code, out, _ = run(capsys, "cme", "--preset", "reversible", "--x0", "2,2,0",
                           "--caps", "10", "--t-end", "1", "--grid", "2", "--p", "2")
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "time,p,estimate,upper,defect"
        first = lines[1].split(",")
        assert float(first[2]) == pytest.approx(4.0)  # |x|_1 at t=0

    def test_index_dump(self, capsys, tmp_path):
        path = tmp_path / "index.txt"
        code, _, _ = run(capsys, "cme", "--preset", "reversible", "--x0", "2,2,0",
                         "--caps", "10", "--t-end", "1", "--grid", "1",
                         "--dump-index", str(path))
        assert code == 0
        assert len(path.read_text().splitlines()) == 3


class TestDemo:
    def test_bimol_walk_writes_bundle(self, capsys, tmp_path):
        code, out, _ = run(capsys, "demo", "bimol-walk", "--samples", "300",
                           "--seed", "2", "--out-dir", str(tmp_path))
        assert code == 0
        summary = json.loads(out)
        assert abs(summary["difference_variance"] - 20.0) < 5.0
        assert (tmp_path / "summary.json").exists()
        assert (tmp_path / "difference_histogram.csv").exists()
        assert json.loads((tmp_path / "summary.json").read_text()) == summary

    def test_unknown_demo(self, capsys):
        with pytest.raises(SystemExit):
            main(["demo", "nope"])
