import numpy as np
import pytest

from smoothcopula import cli
from smoothcopula.copulas import ClaytonCopula
from smoothcopula.empirical import compute_ranks, empirical_copula, write_sample_csv
from smoothcopula.processes import DecompositionError
from smoothcopula.smoothing import SmoothingScheme, smooth_copula_closed


@pytest.fixture
def sample_file(tmp_path):
    X = ClaytonCopula(2.0).sample(25, 0)
    path = tmp_path / "s.csv"
    write_sample_csv(X, path)
    return path, X


def test_eval(sample_file, capsys):
    path, X = sample_file
    assert cli.main(["eval", "--sample", str(path), "--u", "0.3,0.6"]) == 0
    assert float(capsys.readouterr().out) == empirical_copula(compute_ranks(X), [0.3, 0.6])
    assert cli.main(["eval", "--sample", str(path), "--u", "0.3,0.6", "--scheme", "beta"]) == 0
    assert float(capsys.readouterr().out) == smooth_copula_closed(compute_ranks(X), SmoothingScheme.beta(), [0.3, 0.6])


def test_eval_mc(sample_file, capsys):
    path, X = sample_file
    assert cli.main(["eval", "--sample", str(path), "--u", "0.3,0.6", "--scheme", "bernstein_fixed",
                     "--m", "5", "--mc", "--draws", "50000"]) == 0
    est, se = map(float, capsys.readouterr().out.split(","))
    exact = smooth_copula_closed(compute_ranks(X), SmoothingScheme.bernstein_fixed(5), [0.3, 0.6])
    assert abs(est - exact) <= 4 * se


@pytest.mark.parametrize("argv", [
    ["nonsense"],
    ["eval", "--u", "0.5,0.5"],
    ["rate-experiment", "--n", "8,x"],
    ["rate-experiment", "--n", "16", "--reps", "1", "--out", "x.csv"],
    ["rate-experiment", "--scheme", "bernstein_rate", "--n", "8,16", "--out", "x.csv"],
    ["variance-audit", "--n", "16", "--scheme", "bernstein_fixed", "--m", "4"],
])
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as info:
        raise SystemExit(cli.main(argv))
    assert info.value.code == 1


def test_eval_dimension_mismatch(sample_file):
    path, _ = sample_file
    assert cli.main(["eval", "--sample", str(path), "--u", "0.5,0.5,0.5"]) == 1


def test_io_errors(tmp_path):
    assert cli.main(["eval", "--sample", str(tmp_path / "missing.csv"), "--u", "0.5,0.5"]) == 3
    assert cli.main(["rate-experiment", "--config", str(tmp_path / "missing.cfg")]) == 3
    assert cli.main(["rate-experiment", "--n", "8,16", "--reps", "1", "--grid", "5",
                     "--out", str(tmp_path / "no" / "dir.csv")]) == 3


def test_rate_experiment_flags(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = cli.main(["rate-experiment", "--copula", "frank", "--theta", "3", "--scheme", "bernstein_rate",
                     "--gamma", "1.25", "--n", "16,32", "--reps", "2", "--grid", "9", "--seed", "4",
                     "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "n,rep,sup_classic,sup_smooth,bias_term,drift_term,scheme,gamma,seed"
    assert len(lines) == 5
    assert (tmp_path / "r_summary.csv").exists()


def test_rate_experiment_config(tmp_path):
    cfg = tmp_path / "e.cfg"
    cfg.write_text(f"copula = clayton\ntheta = 2\nn_list = 8,16\nreplications = 2\nresolution = 7\n"
                   f"scheme.kind = bernstein_fixed\nscheme.degree = 3\noutput = {tmp_path / 'c.csv'}\n")
    assert cli.main(["rate-experiment", "--config", str(cfg)]) == 0
    assert len((tmp_path / "c.csv").read_text().splitlines()) == 5
    # flags override the file
    assert cli.main(["rate-experiment", "--config", str(cfg), "--reps", "1", "--out", str(tmp_path / "d.csv")]) == 0
    assert len((tmp_path / "d.csv").read_text().splitlines()) == 3


def test_invariant_violation_exit_code(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise DecompositionError("forced")

    monkeypatch.setattr(cli, "run_experiment", broken)
    assert cli.main(["rate-experiment", "--n", "8,16", "--reps", "1", "--out", str(tmp_path / "r.csv")]) == 2


def test_variance_audit(tmp_path, capsys):
    out = tmp_path / "a.csv"
    assert cli.main(["variance-audit", "--n", "64", "--gamma", "1.25", "--grid", "5",
                     "--draws", "20000", "--out", str(out)]) == 0
    assert "0 violations" in capsys.readouterr().out
    assert len(out.read_text().splitlines()) == 11
    # a fixed degree far below n^gamma violates the bound
    assert cli.main(["variance-audit", "--n", "1000", "--scheme", "bernstein_fixed", "--m", "4",
                     "--gamma", "1", "--grid", "3", "--draws", "5000"]) == 2


def test_condition2_scan(tmp_path, capsys):
    out = tmp_path / "c2.csv"
    assert cli.main(["condition2-scan", "--copula", "clayton", "--theta", "2", "--out", str(out)]) == 0
    assert "max weighted second derivative" in capsys.readouterr().out
    assert out.exists()
    assert cli.main(["condition2-scan", "--copula", "clayton", "--theta", "2", "--levels", "1,5,9"]) == 1


def test_selfcheck(capsys):
    assert cli.main(["selfcheck"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 2
