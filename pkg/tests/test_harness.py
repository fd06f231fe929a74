import csv
import math
import warnings

import pytest

from bapred import harness
from bapred.harness import (
    CSV_COLUMNS, ConfigError, ExperimentConfig, InsufficientData, ResilienceWarning,
    check_scaling, fingerprint, fit_slope, main, parse_budget, run_one, sweep,
)


def test_minimal_run_cli(capsys):
    assert main(["run", "--protocol", "unauth-cubic", "--n", "4", "--t", "1", "--f", "0", "--B", "0"]) == 0
    out = capsys.readouterr()
    assert "agreement_ok=True" in out.out


def test_same_config_and_seed_give_identical_rows():
    cfg = ExperimentConfig(protocol="auth", n=10, f=2, B="4n", adversary="equivocate_values")
    assert run_one(cfg, 5)[1] == run_one(cfg, 5)[1]
    assert fingerprint(cfg, 5) == fingerprint(cfg, 5) != fingerprint(cfg, 6)


def test_resilience_warning_and_run_proceeds(capsys):
    cfg = ExperimentConfig(protocol="unauth-cubic", n=4, t=1, f=0, B="0")
    with pytest.warns(ResilienceWarning):
        cfg.validate()
    assert main(["run", "--n", "4", "--t", "1"]) == 0
    assert "warning" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["run", "--protocol", "nope"],
    ["run", "--adversary", "nope"],
    ["run", "--n", "0"],
    ["run", "--n", "8", "--f", "9"],
    ["run", "--n", "8", "--B", "100n"],
    ["run", "--bogus"],
    ["sweep", "--n", "8"],
])
def test_config_errors_exit_2(argv, capsys):
    assert main(argv) == 2


def test_invariant_failure_exits_1(monkeypatch, capsys):
    real = harness.run_one

    def broken(cfg, seed):
        report, row, error = real(cfg, seed)
        return report, dict(row, agreement_ok=False), error
    monkeypatch.setattr(harness, "run_one", broken)
    assert main(["run", "--n", "7"]) == 1


def test_budget_forms():
    assert parse_budget("0", 10, 1) == 0
    assert parse_budget("4n", 10, 1) == 40
    assert parse_budget("max", 10, 1) == 90
    for bad in ("91", "10n", "-1", "lots"):
        with pytest.raises(ConfigError):
            parse_budget(bad, 10, 1)


def test_b_sweep_counts_rows_and_resumes(tmp_path, monkeypatch):
    out = tmp_path / "sweep.csv"
    base = ExperimentConfig(protocol="unauth-cubic", n=20, f=1, adversary="silent")
    cells = harness.expand_grid(base, {"B": ["0", "1n", "4n", "16n"]})
    rows = sweep(cells, range(20), out)
    assert len(rows) == 80
    with open(out, newline="") as fh:
        reader = csv.reader(fh)
        assert tuple(next(reader)) == CSV_COLUMNS
        assert sum(1 for _ in reader) == 80

    # drop ten rows, then resume: only those ten are recomputed
    kept = rows[10:]
    harness.write_rows(out, kept)
    calls = []
    real = harness.run_one
    monkeypatch.setattr(harness, "run_one", lambda c, s: calls.append(s) or real(c, s))
    again = sweep(cells, range(20), out)
    assert len(calls) == 10 and again == rows


def test_sweep_cli(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--protocol", "auth,unauth-cubic", "--n", "8", "--B", "0,1n",
                 "--seeds", "0..1", "--out", str(out)]) == 0
    assert "8 rows" in capsys.readouterr().out


def test_synthetic_power_law_slope():
    xs = [2, 4, 8, 16, 32]
    fit = fit_slope(xs, [x ** 2 for x in xs], 2.0, 1e-6)
    assert fit.passed and abs(fit.slope - 2.0) < 1e-6
    with pytest.raises(InsufficientData):
        fit_slope([1, 1, 2], [1, 1, 4], 2.0, 0.1)


def test_check_verb(tmp_path, capsys):
    path = tmp_path / "fit.csv"
    rows = [{k: "0" for k in CSV_COLUMNS} | {"fingerprint": f"{i}", "n": str(n), "bits": str(n ** 3),
                                             "protocol": "x"} for i, n in enumerate([8, 16, 32, 64])]
    harness.write_rows(path, rows)
    assert check_scaling(path, "n", "bits", 3.0, 0.01).passed
    assert main(["check", "--csv", str(path), "--expected", "3", "--tolerance", "0.01"]) == 0
    assert main(["check", "--csv", str(path), "--expected", "2", "--tolerance", "0.01"]) == 1
    assert main(["check", "--csv", str(path), "--expected", "3", "--where", "n=8"]) == 2


def test_lemmas_verb(capsys):
    assert main(["lemmas", "--trials", "20", "--seed", "1"]) == 0
    out = capsys.readouterr().out
    assert out.count("holds=20") == 3


def test_config_file_overridden_by_flags(tmp_path, capsys):
    conf = tmp_path / "c.conf"
    conf.write_text("protocol = auth\nn = 10\nf = 2\n# comment\nB = 4n\n")
    assert main(["run", "--config", str(conf), "--f", "1"]) == 0
    assert "protocol=auth n=10 t=" in capsys.readouterr().out
    assert main(["run", "--config", str(conf), "--f", "1", "--n", "12"]) == 0
