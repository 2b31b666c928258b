import csv
import io
import json
import subprocess
import sys

import pytest

from cascade_tails import __version__
from cascade_tails.cli import parse_range, run
from cascade_tails.errors import ConfigError


def read_csv(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


class TestParsing:
    def test_ranges(self):
        assert parse_range("4..9") == [4, 5, 6, 7, 8, 9]
        assert parse_range("6") == [6]
        assert parse_range("1,3") == [1, 3]

    @pytest.mark.parametrize("bad", ["9..4", "a..b", "1.5", ""])
    def test_bad_ranges(self, bad):
        with pytest.raises(ConfigError):
            parse_range(bad)


class TestCommands:
    def test_covariance_schema(self, tmp_path):
        out = tmp_path / "cov.csv"
        assert run(["covariance", "--n", "6", "-o", str(out)]) == 0
        text = out.read_text()
        assert f"# cascade-tails {__version__}" in text and "# seed: 0" in text
        (row,) = read_csv(out)
        assert list(row)[:4] == ["n", "logdet", "theta_times_2n_minus_2log2", "gap"]
        assert float(row["logdet"]) == pytest.approx(float(row["dense_logdet"]), rel=1e-12)
        assert float(row["eig_max_err"]) < 1e-8
        assert row["eigenvalues"] == "1x32 3x16 7x8 15x4 31x2 63x2"

    def test_tail_box_schema(self, tmp_path):
        out = tmp_path / "tail.csv"
        assert run(["tail", "--n", "2..3", "--replicas", "2000", "-o", str(out)]) == 0
        rows = read_csv(out)
        assert list(rows[0]) == ["n", "epsilon", "log_prob", "ci_lo", "ci_hi", "analytic_lower_bound"]
        assert [r["n"] for r in rows] == ["2", "3"]

    def test_tail_naive_and_refit(self, tmp_path):
        out = tmp_path / "naive.csv"
        assert run(["tail", "--method", "naive", "--n", "3", "--beta", "0.4", "--replicas", "20000", "--x-grid", "0.2,0.4,0.6", "-o", str(out), "--plot"]) == 0
        rows = read_csv(out)
        assert list(rows[0]) == ["method", "beta", "n", "x", "log_prob", "ci_lo", "ci_hi"]
        assert (tmp_path / "naive.svg").exists()
        fit = tmp_path / "fit.json"
        assert run(["fit-gamma", "--input", str(out), "--beta", "0.4", "--format", "json", "-o", str(fit)]) == 0
        doc = json.loads(fit.read_text())
        assert set(doc["rows"][0]) == {"gamma_hat", "stderr", "target_gamma", "n_points"}
        assert doc["seed"] == 0 and doc["version"] == __version__

    def test_fit_gamma_pipeline(self, tmp_path):
        out = tmp_path / "fit.csv"
        assert run(["fit-gamma", "--beta", "0.5887", "--n", "4..9", "--epsilon", "0.5", "--replicas", "4000", "-o", str(out), "--plot"]) == 0
        (row,) = read_csv(out)
        assert 3.4 <= float(row["gamma_hat"]) <= 4.6
        assert int(row["n_points"]) == 6
        svg = (tmp_path / "fit.svg").read_text()
        label = float(svg.split("fitted slope ")[1].split("<")[0])
        assert 3.4 <= label <= 4.6

    def test_verify_laplace_schema(self, tmp_path):
        out = tmp_path / "v.csv"
        assert run(["verify", "--suite", "laplace", "--beta", "0.5", "--replicas", "20000", "-o", str(out)]) == 0
        rows = read_csv(out)
        assert list(rows[0]) == ["check", "n", "beta", "a", "lambda", "lhs_log", "rhs_log", "ci", "verdict"]
        assert len(rows) == 12
        assert all(r["verdict"] in ("pass", "inconclusive") for r in rows)

    def test_verify_exits_one_on_failure(self, tmp_path, monkeypatch):
        from cascade_tails import suites
        from cascade_tails.laplace import InequalityReport

        bad = InequalityReport("fake", 1, 0.5, "", "", 1.0, 0.0, 0.0, "fail")
        monkeypatch.setitem(suites.RUNNERS, "covariance", lambda cfg: [bad])
        assert run(["verify", "--suite", "covariance", "-o", str(tmp_path / "v.csv")]) == 1

    def test_continuous_schema(self, tmp_path):
        out = tmp_path / "c.csv"
        assert run(["continuous", "--replicas", "200", "--horizon", "2", "-o", str(out)]) == 0
        rows = read_csv(out)
        assert list(rows[0]) == ["t", "mean_Z", "mean_Ztilde", "mean_Q", "bracket_bound", "crossings_per_lineage"]
        assert [float(r["t"]) for r in rows] == [1.0, 2.0]

    def test_simulate_and_report(self, tmp_path):
        out = tmp_path / "s.json"
        assert run(["simulate", "--n", "1..3", "--replicas", "5000", "--format", "json", "-o", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert [r["n"] for r in doc["rows"]] == [1, 2, 3]
        assert doc["config"]["beta"] == pytest.approx(0.5887050112577373)
        rep = tmp_path / "r.csv"
        assert run(["report", "--n", "4..6", "--replicas", "1000", "--m", "2", "-o", str(rep)]) == 0
        names = [r["quantity"] for r in read_csv(rep)]
        assert "gamma_hat" in names and "remainder_non_increasing" in names

    def test_timestamp_opt_in(self, tmp_path):
        out = tmp_path / "cov.csv"
        run(["covariance", "--n", "2", "-o", str(out)])
        assert "wall_clock" not in out.read_text()
        run(["covariance", "--n", "2", "--timestamp", "-o", str(out)])
        assert "# wall_clock:" in out.read_text()


class TestExitCodes:
    def test_config_errors(self, tmp_path):
        assert run(["tail", "--n", "5..2"]) == 2
        assert run(["tail", "--epsilon", "1.5", "--n", "2"]) == 2
        assert run(["simulate", "--replicas", "0"]) == 2
        assert run(["continuous", "--A", "0.1"]) == 2
        assert run(["nonsense"]) == 2
        assert run(["simulate", "--beta", "-1"]) == 2

    def test_resource_guard(self, capsys):
        assert run(["tail", "--n", "11", "--replicas", "10"]) == 3
        assert "box-dimension" in capsys.readouterr().err
        assert run(["continuous", "--horizon", "15", "--replicas", "2"]) == 3

    def test_covariance_beyond_dense_guard(self, tmp_path):
        out = tmp_path / "cov.csv"
        assert run(["covariance", "--n", "11", "-o", str(out)]) == 0
        (row,) = read_csv(out)
        assert row["dense_logdet"] == "" and row["eig_max_err"] == ""

    def test_help_shows_defaults(self, capsys):
        assert run(["tail", "--help"]) == 0
        assert "default: 0.5" in capsys.readouterr().out

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "cascade_tails", "covariance", "--n", "1"], capture_output=True, text=True)
        assert res.returncode == 0
        assert "theta_times_2n_minus_2log2" in res.stdout


def test_threads_do_not_change_bytes(tmp_path):
    blobs = []
    for t in ("1", "4"):
        out = tmp_path / f"s{t}.csv"
        assert run(["simulate", "--n", "2", "--replicas", "9000", "--threads", t, "-o", str(out)]) == 0
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1]
