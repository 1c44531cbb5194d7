import csv
import datetime as dt
import json

import pytest

from covbranch.cli import main
from covbranch.ingest import parse_csv

from conftest import BULGARIA, BULGARIA_CUMULATIVE, csv_text


def run(*argv):
    return main([str(a) for a in argv])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def constant_csv(tmp_path):
    path = tmp_path / "constant.csv"
    path.write_text(csv_text([12] * 15))
    return path


class TestSimulate:
    def test_ensemble_rows(self, tmp_path):
        out = tmp_path / "sim"
        assert run("simulate", "--family", "geometric", "--m", 1.1093, "--q", 0.3, "--n0", 1,
                   "--days", 30, "--reps", 10**4, "--seed", 42, "--out", out, "--format", "csv,json,svg") == 0
        assert len(read_rows(out / "ensemble.csv")) == 30
        meta = json.loads((out / "metadata.json").read_text())
        assert meta["seed"] == 42 and meta["reps"] == 10**4
        assert meta["config"]["days"] == 30
        assert (out / "ensemble.svg").read_text().startswith("<svg")

    def test_single_row(self, tmp_path):
        assert run("simulate", "--family", "poisson", "--m", 0.9, "--days", 1, "--seed", 1,
                   "--out", tmp_path) == 0
        assert len(read_rows(tmp_path / "ensemble.csv")) == 1

    def test_infeasible_q(self, tmp_path, capsys):
        assert run("simulate", "--family", "geometric", "--m", 1.0, "--q", 0.6, "--days", 3,
                   "--seed", 1, "--out", tmp_path) == 2
        assert "0.5" in capsys.readouterr().err

    def test_seed_required(self, tmp_path):
        assert run("simulate", "--family", "geometric", "--m", 1.0, "--days", 3, "--out", tmp_path) == 2

    def test_unknown_flag(self, tmp_path):
        assert run("simulate", "--bogus") == 2

    def test_law_json(self, tmp_path):
        law = {"family": "finite", "p0": 0.3, "q": 0.3, "probs": [0.4]}
        assert run("simulate", "--law", json.dumps(law), "--days", 4, "--reps", 50, "--seed", 3,
                   "--out", tmp_path) == 0

    def test_rerun_from_metadata(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run("simulate", "--family", "geometric", "--m", 1.2, "--days", 15, "--reps", 700, "--seed", 9,
            "--n0", 3, "--out", a)
        assert run("simulate", "--from-metadata", a / "metadata.json", "--out", b) == 0
        for name in ("ensemble.csv", "trajectory.csv", "registered.csv", "metadata.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_registered_csv_parses(self, tmp_path):
        run("simulate", "--family", "geometric", "--m", 1.3, "--q", 0.2, "--n0", 20, "--days", 10,
            "--seed", 5, "--out", tmp_path)
        text = (tmp_path / "registered.csv").read_text()
        series = parse_csv(text, trim_leading_zeros=False)
        assert len(series) == 10


class TestEstimate:
    def test_bulgaria(self, bulgaria_csv, tmp_path):
        assert run("estimate", "--input", bulgaria_csv, "--seed", 1, "--ci-reps", 200,
                   "--out", tmp_path, "--format", "csv,json,svg") == 0
        harris_rows = read_rows(tmp_path / "path_harris.csv")
        assert float(harris_rows[-1]["value"]) == 327 / 293
        for kind in ("harris", "lotka_nagaev", "crump_hove"):
            assert (tmp_path / f"path_{kind}.csv").exists()
        data = json.loads((tmp_path / "estimates.json").read_text())
        harris = next(p for p in data["point_estimates"] if p["kind"] == "harris")
        assert harris["ci"]["lower"] <= harris["value"] <= harris["ci"]["upper"]
        assert data["seed"] == 1

    def test_constant(self, constant_csv, tmp_path):
        assert run("estimate", "--input", constant_csv, "--ci-reps", 0, "--out", tmp_path) == 0
        for kind in ("harris", "lotka_nagaev", "crump_hove"):
            assert {float(r["value"]) for r in read_rows(tmp_path / f"path_{kind}.csv")} == {1.0}

    def test_length_one(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("date,value\n2020-03-08,4\n")
        assert run("estimate", "--input", path, "--ci-reps", 0, "--out", tmp_path) == 1

    def test_seed_required_for_intervals(self, bulgaria_csv, tmp_path):
        assert run("estimate", "--input", bulgaria_csv, "--out", tmp_path) == 2

    def test_parse_error_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("date,value\n2020-03-08,x\n")
        assert run("estimate", "--input", path, "--ci-reps", 0, "--out", tmp_path) == 1
        assert "line 2" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert run("estimate", "--input", tmp_path / "nope.csv", "--ci-reps", 0, "--out", tmp_path) in (1, 2)

    def test_cumulative_input(self, tmp_path):
        path = tmp_path / "cum.csv"
        path.write_text(csv_text(BULGARIA_CUMULATIVE))
        assert run("estimate", "--input", path, "--value-kind", "cumulative", "--ci-reps", 0,
                   "--out", tmp_path) == 0
        assert float(read_rows(tmp_path / "path_harris.csv")[-1]["value"]) == 327 / 293


class TestForecast:
    def test_file_inventory(self, bulgaria_csv, tmp_path):
        assert run("forecast", "--input", bulgaria_csv, "--s", 10, "--horizon", 5, "--out", tmp_path,
                   "--format", "csv,json,svg") == 0
        for name in ("mean_unregistered.csv", "alpha.csv", "forecast.json",
                     "mean_unregistered.svg", "alpha.svg"):
            assert (tmp_path / name).exists(), name
        rows = read_rows(tmp_path / "mean_unregistered.csv")
        assert {"harris", "lotka_nagaev", "crump_hove"} <= set(rows[0])
        assert len(rows) == 21 - 10 + 1 + 5

    def test_flat_when_m_is_one(self, bulgaria_csv, tmp_path):
        assert run("forecast", "--input", bulgaria_csv, "--s", 10, "--m-override", 1.0,
                   "--out", tmp_path) == 0
        rows = read_rows(tmp_path / "mean_unregistered.csv")
        values = {float(v) for r in rows for k, v in r.items() if k not in ("day", "date", "k", "observed") and v}
        assert values == {19.0}

    def test_base_day_out_of_range(self, bulgaria_csv, tmp_path):
        assert run("forecast", "--input", bulgaria_csv, "--s", 40, "--out", tmp_path) == 2


class TestBacktest:
    def test_bulgaria(self, bulgaria_csv, tmp_path):
        assert run("backtest", "--input", bulgaria_csv, "--K", 5, "--m-override", 1.1093, "--seed", 7,
                   "--ci-reps", 300, "--out", tmp_path) == 0
        rows = {int(r["k"]): r for r in read_rows(tmp_path / "backtest.csv")}
        expected = {1: (32, 38), 2: (24, 29), 3: (24, 22), 4: (21, 22)}
        for k, (pred, obs) in expected.items():
            assert (int(rows[k]["predicted"]), int(rows[k]["observed"])) == (pred, obs)
            assert int(rows[k]["ci_lower"]) <= pred <= int(rows[k]["ci_upper"])

    def test_constant(self, constant_csv, tmp_path):
        assert run("backtest", "--input", constant_csv, "--K", 4, "--ci-reps", 0, "--out", tmp_path) == 0
        assert all(r["predicted"] == r["observed"] for r in read_rows(tmp_path / "backtest.csv"))

    def test_k_too_large(self, bulgaria_csv, tmp_path):
        assert run("backtest", "--input", bulgaria_csv, "--K", 21, "--ci-reps", 0, "--out", tmp_path) == 2


class TestReport:
    def _inputs(self, tmp_path, n):
        paths = []
        for i in range(n):
            p = tmp_path / f"c{i}.csv"
            p.write_text(csv_text([v * (i + 1) + i for v in BULGARIA]))
            paths.append(p)
        return paths

    def test_three_countries(self, tmp_path):
        argv = ["report", "--out", tmp_path / "r", "--format", "csv,json,svg"]
        for i, p in enumerate(self._inputs(tmp_path, 3)):
            argv += ["--input", p, "--label", f"C{i}"]
        assert run(*argv) == 0
        rows = read_rows(tmp_path / "r" / "comparison_harris.csv")
        assert [c for c in rows[0] if c not in ("offset", "date")] == ["C0", "C1", "C2"]
        index = json.loads((tmp_path / "r" / "index.json").read_text())
        assert len(index["series"]) == 3
        alpha_rows = read_rows(tmp_path / "r" / "comparison_alpha.csv")
        assert len(alpha_rows) <= 20

    def test_single_input(self, bulgaria_csv, tmp_path):
        assert run("report", "--input", bulgaria_csv, "--out", tmp_path) == 0
        rows = read_rows(tmp_path / "comparison_harris.csv")
        assert len([c for c in rows[0] if c not in ("offset", "date")]) == 1
        assert float(rows[-1][list(rows[0])[-1]]) == 327 / 293

    def test_mismatched_ranges_warn(self, bulgaria_csv, tmp_path, capsys):
        short = tmp_path / "short.csv"
        short.write_text(csv_text(BULGARIA[:15], start=dt.date(2020, 4, 1)))
        assert run("report", "--input", bulgaria_csv, "--input", short, "--out", tmp_path / "r") == 0
        assert "warning" in capsys.readouterr().err
        index = json.loads((tmp_path / "r" / "index.json").read_text())
        assert index["warnings"]

    def test_label_count_mismatch(self, bulgaria_csv, tmp_path):
        assert run("report", "--input", bulgaria_csv, "--label", "a", "--label", "b", "--out", tmp_path) == 2
