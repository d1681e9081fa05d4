"""End-to-end checks of the command line entry points."""

import csv
import json

import numpy as np
import numpy.testing as npt
import pytest

from splam.cli import DEFAULTS, _merge_config, build_parser, main
from splam.model import Dataset, build_bases, build_design, load_dataset_csv


def write_csv(path, columns: dict):
    names = list(columns)
    n = len(next(iter(columns.values())))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(n):
            writer.writerow([repr(float(columns[name][i])) for name in names])


def linear_signal_csv(path, n=160, seed=3):
    """y driven by the first linear column only; one pure-noise curve column."""
    rng = np.random.default_rng(seed)
    z1 = rng.normal(size=n)
    z2 = rng.normal(size=n)
    x1 = rng.uniform(size=n)
    y = 0.5 + 2.0 * z1 + 0.3 * rng.normal(size=n)
    write_csv(path, {"y": y, "z1": z1, "z2": z2, "x1": x1})


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfigMerge:

    def test_flag_beats_config_beats_default(self, tmp_path):
        cfg_path = tmp_path / "conf.json"
        cfg_path.write_text(json.dumps({"penalty": "none", "loss": "squared"}))
        args = build_parser().parse_args(
            ["fit", "--config", str(cfg_path), "--loss", "tukey"])
        cfg = _merge_config(args)
        assert cfg["loss"] == "tukey"
        assert cfg["penalty"] == "none"
        assert cfg["seed"] == DEFAULTS["seed"]

    def test_unknown_config_key_is_usage_error(self, tmp_path, capsys):
        cfg_path = tmp_path / "conf.json"
        cfg_path.write_text(json.dumps({"not_a_setting": 1}))
        code = main(["fit", "--config", str(cfg_path)])
        assert code == 2
        record = json.loads(capsys.readouterr().err)
        assert record["exit_code"] == 2

    def test_config_must_be_object(self, tmp_path):
        cfg_path = tmp_path / "conf.json"
        cfg_path.write_text("[1, 2]")
        assert main(["fit", "--config", str(cfg_path)]) == 2


class TestFitCommand:

    def test_penalized_fit_selects_linear_signal(self, tmp_path):
        csv_path = tmp_path / "d.csv"
        linear_signal_csv(csv_path)
        prefix = str(tmp_path / "out")
        code = main([
            "fit", "--input", str(csv_path), "--response", "y",
            "--linear", "z1,z2", "--additive", "x1",
            "--loss", "squared", "--tilde1", "0.1,0.2", "--tilde2", "0.3,0.5",
            "--k-grid", "4,5", "--out-prefix", prefix, "--seed", "0",
        ])
        assert code == 0
        with open(prefix + "_fit.json") as fh:
            report = json.load(fh)
        by_col = {entry["column"]: entry for entry in report["linear"]}
        assert by_col["z1"]["active"]
        assert abs(by_col["z1"]["coefficient"] - 2.0) < 0.15
        assert not by_col["z2"]["active"]
        curve = report["curves"][0]
        assert curve["column"] == "x1"
        assert not curve["active"]
        npt.assert_allclose(curve["values"], 0.0)

        rows = read_rows(prefix + "_residuals.csv")
        assert len(rows) == 160
        for row in rows[:10]:
            total = float(row["fitted"]) + float(row["residual"])
            assert abs(total - float(row["response"])) < 1e-10

    def test_unpenalized_squared_matches_least_squares(self, tmp_path):
        csv_path = tmp_path / "d.csv"
        linear_signal_csv(csv_path, n=120, seed=9)
        prefix = str(tmp_path / "ls")
        code = main([
            "fit", "--input", str(csv_path), "--response", "y",
            "--linear", "z1,z2", "--additive", "x1",
            "--loss", "squared", "--penalty", "none",
            "--k-grid", "5", "--placement", "uniform", "--out-prefix", prefix,
        ])
        assert code == 0
        data = load_dataset_csv(csv_path, "y", ["z1", "z2"], ["x1"])
        bases = build_bases(data.X, 5, placement="uniform")
        design = build_design(data, bases)
        M = np.column_stack([np.ones(data.n), design.W])
        coef, *_ = np.linalg.lstsq(M, data.y, rcond=None)
        expected = M @ coef
        rows = read_rows(prefix + "_residuals.csv")
        fitted = np.array([float(r["fitted"]) for r in rows])
        npt.assert_allclose(fitted, expected, atol=1e-8)

    def test_missing_column_is_data_error(self, tmp_path, capsys):
        csv_path = tmp_path / "d.csv"
        linear_signal_csv(csv_path, n=40)
        code = main(["fit", "--input", str(csv_path), "--response", "nope",
                     "--linear", "z1", "--additive", "x1"])
        assert code == 3
        record = json.loads(capsys.readouterr().err)
        assert record["error"] == "SchemaError"
        assert "nope" in record["message"]

    def test_missing_input_file_is_data_error(self, tmp_path):
        assert main(["fit", "--input", str(tmp_path / "absent.csv"),
                     "--response", "y", "--linear", "z1"]) == 3

    def test_no_response_flag_is_usage_error(self, tmp_path, capsys):
        csv_path = tmp_path / "d.csv"
        linear_signal_csv(csv_path, n=40)
        code = main(["fit", "--input", str(csv_path), "--linear", "z1"])
        assert code == 2
        record = json.loads(capsys.readouterr().err)
        assert record["error"] == "UsageError"

    def test_overlapping_roles_is_usage_error(self, tmp_path):
        csv_path = tmp_path / "d.csv"
        linear_signal_csv(csv_path, n=40)
        assert main(["fit", "--input", str(csv_path), "--response", "y",
                     "--linear", "z1", "--additive", "z1"]) == 2

    def test_bad_loss_is_usage_error(self, tmp_path):
        csv_path = tmp_path / "d.csv"
        linear_signal_csv(csv_path, n=40)
        assert main(["fit", "--input", str(csv_path), "--response", "y",
                     "--linear", "z1", "--additive", "x1",
                     "--loss", "huber"]) == 2

    def test_standardize_records_constants_and_skips_binary(self, tmp_path):
        rng = np.random.default_rng(11)
        n = 120
        z1 = 3.0 + 2.0 * rng.normal(size=n)
        flag = (rng.uniform(size=n) < 0.5).astype(float)
        x1 = rng.uniform(size=n)
        y = 10.0 + 4.0 * z1 + flag + rng.normal(size=n)
        csv_path = tmp_path / "d.csv"
        write_csv(csv_path, {"y": y, "z1": z1, "flag": flag, "x1": x1})
        prefix = str(tmp_path / "std")
        code = main([
            "fit", "--input", str(csv_path), "--response", "y",
            "--linear", "z1,flag", "--additive", "x1",
            "--loss", "squared", "--penalty", "none", "--k-grid", "4",
            "--standardize", "--out-prefix", prefix,
        ])
        assert code == 0
        with open(prefix + "_fit.json") as fh:
            report = json.load(fh)
        constants = report["standardization"]
        assert "y" in constants and "z1" in constants and "x1" in constants
        assert "flag" not in constants
        assert abs(constants["y"]["center"] - np.median(y)) < 1e-10
        assert constants["z1"]["scale"] > 0


class TestSimulateCommand:

    def simulate_args(self, prefix, seed=7):
        return ["simulate", "--n", "120", "--reps", "1", "--seed", str(seed),
                "--method", "ls", "--contamination", "c0",
                "--tilde1", "0.2", "--tilde2", "0.3", "--k-grid", "4",
                "--subsamples", "100", "--out-prefix", prefix]

    def test_outputs_are_reproducible(self, tmp_path):
        p1, p2 = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(self.simulate_args(p1)) == 0
        assert main(self.simulate_args(p2)) == 0
        for suffix in ("_replications.csv", "_aggregate.csv"):
            with open(p1 + suffix, "rb") as fh:
                first = fh.read()
            with open(p2 + suffix, "rb") as fh:
                second = fh.read()
            assert first == second

    def test_replication_rows_schema(self, tmp_path):
        prefix = str(tmp_path / "s")
        assert main(self.simulate_args(prefix)) == 0
        rows = read_rows(prefix + "_replications.csv")
        assert len(rows) == 1
        assert rows[0]["method"] == "ls"
        assert rows[0]["status"] == "ok"
        assert float(rows[0]["gmse"]) >= 0.0

    def test_bad_contamination_is_usage_error(self, tmp_path, capsys):
        code = main(["simulate", "--n", "100", "--reps", "1",
                     "--contamination", "c9",
                     "--out-prefix", str(tmp_path / "x")])
        assert code == 2
        record = json.loads(capsys.readouterr().err)
        assert record["exit_code"] == 2

    def test_bad_method_is_usage_error(self, tmp_path):
        assert main(["simulate", "--method", "median",
                     "--out-prefix", str(tmp_path / "x")]) == 2

    def test_half_grid_is_usage_error(self, tmp_path):
        assert main(["simulate", "--n", "100", "--reps", "1",
                     "--tilde1", "0.2",
                     "--out-prefix", str(tmp_path / "x")]) == 2


class TestEvaluateCommand:

    def evaluate_csv(self, path, n=140, noise=1e-6, seed=5):
        rng = np.random.default_rng(seed)
        z1 = rng.normal(size=n)
        z2 = rng.normal(size=n)
        x1 = rng.uniform(size=n)
        y = 1.0 + 2.0 * z1 - z2 + noise * rng.normal(size=n)
        write_csv(path, {"y": y, "z1": z1, "z2": z2, "x1": x1})

    def test_holdout_must_fit_in_sample(self, tmp_path, capsys):
        csv_path = tmp_path / "d.csv"
        self.evaluate_csv(csv_path, n=50)
        code = main(["evaluate", "--input", str(csv_path), "--response", "y",
                     "--linear", "z1,z2", "--additive", "x1",
                     "--holdout", "50", "--splits", "1"])
        assert code == 2
        record = json.loads(capsys.readouterr().err)
        assert record["error"] == "UsageError"

    def test_unknown_method_is_usage_error(self, tmp_path):
        csv_path = tmp_path / "d.csv"
        self.evaluate_csv(csv_path, n=50)
        assert main(["evaluate", "--input", str(csv_path), "--response", "y",
                     "--linear", "z1,z2", "--additive", "x1",
                     "--holdout", "10", "--splits", "1",
                     "--methods", "ridge"]) == 2

    def test_unpenalized_near_perfect_signal(self, tmp_path):
        csv_path = tmp_path / "d.csv"
        self.evaluate_csv(csv_path)
        prefix = str(tmp_path / "ev")
        code = main([
            "evaluate", "--input", str(csv_path), "--response", "y",
            "--linear", "z1,z2", "--additive", "x1",
            "--methods", "unpenalized-ls", "--holdout", "30", "--splits", "2",
            "--k-grid", "4", "--out-prefix", prefix, "--seed", "1",
        ])
        assert code == 0
        summary = read_rows(prefix + "_summary.csv")
        assert len(summary) == 1
        row = summary[0]
        assert row["method"] == "unpenalized-ls"
        assert int(row["failed"]) == 0
        assert float(row["mean_mape"]) < 1e-4
        assert float(row["av_size"]) == 3.0
        splits = read_rows(prefix + "_splits.csv")
        assert len(splits) == 2
        assert {r["split"] for r in splits} == {"0", "1"}

    def test_standardized_error_is_in_scale_units(self, tmp_path):
        rng = np.random.default_rng(21)
        n = 170
        z1 = rng.normal(size=n)
        x1 = rng.uniform(size=n)
        y = 5.0 + 10.0 * z1 + rng.normal(size=n)
        csv_path = tmp_path / "d.csv"
        write_csv(csv_path, {"y": y, "z1": z1, "x1": x1})
        prefix = str(tmp_path / "sc")
        code = main([
            "evaluate", "--input", str(csv_path), "--response", "y",
            "--linear", "z1", "--additive", "x1",
            "--methods", "unpenalized-ls", "--holdout", "40", "--splits", "2",
            "--k-grid", "4", "--standardize", "--out-prefix", prefix,
        ])
        assert code == 0
        summary = read_rows(prefix + "_summary.csv")
        raw_noise_scale = np.median(np.abs(y - np.median(y)))
        assert float(summary[0]["mean_mape"]) < 0.5
        assert raw_noise_scale > 5.0

    def test_penalized_split_runs(self, tmp_path):
        csv_path = tmp_path / "d.csv"
        self.evaluate_csv(csv_path, noise=0.3, seed=13)
        prefix = str(tmp_path / "pen")
        code = main([
            "evaluate", "--input", str(csv_path), "--response", "y",
            "--linear", "z1,z2", "--additive", "x1",
            "--loss", "squared", "--methods", "penalized-ls",
            "--tilde1", "0.1", "--tilde2", "0.3", "--holdout", "30",
            "--splits", "2", "--k-grid", "4", "--out-prefix", prefix,
        ])
        assert code == 0
        splits = read_rows(prefix + "_splits.csv")
        assert all(r["status"] == "ok" for r in splits)
        sizes = {float(r["size"]) for r in splits}
        assert all(s <= 3 for s in sizes)


class TestParserBasics:

    def test_missing_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == 2

    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as err:
            main(["fit", "--frobnicate"])
        assert err.value.code == 2
