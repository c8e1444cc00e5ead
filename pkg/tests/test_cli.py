import json
import os

import pandas as pd
import pytest

from svybayes.cli import main
from svybayes.data import example_path


def test_exit_code_mapping():
    from svybayes import errors

    assert errors.ConfigurationError.exit_code == 2
    assert errors.NotFoundError.exit_code == 2
    assert errors.DataError.exit_code == 3
    assert errors.InvalidWeightsError.exit_code == 3
    assert errors.NumericalError.exit_code == 4
    assert errors.AdjustmentError.exit_code == 4


@pytest.fixture
def fit_config(tmp_path):
    path = tmp_path / "fit.cfg"
    path.write_text(
        f"data = {example_path('apiclus1')}\n"
        "seed = 12345\n"
        "design.weight = pw\n"
        "design.psu = dnum\n"
        "design.fpc = fpc\n"
        "model.family = multinomial_gamma\n"
        "model.response = stype\n"
        "model.alpha = 1\n"
        "sampler.iter = 400\n"
        "sampler.warmup = 200\n"
        "replication.method = jkn\n"
    )
    return str(path)


class TestFitCommand:
    def test_fit_runs_and_saves(self, fit_config, tmp_path, capsys):
        outdir = str(tmp_path / "out")
        code = main(["fit", "--config", fit_config, "--output_dir", outdir])
        assert code == 0
        printed = capsys.readouterr().out
        assert "design effects" in printed
        assert os.path.exists(os.path.join(outdir, "summary.json"))

    def test_flag_overrides_config(self, fit_config, capsys):
        code = main(["fit", "--config", fit_config, "--sampler.iter", "300",
                     "--sampler.warmup", "100"])
        assert code == 0

    def test_missing_column_exits_2(self, fit_config, capsys):
        code = main(["fit", "--config", fit_config, "--design.weight", "nope"])
        assert code == 2
        assert "nope" in capsys.readouterr().err

    def test_bad_data_value_exits_3(self, tmp_path, fit_config, capsys):
        frame = pd.read_csv(example_path("apiclus1"))
        frame.loc[0, "pw"] = -1.0
        bad = tmp_path / "bad.csv"
        frame.to_csv(bad, index=False)
        code = main(["fit", "--config", fit_config, "--data", str(bad),
                     "--normalize_weights", "false"])
        assert code == 3

    def test_seed_required(self, tmp_path, capsys):
        path = tmp_path / "noseed.cfg"
        path.write_text(
            f"data = {example_path('apiclus1')}\n"
            "design.weight = pw\n"
            "design.psu = dnum\n"
            "model.family = multinomial_gamma\n"
            "model.response = stype\n"
        )
        code = main(["fit", "--config", str(path)])
        assert code == 2
        assert "seed" in capsys.readouterr().err


class TestReplicatesCommand:
    def test_export(self, tmp_path, capsys):
        prefix = str(tmp_path / "reps")
        code = main(["replicates", "--data", example_path("apiclus1"),
                     "--weight", "pw", "--psu", "dnum", "--method", "jkn",
                     "--out", prefix])
        assert code == 0
        weights = pd.read_csv(prefix + "_weights.csv")
        assert weights.shape == (183, 15)
        with open(prefix + "_meta.txt") as fh:
            meta = fh.read()
        assert "method = jkn" in meta

    def test_mrb_needs_seed(self, tmp_path, capsys):
        code = main(["replicates", "--data", example_path("apiclus1"),
                     "--weight", "pw", "--psu", "dnum",
                     "--out", str(tmp_path / "r")])
        assert code == 2


class TestSvymeanCommand:
    def test_table_with_replication(self, tmp_path, capsys):
        out = str(tmp_path / "means.csv")
        code = main(["svymean", "--data", example_path("apiclus1"),
                     "--weight", "pw", "--psu", "dnum", "--fpc", "fpc",
                     "--vars", "stype", "--replication", "--method", "jkn",
                     "--out", out])
        assert code == 0
        table = pd.read_csv(out)
        assert len(table) == 3
        row = table[table["statistic"] == "stypeE"].iloc[0]
        assert row["mean"] == pytest.approx(0.786885, abs=1e-4)
        assert row["se_linearization"] == pytest.approx(0.0463, abs=2e-3)
        assert row["se_replication"] == pytest.approx(0.0514, abs=2e-3)


class TestSimulateCommand:
    def test_tiny_study(self, tmp_path, capsys):
        scenario = tmp_path / "scen.cfg"
        scenario.write_text(
            "family = bernoulli_logit\n"
            "theta0 = -0.7, 0.5\n"
            "population_size = 4000\n"
            "scheme = srs\n"
            "sample_size = 200\n"
            "replications = 3\n"
            "nominal = 0.9\n"
            "seed = 5\n"
            "sampler.iter = 400\n"
            "sampler.warmup = 200\n"
        )
        out = str(tmp_path / "study")
        code = main(["simulate", "--scenario", str(scenario), "--out", out])
        assert code == 0
        records = pd.read_csv(os.path.join(out, "coverage.csv"))
        assert {"replication", "parameter", "covered_adjusted",
                "covered_unadjusted", "deff"} <= set(records.columns)
        with open(os.path.join(out, "summary.json")) as fh:
            payload = json.load(fh)
        assert payload["replications"] == 3

    def test_unknown_scenario_key(self, tmp_path, capsys):
        scenario = tmp_path / "scen.cfg"
        scenario.write_text("familly = bernoulli_logit\n")
        code = main(["simulate", "--scenario", str(scenario)])
        assert code == 2


class TestExportCommand:
    def test_pairs_csv(self, fit_config, tmp_path, capsys):
        outdir = str(tmp_path / "fitout")
        assert main(["fit", "--config", fit_config, "--output_dir", outdir]) == 0
        pairs = str(tmp_path / "pairs.csv")
        code = main(["export", "--result", outdir,
                     "--vars", "theta1,theta2", "--out", pairs])
        assert code == 0
        table = pd.read_csv(pairs)
        assert set(table["parameter"]) == {"theta1", "theta2"}
        assert set(table["series"]) == {"unadjusted", "adjusted"}

    def test_unknown_var_exits_2(self, fit_config, tmp_path, capsys):
        outdir = str(tmp_path / "fitout2")
        assert main(["fit", "--config", fit_config, "--output_dir", outdir]) == 0
        code = main(["export", "--result", outdir, "--vars", "zzz",
                     "--out", str(tmp_path / "p.csv")])
        assert code == 2
        assert "available" in capsys.readouterr().err
