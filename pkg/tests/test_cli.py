"""End-to-end tests for the qdist command line."""

import json

import numpy as np
import pandas as pd
import pytest

from qdist import cli
from qdist.shared.errors import NumericalError
from qdist.shared.runner import THREADS_ENV

SCENARIO = """\
name: cli_small
mechanism: beta_curve
curve: linear
distribution: normal
n_subjects: 40
n_obs: [30, 50]
noise: 0.2
seed: 13
"""

JIVE_SCENARIO = """\
name: cli_jive
mechanism: jive
domains:
  pace: 2
  rhythm: 1
n_subjects: 30
n_obs: [20, 30]
seed: 4
"""


@pytest.fixture(autouse=True)
def _single_thread(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "1")


def _simulate(tmp_path, text, name="sim"):
    scenario = tmp_path / f"{name}.yaml"
    scenario.write_text(text)
    out = tmp_path / name
    assert cli.main(["simulate", str(scenario), "--output", str(out)]) == 0
    return out


def _data_flags(sim):
    return ["--observations", str(sim / "observations.csv"), "--subjects", str(sim / "subjects.csv")]


class TestSimulateAndFit:
    def test_fit_soqfr(self, tmp_path):
        sim = _simulate(tmp_path, SCENARIO)
        assert (sim / "truth.json").exists()
        out = tmp_path / "fit"
        code = cli.main(["fit-soqfr", *_data_flags(sim), "--basis-size", "8", "--output", str(out)])
        assert code == 0
        beta = pd.read_csv(out / "beta.csv")
        assert list(beta.columns) == ["p", "estimate", "lower", "upper"]
        assert len(beta) == 100
        summary = json.loads((out / "soqfr.json").read_text())
        assert summary["deviance_explained"] > 0
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["command"] == "fit-soqfr"
        assert manifest["config"]["soqfr.basis_size"] == 8
        assert "numpy" in manifest["versions"]

    def test_repeated_runs_are_byte_identical(self, tmp_path):
        sim = _simulate(tmp_path, SCENARIO)
        for name in ("a", "b"):
            assert cli.main(["fit-soqfr-l", *_data_flags(sim), "--order", "3", "--output", str(tmp_path / name)]) == 0
        for artifact in ("beta.csv", "wald.csv", "soqfr_l.json"):
            assert (tmp_path / "a" / artifact).read_bytes() == (tmp_path / "b" / artifact).read_bytes()

    def test_manifest_records_scenario_seed(self, tmp_path):
        sim = _simulate(tmp_path, SCENARIO.replace("seed: 13", "seed: 7"))
        manifest = json.loads((sim / "run_manifest.json").read_text())
        assert manifest["scenario_seeds"] == {"cli_small": 7}
        truth = json.loads((sim / "truth.json").read_text())
        assert truth["scenario"]["seed"] == 7

    def test_seed_flag_overrides_scenario_seed(self, tmp_path):
        scenario = tmp_path / "s.yaml"
        scenario.write_text(SCENARIO)
        out = tmp_path / "seeded"
        assert cli.main(["simulate", str(scenario), "--seed", "21", "--output", str(out)]) == 0
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["scenario_seeds"] == {"cli_small": 21}

    def test_simulation_is_reproducible(self, tmp_path):
        first = _simulate(tmp_path, SCENARIO, "one")
        second = _simulate(tmp_path, SCENARIO, "two")
        assert (first / "observations.csv").read_bytes() == (second / "observations.csv").read_bytes()

    @pytest.mark.parametrize("command,artifact", [
        ("fit-fgam", "surface_slices.csv"),
        ("fit-gam-l", "smooths.csv"),
        ("fit-hist", "f_x.csv"),
    ])
    def test_other_models(self, tmp_path, command, artifact):
        sim = _simulate(tmp_path, SCENARIO)
        out = tmp_path / "out"
        extra = ["--order", "2"] if command == "fit-gam-l" else []
        assert cli.main([command, *_data_flags(sim), *extra, "--output", str(out)]) == 0
        assert (out / artifact).exists()


class TestDescriptors:
    def test_lmoments_single_subject(self, tmp_path):
        obs = tmp_path / "obs.csv"
        obs.write_text("subject_id,feature_id,value\n" + "".join(f"s1,x,{v}\n" for v in (3, 1, 4, 1, 5, 9)))
        subj = tmp_path / "subj.csv"
        subj.write_text("subject_id,outcome\ns1,1.0\n")
        out = tmp_path / "out"
        assert cli.main(["lmoments", "--observations", str(obs), "--subjects", str(subj), "--output", str(out)]) == 0
        table = pd.read_csv(out / "lmoments.csv")
        assert len(table) == 1
        assert list(table.columns) == ["subject_id", "feature_id", "L1", "L2", "L3", "L4"]

    def test_quantiles(self, tmp_path):
        sim = _simulate(tmp_path, SCENARIO)
        out = tmp_path / "q"
        assert cli.main(["quantiles", *_data_flags(sim), "--resolution", "20", "--output", str(out)]) == 0
        assert len(pd.read_csv(out / "quantiles.csv")) == 40 * 20
        assert set(pd.read_csv(out / "barycenters.csv")["group"]) == {"low", "high"}


class TestJiveCommand:
    def test_explicit_ranks(self, tmp_path):
        sim = _simulate(tmp_path, JIVE_SCENARIO)
        out = tmp_path / "jive"
        code = cli.main([
            "jive", *_data_flags(sim), "--domains", str(sim / "domains.csv"), "--order", "2",
            "--joint-rank", "1", "--individual-ranks", "pace=1,rhythm=0", "--output", str(out),
        ])
        assert code == 0
        summary = json.loads((out / "jive.json").read_text())
        assert summary["joint_rank"] == 1
        scores = pd.read_csv(out / "scores.csv")
        assert set(scores["score_name"]) == {"joint1", "pace1"}
        assert not (out / "ranks.json").exists()

    def test_permutation_ranks(self, tmp_path):
        sim = _simulate(tmp_path, JIVE_SCENARIO)
        out = tmp_path / "jive"
        code = cli.main([
            "jive", *_data_flags(sim), "--domains", str(sim / "domains.csv"), "--order", "2",
            "--n-perm", "20", "--output", str(out),
        ])
        assert code == 0
        assert json.loads((out / "ranks.json").read_text())["n_perm"] == 20

    def test_one_rank_flag_is_rejected(self, tmp_path):
        sim = _simulate(tmp_path, JIVE_SCENARIO)
        code = cli.main([
            "jive", *_data_flags(sim), "--domains", str(sim / "domains.csv"),
            "--joint-rank", "1", "--output", str(tmp_path / "jive"),
        ])
        assert code == 1

    def test_requires_domains(self, tmp_path):
        sim = _simulate(tmp_path, SCENARIO)
        assert cli.main(["jive", *_data_flags(sim), "--output", str(tmp_path / "j")]) == 1


class TestCvCommand:
    def test_small_run(self, tmp_path):
        sim = _simulate(tmp_path, SCENARIO)
        out = tmp_path / "cv"
        code = cli.main([
            "cv", *_data_flags(sim), "--models", "mean,soqfr-l", "--order", "2",
            "--k", "4", "--repeats", "2", "--permutation", "--output", str(out),
        ])
        assert code == 0
        report = pd.read_csv(out / "cv_report.csv")
        assert list(report["model"]) == ["mean", "mean-permuted", "soqfr-l", "soqfr-l-permuted"]
        assert set(report["metric"]) == {"cvR2"}
        details = json.loads((out / "cv_report.json").read_text())
        assert details["comparisons"][0]["model_b"] == "soqfr-l"


class TestExitCodes:
    def test_missing_input(self, tmp_path):
        obs = tmp_path / "obs.csv"
        obs.write_text("subject_id,feature_id,value\ns1,x,1\n")
        assert cli.main(["fit-soqfr", "--observations", str(obs), "--output", str(tmp_path / "o")]) == 1

    def test_unreadable_subjects_file(self, tmp_path):
        sim = _simulate(tmp_path, SCENARIO)
        code = cli.main([
            "fit-soqfr", "--observations", str(sim / "observations.csv"),
            "--subjects", str(tmp_path / "absent.csv"), "--output", str(tmp_path / "o"),
        ])
        assert code == 1

    def test_unknown_flag(self, tmp_path):
        assert cli.main(["fit-soqfr", "--bogus", "1"]) == 1

    def test_bad_flag_value(self):
        assert cli.main(["jive", "--individual-ranks", "pace"]) == 1

    def test_numerical_failure(self, tmp_path, monkeypatch):
        async def explode(*args, **kwargs):
            raise NumericalError("singular")

        monkeypatch.setattr(cli, "run_command", explode)
        assert cli.main(["lmoments", "--output", str(tmp_path / "o")]) == 2

    def test_linear_algebra_failure(self, tmp_path, monkeypatch):
        async def explode(*args, **kwargs):
            raise np.linalg.LinAlgError("Singular matrix")

        monkeypatch.setattr(cli, "run_command", explode)
        assert cli.main(["lmoments", "--output", str(tmp_path / "o")]) == 2
