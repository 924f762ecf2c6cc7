"""
Tests for the command-line interface, run manifests and acceptance suites.
"""

import json

import pytest
from click.testing import CliRunner

from src.harness.cli import EXIT_ERROR, cli
from src.harness.manifest import MANIFEST_NAME, RunManifest, sha256_file
from src.harness.suites import SuiteScale, _ito_instances, run_check_suite, run_suite
from src.measures.models import AtomicMeasure
from src.storage.measure_io import write_measure
from src.storage.results import ResultStore, dumps_report
from src.utils.errors import ConfigError, SuiteError


@pytest.fixture
def runner():
    yield CliRunner()


@pytest.fixture
def workspace(tmp_path):
    write_measure(AtomicMeasure.dirac([0.0]), tmp_path / "a.txt")
    write_measure(AtomicMeasure.dirac([0.0], weight=2.0), tmp_path / "b.txt")
    write_measure(AtomicMeasure.dirac([1.0]), tmp_path / "nu.txt")
    (tmp_path / "metric.cfg").write_text("[metric]\nfirst = a.txt\nsecond = b.txt\n")
    (tmp_path / "value.cfg").write_text(
        "[model]\nfamily = constant\naction_gain = 1.0\n\n"
        "[cost]\nfamily = quadratic\nc_a = 1.0\ng_x = 1.0\n\n"
        "[initial]\nmeasure = nu.txt\n\n"
        "[run]\nT = 1.0\ndt = 0.05\nreplicas = 1\nseed = 3\n\n"
        "[search]\nrestarts = 1\niterations = 150\nreplicas = 1\nxatol = 1e-8\nfatol = 1e-12\n"
    )
    (tmp_path / "simulate.cfg").write_text(
        "[model]\nfamily = affine\nkappa = -0.5\nsigma = 0.5\ngamma = 1.0\npmf = [0.25, 0.25, 0.5]\n\n"
        "[initial]\nmeasure = nu.txt\n\n"
        "[run]\nT = 0.2\ndt = 0.01\nreplicas = 20\n"
    )
    return tmp_path


def _read(path):
    return json.loads(path.read_text())


class TestManifest:
    """Test manifests and the result store."""

    def test_manifest_hashes_inputs(self, tmp_path):
        source = tmp_path / "nu.txt"
        source.write_text("1.0 0.0\n")
        store = ResultStore(str(tmp_path / "out"))
        store.write_json("report.json", {"value": 1.0})
        RunManifest.build("metric", 7, {"metric": {}}, [source]).write(store)
        manifest = _read(tmp_path / "out" / MANIFEST_NAME)
        assert manifest["inputs"] == {source.as_posix(): sha256_file(source)}
        assert manifest["outputs"] == ["report.json"]
        assert manifest["seed"] == 7

    def test_missing_input(self, tmp_path):
        with pytest.raises(ConfigError):
            RunManifest.build("metric", 7, {}, [tmp_path / "nope.txt"])

    def test_report_rendering_is_deterministic(self):
        report = {"b": float("inf"), "a": [1, 2.5]}
        assert dumps_report(report) == dumps_report(dict(reversed(list(report.items()))))
        assert json.loads(dumps_report(report))["b"] == "inf"


class TestCli:
    """Test subcommands, outputs and exit codes."""

    def test_metric(self, runner, workspace):
        out = workspace / "out"
        result = runner.invoke(cli, ["--out-dir", str(out), "metric", str(workspace / "metric.cfg")])
        assert result.exit_code == 0, result.output
        report = _read(out / "metric.json")
        assert report["rhoF"]["value"] ** 2 == pytest.approx(5.0 / 32.0)
        assert report["w1"]["value"] == pytest.approx(1.0)
        assert report["domination"]["status"] == "passed"
        manifest = _read(out / MANIFEST_NAME)
        assert manifest["subcommand"] == "metric"
        assert len(manifest["inputs"]) == 2

    def test_metric_csv_and_override(self, runner, workspace):
        out = workspace / "csv"
        result = runner.invoke(cli, ["--out-dir", str(out), "--format", "csv", "metric",
                                     str(workspace / "metric.cfg"), "--metric", "w1"])
        assert result.exit_code == 0, result.output
        assert set(_read(out / "metric.json")) == {"w1"}
        assert (out / "metric.csv").read_text().startswith("metric,value")

    def test_metric_of_two_measure_files(self, runner, workspace):
        out = workspace / "pair"
        result = runner.invoke(cli, ["--out-dir", str(out), "metric", str(workspace / "a.txt"),
                                     str(workspace / "nu.txt"), "--metric", "w1"])
        assert result.exit_code == 0, result.output
        assert _read(out / "metric.json")["w1"]["value"] == pytest.approx(1.0)
        manifest = _read(out / MANIFEST_NAME)
        assert manifest["config"]["metric"]["lam"] is None
        assert len(manifest["inputs"]) == 2

    def test_lambda_auto_ignores_the_configured_lambda(self, runner, workspace):
        (workspace / "lam.cfg").write_text("[metric]\nfirst = a.txt\nsecond = b.txt\nlam = 5\nmetric = rhoF\n")
        reports = {}
        for name, extra in (("auto", ["--lambda-auto"]), ("pair", [])):
            out = workspace / name
            args = ["--out-dir", str(out), "metric"]
            args += [str(workspace / "lam.cfg")] if extra else [str(workspace / "a.txt"), str(workspace / "b.txt")]
            result = runner.invoke(cli, args + ["--metric", "rhoF"] + extra)
            assert result.exit_code == 0, result.output
            reports[name] = _read(out / "metric.json")["rhoF"]["value"]
        assert reports["auto"] == pytest.approx(reports["pair"])
        assert reports["auto"] ** 2 == pytest.approx(5.0 / 32.0)

    def test_measure_files_replace_the_configured_pair(self, runner, workspace):
        out = workspace / "replaced"
        result = runner.invoke(cli, ["--out-dir", str(out), "metric", str(workspace / "metric.cfg"),
                                     str(workspace / "a.txt"), str(workspace / "nu.txt"), "--metric", "w1"])
        assert result.exit_code == 0, result.output
        assert _read(out / "metric.json")["w1"]["value"] == pytest.approx(1.0)

    def test_missing_measure_file(self, runner, workspace):
        result = runner.invoke(cli, ["--out-dir", str(workspace / "out"), "metric",
                                     str(workspace / "a.txt"), str(workspace / "nope.txt")])
        assert result.exit_code == EXIT_ERROR
        assert "nope.txt" in result.output

    def test_config_error_exit_code(self, runner, workspace):
        (workspace / "empty.cfg").write_text("")
        result = runner.invoke(cli, ["--out-dir", str(workspace / "out"), "metric", str(workspace / "empty.cfg")])
        assert result.exit_code == EXIT_ERROR
        assert "error[config]" in result.output
        assert "[metric] first" in result.output

    def test_simulate_is_reproducible(self, runner, workspace):
        outputs = []
        for name in ("run1", "run2"):
            out = workspace / name
            result = runner.invoke(cli, ["--seed", "11", "--out-dir", str(out), "--format", "csv",
                                         "simulate", str(workspace / "simulate.cfg")])
            assert result.exit_code == 0, result.output
            outputs.append((out / "particles.csv").read_text())
        assert outputs[0] == outputs[1]
        assert _read(workspace / "run1" / MANIFEST_NAME)["seed"] == 11

    def test_simulate_override_off_grid(self, runner, workspace):
        result = runner.invoke(cli, ["--out-dir", str(workspace / "out"), "simulate",
                                     str(workspace / "simulate.cfg"), "--T", "0.205"])
        assert result.exit_code == EXIT_ERROR
        assert "error[grid]" in result.output

    def test_simulate_from_model_and_policy_files(self, runner, workspace):
        parts = workspace / "parts"
        parts.mkdir()
        write_measure(AtomicMeasure.dirac([2.0]), parts / "start.txt")
        (parts / "model.cfg").write_text(
            "[model]\nfamily = affine\nkappa = -1.0\nsigma = 0.3\ngamma = 0.5\npmf = [0.5, 0.0, 0.5]\n\n"
            "[initial]\nmeasure = start.txt\n\n"
            "[run]\nT = 0.1\ndt = 0.01\nreplicas = 10\n"
        )
        (parts / "policy.cfg").write_text("[policy]\nfamily = constant\nparameters = [0.5]\n")
        out = workspace / "layered"
        result = runner.invoke(cli, ["--seed", "1", "--out-dir", str(out), "simulate",
                                     "--model", str(parts / "model.cfg"), "--policy", str(parts / "policy.cfg"),
                                     "--dt", "0.005", "--seed", "21"])
        assert result.exit_code == 0, result.output
        manifest = _read(out / MANIFEST_NAME)
        assert manifest["seed"] == 21
        assert manifest["config"]["policy"]["parameters"] == [0.5]
        assert manifest["config"]["model"]["params"]["kappa"] == -1.0
        assert manifest["config"]["run"]["dt"] == 0.005
        assert list(manifest["inputs"]) == [(parts / "start.txt").as_posix()]

    def test_model_file_replaces_the_configured_model(self, runner, workspace):
        (workspace / "pure_death.cfg").write_text("[model]\nfamily = affine\ngamma = 1.0\npmf = [1.0]\n")
        out = workspace / "death"
        result = runner.invoke(cli, ["--out-dir", str(out), "simulate", str(workspace / "simulate.cfg"),
                                     "--model", str(workspace / "pure_death.cfg")])
        assert result.exit_code == 0, result.output
        assert _read(out / MANIFEST_NAME)["config"]["model"]["params"]["pmf"] == [1.0]
        mass = _read(out / "simulation.json")["mass"]
        assert all(later <= earlier for earlier, later in zip(mass, mass[1:]))

    def test_policy_file_without_policy_section(self, runner, workspace):
        result = runner.invoke(cli, ["--out-dir", str(workspace / "out"), "simulate", str(workspace / "simulate.cfg"),
                                     "--policy", str(workspace / "simulate.cfg")])
        assert result.exit_code == EXIT_ERROR
        assert "no [policy] section" in result.output

    def test_simulate_needs_some_configuration(self, runner, workspace):
        result = runner.invoke(cli, ["--out-dir", str(workspace / "out"), "simulate"])
        assert result.exit_code == EXIT_ERROR
        assert "error[config]" in result.output

    def test_value(self, runner, workspace):
        out = workspace / "value"
        result = runner.invoke(cli, ["--out-dir", str(out), "value", str(workspace / "value.cfg")])
        assert result.exit_code == 0, result.output
        assert _read(out / "value.json")["value"] == pytest.approx(0.5, abs=1e-4)

    def test_unknown_suite(self, runner, workspace):
        result = runner.invoke(cli, ["--out-dir", str(workspace / "out"), "suite", "everything"])
        assert result.exit_code == EXIT_ERROR
        assert "error[suite]" in result.output

    def test_quick_suite_is_reproducible(self, runner, workspace):
        texts = []
        for name in ("s1", "s2"):
            out = workspace / name
            result = runner.invoke(cli, ["--seed", "5", "--out-dir", str(out), "suite", "metrics", "--quick"])
            assert result.exit_code == 0, result.output
            texts.append((out / "suite_metrics.json").read_text())
        assert texts[0] == texts[1]
        assert _read(workspace / "s1" / MANIFEST_NAME)["config"] == {"suite": "metrics", "scale": "quick"}

    def test_check_suite(self, runner, workspace):
        out = workspace / "check"
        result = runner.invoke(cli, ["--out-dir", str(out), "check", "--suite", "aux", "--quick"])
        assert result.exit_code == 0, result.output
        assert _read(out / "check_aux.json")["passed"] is True


class TestSuites:
    """Test the suite registry."""

    def test_unknown_names(self):
        with pytest.raises(SuiteError):
            run_suite("nope")
        with pytest.raises(SuiteError):
            run_check_suite("nope")

    def test_ito_instances(self):
        functionals = {name: F for name, _, F, _ in _ito_instances()}
        two = AtomicMeasure.dirac([2.0])
        assert functionals["mass/pure_death"].value(0.0, two) == pytest.approx(1.0)
        assert functionals["first_moment/linear_drift"].value(0.0, two) == pytest.approx(2.0)
        assert functionals["quadratic/ou"].value(0.0, two) == pytest.approx(16.0)

    @pytest.mark.parametrize("name", ["lfd", "hamiltonian", "aux"])
    def test_quick_check_suites_pass(self, name):
        report = run_check_suite(name, seed=7, scale=SuiteScale.QUICK)
        assert report.passed, [c.name for c in report.checks if not c.passed]

    @pytest.mark.slow
    @pytest.mark.parametrize("name", ["metrics", "dynamics", "control", "calculus"])
    def test_quick_suites_pass(self, name):
        report = run_suite(name, seed=7, scale=SuiteScale.QUICK)
        assert report.passed, [c.name for c in report.checks if not c.passed]

    @pytest.mark.slow
    def test_full_suite(self):
        report = run_suite("all", seed=7, scale=SuiteScale.FULL)
        assert report.passed, [c.name for c in report.checks if not c.passed]
