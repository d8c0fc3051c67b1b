"""
Tests for the cdlab command-line interface.
"""

import json

from unittest.mock import patch

from cdlab.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, EXIT_SOLVER, build_parser, main
from cdlab.exceptions import SolverError
from cdlab.verify import CheckResult


def test_run_preset(tmp_path, capsys):
    """A preset run writes its outputs and exits 0."""
    code = main(["run", "--preset", "paper-16", "--formulation", "supgs", "--end-time", "0.0625",
                 "--output-dir", str(tmp_path), "--dump-small-scales"])
    assert code == EXIT_OK
    assert "supgs: 2 steps" in capsys.readouterr().out
    assert (tmp_path / "ledger.csv").exists()
    assert (tmp_path / "small_scales.csv").exists()


def test_run_from_file(tmp_path):
    """A configuration file can be overridden from the command line."""
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"mesh": [8, 8], "formulation": "galerkin", "end_time": 0.125}))
    code = main(["run", str(path), "--kappa", "0", "--output-dir", str(tmp_path / "out")])
    assert code == EXIT_OK
    meta = json.loads((tmp_path / "out" / "meta.json").read_text())
    assert meta["config"]["kappa"] == 0.0


def test_run_alpha_f_selects_energy_decaying(tmp_path):
    """--alpha-f switches to the energy-decaying family."""
    code = main(["run", "--preset", "block-16", "--alpha-f", "0.75", "--end-time", "0.0625",
                 "--output-dir", str(tmp_path)])
    assert code == EXIT_OK
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["alpha"]["alpha_f"] == 0.75 and meta["alpha"]["alpha_m"] == 0.5


def test_missing_configuration(capsys):
    """Without a file or preset the exit code is 2."""
    assert main(["run"]) == EXIT_CONFIG
    assert "required" in capsys.readouterr().err


def test_invalid_configuration(tmp_path):
    """Invalid values exit with 2."""
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"kappa": -1.0}))
    assert main(["run", str(path)]) == EXIT_CONFIG
    assert main(["run", "--preset", "block-16", "--formulation", "do", "--kappa", "0"]) == EXIT_CONFIG


@patch("cdlab.core.run", side_effect=SolverError("singular", 1.0, step=3))
def test_solver_failure(mock_run, capsys):
    """Solver failures exit with 3."""
    assert main(["run", "--preset", "paper-16"]) == EXIT_SOLVER
    assert "step 3" in capsys.readouterr().err
    mock_run.assert_called_once()


@patch("cdlab.verify.run_suite", return_value=[CheckResult("energy_identity", True, "ok"),
                                               CheckResult("transport", False, "moved")])
def test_verify_failure_exit(mock_suite, capsys):
    """A failing property gives exit code 1."""
    assert main(["verify", "--mesh", "16", "--skip-sweep"]) == EXIT_FAILED
    mock_suite.assert_called_once_with(16, include_sweep=False, reference=False)
    assert "1/2 checks passed" in capsys.readouterr().out


@patch("cdlab.verify.run_suite", return_value=[CheckResult("energy_identity", True, "ok")])
def test_verify_success_exit(mock_suite):
    """All properties passing gives exit code 0."""
    assert main(["verify"]) == EXIT_OK


@patch("cdlab.core.sweep", return_value={"glsd": {"distances": [2e-3, 5e-4], "ordered": True, "curves": {}}})
def test_sweep_command(mock_sweep, capsys):
    """The sweep command forwards formulations and meshes."""
    assert main(["sweep", "--formulations", "glsd", "--meshes", "16", "32", "--no-reference"]) == EXIT_OK
    mock_sweep.assert_called_once_with(["glsd"], [16, 32], reference=False, output_dir="sweep")
    assert "glsd: sup distances" in capsys.readouterr().out


def test_no_command():
    """Without a subcommand the help is printed and the exit code is 1."""
    assert main([]) == EXIT_FAILED


def test_parser_choices():
    """Formulation names are restricted to the known kinds."""
    args = build_parser().parse_args(["run", "--formulation", "supgd-inconsistent"])
    assert args.formulation == "supgd-inconsistent"


@patch("cdlab.core.sweep", return_value={"supgs": {"distances": [2e-3, 5e-4], "ordered": True, "curves": {}}})
def test_sweep_preset_family(mock_sweep):
    """sweep --preset paper runs the 16/32/64 family plus the reference."""
    assert main(["sweep", "--preset", "paper", "--formulations", "supgs"]) == EXIT_OK
    mock_sweep.assert_called_once_with(["supgs"], [16, 32, 64], reference=True, output_dir="sweep")


def test_run_preset_names():
    """paper-* presets and block-* aliases are accepted by run."""
    parser = build_parser()
    for name in ("paper-16", "paper-32", "paper-64", "block-32"):
        assert parser.parse_args(["run", "--preset", name]).preset == name


def test_run_from_rest(tmp_path):
    """--initial-rate rest is stored in the run metadata."""
    code = main(["run", "--preset", "paper-16", "--formulation", "supgs", "--initial-rate", "rest",
                 "--end-time", "0.0625", "--output-dir", str(tmp_path)])
    assert code == EXIT_OK
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["config"]["initial_rate"] == "rest"


def test_wrongly_typed_configuration(tmp_path, capsys):
    """A null value in the file exits with 2 and names the field."""
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"kappa": None, "end_time": "1"}))
    assert main(["run", str(path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "kappa" in err and "end_time" in err
