"""
Tests for RunConfig.
"""

import json
import os

import numpy as np
import pytest
from unittest.mock import patch

from cdlab import config as config_module
from cdlab.config import RunConfig
from cdlab.exceptions import ConfigError


def test_defaults_validate():
    """The default configuration is the 32x32 GLSD benchmark."""
    config = RunConfig().validate()
    assert config.mesh == [32, 32]
    assert config.formulation == "glsd"
    assert config.time_step() == pytest.approx(0.015625)
    assert config.num_steps() == 64


def test_instances_do_not_share_defaults():
    """Mutating one instance's lists leaves the class defaults alone."""
    config = RunConfig()
    config.mesh[0] = 8
    assert RunConfig.mesh == [32, 32]
    assert RunConfig().mesh == [32, 32]


def test_presets():
    """Preset names select the mesh and accept overrides."""
    config = RunConfig.preset("block-64", formulation="do")
    assert config.mesh == [64, 64]
    assert config.formulation == "do"
    assert config.time_step() == pytest.approx(0.5 / 64)
    with pytest.raises(ConfigError):
        RunConfig.preset("block-7")


def test_explicit_time_step_clears_cfl():
    """Giving dt switches off the CFL rule."""
    config = RunConfig(dt=0.01).validate()
    assert config.cfl is None
    assert config.time_step() == 0.01
    assert config.num_steps() == 100


def test_per_axis_cfl():
    """dt = CFL min(h) / max |a_i| on anisotropic meshes."""
    config = RunConfig(mesh=[16, 32], velocity=[2.0, 0.5]).validate()
    assert config.time_step() == pytest.approx(0.5 * (1.0 / 32) / 2.0)


def test_validation_collects_all_problems():
    """Every invalid field is reported at once."""
    config = RunConfig(formulation="streamline", kappa=-1.0, mesh=[2, 32], solver="cholesky")
    with pytest.raises(ConfigError) as excinfo:
        config.validate()
    assert len(excinfo.value.problems) == 4


def test_cfl_and_dt_together_rejected():
    """Exactly one of cfl and dt is required."""
    config = RunConfig()
    config.dt = 0.01
    with pytest.raises(ConfigError, match="exactly one"):
        config.validate()


def test_do_constraints():
    """DO needs kappa > 0 and quadratic splines."""
    with pytest.raises(ConfigError, match="DO requires"):
        RunConfig(formulation="do", kappa=0.0).validate()
    with pytest.raises(ConfigError, match="DO requires"):
        RunConfig(formulation="do", degree=1).validate()


def test_unknown_key():
    """Unknown keys are rejected."""
    with pytest.raises(ConfigError, match="viscosity"):
        RunConfig(viscosity=0.1)


def test_load_from_file(tmp_path):
    """A JSON file with a preset key builds on the preset."""
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"preset": "block-16", "formulation": "supgs", "kappa": 0.001}))
    config = RunConfig.load_from_file(str(path)).validate()
    assert config.mesh == [16, 16]
    assert config.formulation == "supgs"
    assert config.kappa == 0.001


def test_load_from_file_errors(tmp_path):
    """Missing files, bad JSON and non-objects raise ConfigError."""
    with pytest.raises(ConfigError):
        RunConfig.load_from_file(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.load_from_file(str(bad))
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        RunConfig.load_from_file(str(listed))


@patch.dict(os.environ, {"CDLAB_OUTPUT_DIR": "/tmp/cdlab-env", "CDLAB_SOLVER": "gmres",
                         "CDLAB_SOLVER_TOLERANCE": "1e-9"})
def test_load_from_env():
    """CDLAB_* variables override the configuration."""
    config = RunConfig().load_from_env()
    assert config.output_dir == "/tmp/cdlab-env"
    assert config.solver == "gmres"
    assert config.solver_tolerance == 1e-9


@patch.dict(os.environ, {"CDLAB_SOLVER_TOLERANCE": "tight"})
def test_load_from_env_bad_number():
    """A non-numeric tolerance is a configuration error."""
    with pytest.raises(ConfigError):
        RunConfig().load_from_env()


def test_shipped_configs():
    """The example configuration files validate."""
    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    for name in sorted(os.listdir(root)):
        RunConfig.load_from_file(os.path.join(root, name)).validate()


def test_to_dict_round_trip():
    """to_dict holds every key and rebuilds an equal configuration."""
    config = RunConfig(formulation="vmsd", kappa=0.002)
    values = config.to_dict()
    assert set(values) == set(RunConfig.keys())
    assert RunConfig(**values).to_dict() == values


def test_paper_presets_and_aliases():
    """paper-* presets and their block-* aliases select the same meshes."""
    for m in (16, 32, 64, 128):
        assert RunConfig.preset(f"paper-{m}").mesh == [m, m]
        assert RunConfig.preset(f"block-{m}").to_dict() == RunConfig.preset(f"paper-{m}").to_dict()


@pytest.mark.parametrize("key, value", [
    ("kappa", None), ("end_time", "1"), ("cfl", "0.5"), ("degree", "2"), ("r_switch", None),
    ("c_inverse", "36"), ("solver_tolerance", None), ("snapshot_times", [0.0, "1"]),
    ("velocity", [1.0, None]), ("domain", ["1", 1.0]), ("forcing", None), ("output_every", 1.5),
    ("do_epsilon", None), ("alpha", {"alpha_f": "0.5", "alpha_m": 0.5, "gamma": 0.5}), ("alpha_f", "0.75"),
])
def test_wrong_types_are_listed(key, value):
    """Values of the wrong type are reported as problems instead of raising TypeError."""
    config = RunConfig(**{key: value})
    with pytest.raises(ConfigError) as excinfo:
        config.validate()
    assert len(excinfo.value.problems) == 1


def test_wrong_types_collected_with_other_problems(tmp_path):
    """A file with several bad values lists all of them."""
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"kappa": None, "end_time": "1", "solver": "cholesky"}))
    with pytest.raises(ConfigError) as excinfo:
        RunConfig.load_from_file(str(path)).validate()
    assert len(excinfo.value.problems) == 3


def test_kappa_none_with_do():
    """A missing kappa for DO is a type problem, not a crash."""
    with pytest.raises(ConfigError, match="kappa must be a number"):
        RunConfig(formulation="do", kappa=None).validate()


def test_numpy_integers_accepted():
    """Mesh sizes and cadences may be numpy integers."""
    config = RunConfig(mesh=[np.int64(16), np.int32(16)], output_every=np.int64(2), degree=np.int64(2))
    config.validate()
    assert config.time_step() == pytest.approx(0.5 / 16)


def test_bool_is_not_a_number():
    """Booleans are not accepted as numbers."""
    with pytest.raises(ConfigError, match="kappa"):
        RunConfig(kappa=True).validate()


def test_initial_rate_option():
    """initial_rate accepts 'consistent' and 'rest' only."""
    assert RunConfig().initial_rate == "consistent"
    RunConfig(initial_rate="rest").validate()
    with pytest.raises(ConfigError, match="initial_rate"):
        RunConfig(initial_rate="zero").validate()


def test_num_steps_warns_on_uneven_end_time():
    """A final time that is not a multiple of dt is rounded with a warning."""
    config = RunConfig(dt=0.3, end_time=1.0).validate()
    with patch.object(config_module.logger, "warning") as warning:
        assert config.num_steps() == 3
    warning.assert_called_once()
    assert "t = 0.9" in warning.call_args[0][0]


def test_num_steps_silent_on_even_end_time():
    """No warning when end_time is a multiple of dt."""
    with patch.object(config_module.logger, "warning") as warning:
        assert RunConfig().num_steps() == 64
    warning.assert_not_called()
