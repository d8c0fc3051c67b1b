"""
Configuration of a cdlab run.
"""

import json
import logging
import numbers
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

from cdlab.exceptions import ConfigError
from cdlab.formulations import INITIAL_RATES, FormulationKind
from cdlab.model_problem import (MODEL_CFL, MODEL_END_TIME, MODEL_KAPPA, MODEL_SNAPSHOT_TIMES,
                                 MODEL_VELOCITY, make_initial_condition)
from cdlab.time_integration import PRESETS

logger = logging.getLogger(__name__)

PRESET_MESHES = {"paper-16": 16, "paper-32": 32, "paper-64": 64, "paper-128": 128,
                 "block-16": 16, "block-32": 32, "block-64": 64, "block-128": 128}
SWEEP_PRESETS = {"paper": (16, 32, 64), "block": (16, 32, 64)}


class RunConfig:
    """Configuration of one run."""

    # Default values
    formulation: str = "glsd"
    mesh: List[int] = [32, 32]
    degree: int = 2
    domain: List[float] = [1.0, 1.0]
    velocity: List[float] = list(MODEL_VELOCITY)
    kappa: float = MODEL_KAPPA
    forcing: float = 0.0
    cfl: Optional[float] = MODEL_CFL
    dt: Optional[float] = None
    end_time: float = MODEL_END_TIME
    alpha: Any = "crank-nicolson"
    alpha_f: Optional[float] = None
    r_switch: int = 2
    c_inverse: Optional[float] = None
    initial_condition: Dict[str, Any] = {"type": "block", "n": 2, "h_c": 1.0 / 16.0}
    boundary: str = "periodic"
    output_dir: Optional[str] = None
    output_every: int = 1
    snapshot_times: List[float] = list(MODEL_SNAPSHOT_TIMES)
    solver: str = "direct"
    solver_tolerance: float = 1e-12
    do_regularization: str = "pin"
    do_epsilon: float = 1e-10
    initial_rate: str = "consistent"
    log_level: str = "INFO"

    def __init__(self, **overrides):
        # class-level lists and dicts must not be shared between instances
        for key in self.keys():
            value = getattr(type(self), key)
            setattr(self, key, json.loads(json.dumps(value)))
        self.update(overrides)

    @classmethod
    def keys(cls) -> List[str]:
        return [k for k, v in vars(RunConfig).items()
                if not k.startswith("_") and not callable(v) and not isinstance(v, (classmethod, staticmethod))]

    def update(self, values: Dict[str, Any]) -> "RunConfig":
        unknown = [k for k in values if k not in self.keys()]
        if unknown:
            raise ConfigError([f"Unknown configuration key '{k}'" for k in unknown])
        for key, value in values.items():
            setattr(self, key, value)
        if "dt" in values and values["dt"] is not None and "cfl" not in values:
            self.cfl = None
        return self

    @classmethod
    def preset(cls, name: str, **overrides) -> "RunConfig":
        """The benchmark configuration on one of the preset meshes."""
        if name not in PRESET_MESHES:
            raise ConfigError([f"Unknown preset '{name}'; expected one of {', '.join(PRESET_MESHES)}"])
        m = PRESET_MESHES[name]
        config = cls(mesh=[m, m])
        config.update(overrides)
        return config

    def load_from_env(self) -> "RunConfig":
        """Apply CDLAB_* environment overrides."""
        if os.environ.get("CDLAB_OUTPUT_DIR"):
            self.output_dir = os.environ.get("CDLAB_OUTPUT_DIR")
        if os.environ.get("CDLAB_SOLVER"):
            self.solver = os.environ.get("CDLAB_SOLVER")
        if os.environ.get("CDLAB_SOLVER_TOLERANCE"):
            try:
                self.solver_tolerance = float(os.environ.get("CDLAB_SOLVER_TOLERANCE"))
            except ValueError:
                raise ConfigError([f"CDLAB_SOLVER_TOLERANCE is not a number: "
                                   f"{os.environ.get('CDLAB_SOLVER_TOLERANCE')}"])
        if os.environ.get("CDLAB_LOG_LEVEL"):
            self.log_level = os.environ.get("CDLAB_LOG_LEVEL")
        return self

    @classmethod
    def load_from_file(cls, config_path: str) -> "RunConfig":
        """
        Load a configuration file.

        Args:
            config_path (str): Path to a JSON file. A ``preset`` key selects the base preset.

        Returns:
            RunConfig: The configuration (not yet validated).
        """
        path = Path(config_path)
        if not path.exists():
            raise ConfigError([f"Configuration file not found: {config_path}"])
        try:
            with open(path, "r") as f:
                values = json.load(f)
        except (json.JSONDecodeError, IOError) as e:
            raise ConfigError([f"Could not read {config_path}: {e}"])
        if not isinstance(values, dict):
            raise ConfigError([f"{config_path} must contain a JSON object"])

        preset = values.pop("preset", None)
        config = cls.preset(preset) if preset else cls()
        return config.update(values)

    def validate(self) -> "RunConfig":
        """Check every field; raises ConfigError listing all problems."""
        problems = []
        try:
            FormulationKind.parse(self.formulation)
        except ValueError as e:
            problems.append(str(e))
        if not (_is_pair(self.mesh) and all(_is_integer(m) and m >= 4 for m in self.mesh)):
            problems.append(f"mesh must be two integers >= 4, got {self.mesh}")
        if not (_is_integer(self.degree) and self.degree in (1, 2)):
            problems.append(f"degree must be 1 or 2, got {self.degree!r}")
        if not (_is_pair(self.domain) and all(_is_number(d) and d > 0 for d in self.domain)):
            problems.append(f"domain must be two positive lengths, got {self.domain}")
        velocity_ok = _is_pair(self.velocity) and all(_is_number(v) for v in self.velocity)
        if not velocity_ok:
            problems.append(f"velocity must be two numbers, got {self.velocity}")
        if not _is_number(self.kappa):
            problems.append(f"kappa must be a number, got {self.kappa!r}")
        elif self.kappa < 0:
            problems.append(f"kappa must be non-negative, got {self.kappa}")
        if not _is_number(self.forcing):
            problems.append(f"forcing must be a number, got {self.forcing!r}")
        if (self.cfl is None) == (self.dt is None):
            problems.append("exactly one of cfl and dt must be given")
        if self.cfl is not None:
            if not _is_number(self.cfl):
                problems.append(f"cfl must be a number, got {self.cfl!r}")
            elif self.cfl <= 0:
                problems.append(f"cfl must be positive, got {self.cfl}")
            elif velocity_ok and max(abs(v) for v in self.velocity) == 0:
                problems.append("cfl needs a non-zero velocity; give dt instead")
        if self.dt is not None:
            if not _is_number(self.dt):
                problems.append(f"dt must be a number, got {self.dt!r}")
            elif self.dt <= 0:
                problems.append(f"dt must be positive, got {self.dt}")
        if not (_is_number(self.end_time) and self.end_time > 0):
            problems.append(f"end_time must be a positive number, got {self.end_time!r}")
        if isinstance(self.alpha, str):
            if self.alpha not in PRESETS:
                problems.append(f"alpha preset must be one of {PRESETS}, got '{self.alpha}'")
        elif isinstance(self.alpha, dict):
            missing = [k for k in ("alpha_f", "alpha_m", "gamma") if k not in self.alpha]
            if missing:
                problems.append(f"alpha is missing {', '.join(missing)}")
            wrong = [k for k in ("alpha_f", "alpha_m", "gamma") if k in self.alpha and not _is_number(self.alpha[k])]
            if wrong:
                problems.append(f"alpha values must be numbers: {', '.join(wrong)}")
        else:
            problems.append(f"alpha must be a preset name or an object, got {self.alpha!r}")
        if self.alpha_f is not None and not _is_number(self.alpha_f):
            problems.append(f"alpha_f must be a number, got {self.alpha_f!r}")
        if not (_is_integer(self.r_switch) and self.r_switch in (1, 2)):
            problems.append(f"r_switch must be 1 or 2, got {self.r_switch!r}")
        if self.c_inverse is not None and not (_is_number(self.c_inverse) and self.c_inverse > 0):
            problems.append(f"c_inverse must be a positive number, got {self.c_inverse!r}")
        try:
            make_initial_condition(self.initial_condition)
        except (ValueError, TypeError, AttributeError) as e:
            problems.append(f"initial_condition: {e}")
        if self.boundary not in ("periodic", "dirichlet"):
            problems.append(f"boundary must be 'periodic' or 'dirichlet', got '{self.boundary}'")
        if not (_is_integer(self.output_every) and self.output_every >= 1):
            problems.append(f"output_every must be a positive integer, got {self.output_every!r}")
        if not (isinstance(self.snapshot_times, (list, tuple)) and all(_is_number(t) for t in self.snapshot_times)):
            problems.append(f"snapshot_times must be a list of numbers, got {self.snapshot_times!r}")
        elif any(t < 0 for t in self.snapshot_times):
            problems.append("snapshot_times must be non-negative")
        if self.solver not in ("direct", "gmres"):
            problems.append(f"solver must be 'direct' or 'gmres', got '{self.solver}'")
        if not (_is_number(self.solver_tolerance) and self.solver_tolerance > 0):
            problems.append(f"solver_tolerance must be a positive number, got {self.solver_tolerance!r}")
        if self.do_regularization not in ("pin", "tikhonov"):
            problems.append(f"do_regularization must be 'pin' or 'tikhonov', got '{self.do_regularization}'")
        if not (_is_number(self.do_epsilon) and self.do_epsilon > 0):
            problems.append(f"do_epsilon must be a positive number, got {self.do_epsilon!r}")
        if self.initial_rate not in INITIAL_RATES:
            problems.append(f"initial_rate must be one of {INITIAL_RATES}, got '{self.initial_rate}'")
        if self.formulation == FormulationKind.DYNAMIC_ORTHOGONAL.value:
            if _is_number(self.kappa) and self.kappa <= 0:
                problems.append("DO requires positive diffusivity")
            if _is_integer(self.degree) and self.degree < 2:
                problems.append("DO requires degree 2")
        if problems:
            raise ConfigError(problems)
        return self

    def time_step(self) -> float:
        """dt, either given or from the per-axis CFL: dt = CFL min(h) / max(|a_x|, |a_y|)."""
        if self.dt is not None:
            return float(self.dt)
        h = min(self.domain[0] / self.mesh[0], self.domain[1] / self.mesh[1])
        return self.cfl * h / max(abs(self.velocity[0]), abs(self.velocity[1]))

    def num_steps(self) -> int:
        """Number of steps to end_time; warns when end_time is not a multiple of dt."""
        dt = self.time_step()
        ratio = self.end_time / dt
        steps = max(1, int(round(ratio)))
        if abs(ratio - steps) > 1e-9 * max(1.0, ratio):
            logger.warning(f"end_time {self.end_time} is not a multiple of dt {dt:.6g}; "
                           f"the run stops at t = {steps * dt:.6g} after {steps} steps")
        return steps

    def to_dict(self) -> Dict[str, Any]:
        return {key: getattr(self, key) for key in self.keys()}


def _is_number(value) -> bool:
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


def _is_integer(value) -> bool:
    return isinstance(value, numbers.Integral) and not isinstance(value, bool)


def _is_pair(value) -> bool:
    return isinstance(value, (list, tuple)) and len(value) == 2
