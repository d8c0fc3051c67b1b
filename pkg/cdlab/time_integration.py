"""
Generalized-alpha time integration.

Values are evaluated at level n+alpha_f, rates at level n+alpha_m:

    phi_{n+alpha_f}     = phi_n + alpha_f (phi_{n+1} - phi_n)
    phidot_{n+alpha_m}  = phidot_n + alpha_m (phidot_{n+1} - phidot_n)
    phi_{n+1}           = phi_n + dt ((1 - gamma) phidot_n + gamma phidot_{n+1})

Every formulation in this package is linear, so a step needs one solve for phi_{n+1};
all other quantities follow from the relations above.
"""

import logging
from typing import Callable, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

PRESETS = ("crank-nicolson", "backward-euler", "energy-decaying")


class AlphaParams:
    """Generalized-alpha parameters and time step."""

    def __init__(self, alpha_f: float, alpha_m: float, gamma: float, dt: float):
        problems = []
        if not 0.0 < gamma <= 1.0:
            problems.append(f"gamma must lie in (0, 1], got {gamma}")
        if not 0.0 < alpha_m <= 1.0:
            problems.append(f"alpha_m must lie in (0, 1], got {alpha_m}")
        if not 0.0 <= alpha_f <= 1.0:
            problems.append(f"alpha_f must lie in [0, 1], got {alpha_f}")
        if not dt > 0.0:
            problems.append(f"time step must be positive, got {dt}")
        if problems:
            raise ValueError("; ".join(problems))
        self.alpha_f = float(alpha_f)
        self.alpha_m = float(alpha_m)
        self.gamma = float(gamma)
        self.dt = float(dt)

    @property
    def second_order(self) -> bool:
        return abs(self.gamma - (0.5 + self.alpha_m - self.alpha_f)) <= 1e-14

    @property
    def energy_decaying(self) -> bool:
        return abs(self.alpha_m - self.gamma) <= 1e-14 and self.alpha_f >= 0.5

    @property
    def unconditionally_stable(self) -> bool:
        return self.alpha_m >= self.alpha_f >= 0.5

    @property
    def rate_coefficient(self) -> float:
        """d phidot_{n+alpha_m} / d phi_{n+1} = alpha_m / (gamma dt)."""
        return self.alpha_m / (self.gamma * self.dt)

    def to_dict(self) -> dict:
        return {
            "alpha_f": self.alpha_f,
            "alpha_m": self.alpha_m,
            "gamma": self.gamma,
            "dt": self.dt,
            "second_order": self.second_order,
            "energy_decaying": self.energy_decaying,
            "unconditionally_stable": self.unconditionally_stable,
        }

    def __repr__(self) -> str:
        return (f"AlphaParams(alpha_f={self.alpha_f}, alpha_m={self.alpha_m}, "
                f"gamma={self.gamma}, dt={self.dt})")


def make_alpha(spec: Union[str, dict, AlphaParams], dt: float, alpha_f: Optional[float] = None) -> AlphaParams:
    """
    Build a parameter set from a preset name or raw values.

    Args:
        spec: ``"crank-nicolson"``, ``"backward-euler"``, ``"energy-decaying"`` or a dict
            with ``alpha_f``, ``alpha_m`` and ``gamma``.
        dt (float): Time step.
        alpha_f (float, optional): alpha_f of the energy-decaying family (default 1/2).

    Returns:
        AlphaParams: The validated parameters.
    """
    if isinstance(spec, AlphaParams):
        return AlphaParams(spec.alpha_f, spec.alpha_m, spec.gamma, dt)
    if isinstance(spec, dict):
        missing = [k for k in ("alpha_f", "alpha_m", "gamma") if k not in spec]
        if missing:
            raise ValueError(f"Missing generalized-alpha parameters: {', '.join(missing)}")
        return AlphaParams(spec["alpha_f"], spec["alpha_m"], spec["gamma"], dt)
    if spec == "crank-nicolson":
        return AlphaParams(0.5, 0.5, 0.5, dt)
    if spec == "backward-euler":
        return AlphaParams(1.0, 1.0, 1.0, dt)
    if spec == "energy-decaying":
        # alpha_m = gamma = 1/2 keeps the family; alpha_f > 1/2 adds numerical dissipation
        return AlphaParams(0.5 if alpha_f is None else alpha_f, 0.5, 0.5, dt)
    raise ValueError(f"Unknown generalized-alpha preset '{spec}'; expected one of {PRESETS}")


class StepState:
    """Large-scale coefficients and rates at one time level."""

    def __init__(self, phi: np.ndarray, phi_dot: np.ndarray, t: float = 0.0,
                 sigma: Optional[np.ndarray] = None):
        self.phi = np.asarray(phi, dtype=float)
        self.phi_dot = np.asarray(phi_dot, dtype=float)
        if self.phi.shape != self.phi_dot.shape:
            raise ValueError("Coefficient and rate vectors must have the same shape")
        self.t = float(t)
        self.sigma = sigma

    def copy(self) -> "StepState":
        sigma = None if self.sigma is None else self.sigma.copy()
        return StepState(self.phi.copy(), self.phi_dot.copy(), self.t, sigma)


class GeneralizedAlpha:
    """The relations between step levels for a fixed parameter set."""

    def __init__(self, alpha: AlphaParams):
        self.alpha = alpha

    def predictor(self, state: StepState):
        """Same-phi predictor: phi_{n+1} = phi_n and the matching rate."""
        g = self.alpha.gamma
        return state.phi.copy(), (g - 1.0) / g * state.phi_dot

    def rate_intercept(self, state: StepState) -> np.ndarray:
        """Part of phidot_{n+alpha_m} independent of phi_{n+1}."""
        a = self.alpha
        c_m = a.rate_coefficient
        return ((1.0 - a.alpha_m) * state.phi_dot - c_m * state.phi
                - a.alpha_m * (1.0 - a.gamma) / a.gamma * state.phi_dot)

    def rate_at_alpha_m(self, phi_new: np.ndarray, state: StepState) -> np.ndarray:
        return self.alpha.rate_coefficient * phi_new + self.rate_intercept(state)

    def rate_from_value(self, phi_new: np.ndarray, state: StepState) -> np.ndarray:
        a = self.alpha
        return (phi_new - state.phi - a.dt * (1.0 - a.gamma) * state.phi_dot) / (a.gamma * a.dt)

    def advance(self, state: StepState, solve: Callable[[StepState, np.ndarray], np.ndarray]) -> StepState:
        """
        Take one step.

        Args:
            state (StepState): State at level n.
            solve (Callable): Returns phi_{n+1} given the state and the predicted phi_{n+1}.

        Returns:
            StepState: State at level n+1.
        """
        phi_pred, _ = self.predictor(state)
        phi_new = np.asarray(solve(state, phi_pred), dtype=float)
        rate_new = self.rate_from_value(phi_new, state)
        return StepState(phi_new, rate_new, state.t + self.alpha.dt)
