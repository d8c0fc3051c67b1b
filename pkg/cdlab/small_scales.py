"""
Quadrature-point small-scale field.

Dynamic small-scales integrate

    d/dt phi' + tau^-1 phi' = -R

with the same generalized-alpha rule as the large scales. For a linear forcing the
update has a closed form, so phi' can be eliminated from the global system through an
affine map in the large-scale residual R at level n+alpha.
"""

import logging
from typing import Optional

import numpy as np

from cdlab.time_integration import AlphaParams

logger = logging.getLogger(__name__)


class Condensation:
    """
    Affine dependence of the small-scales on the residual at level n+alpha.

        phi'_{n+alpha_f}    = value_intercept - slope_value * R
        phidot'_{n+alpha_m} = rate_intercept  - slope_rate  * R

    ``slope_value`` is tau_eff and ``slope_rate`` is tau_eff / tau_time.
    """

    def __init__(self, slope_value, slope_rate, value_intercept, rate_intercept, denominator, history):
        self.slope_value = slope_value
        self.slope_rate = slope_rate
        self.value_intercept = value_intercept
        self.rate_intercept = rate_intercept
        self.denominator = denominator
        self.history = history

    def value(self, residual: np.ndarray) -> np.ndarray:
        return self.value_intercept - self.slope_value * residual

    def rate(self, residual: np.ndarray) -> np.ndarray:
        return self.rate_intercept - self.slope_rate * residual

    def new_rate(self, residual: np.ndarray) -> np.ndarray:
        """phidot'_{n+1} solving the discrete small-scale equation."""
        return (-residual - self.history) / self.denominator


class SmallScaleField:
    """Per-quadrature-point small-scale values and rates."""

    def __init__(self, num_points: int, dynamic: bool = True,
                 value: Optional[np.ndarray] = None, rate: Optional[np.ndarray] = None):
        self.num_points = num_points
        self.dynamic = dynamic
        self.value = np.zeros(num_points) if value is None else np.asarray(value, dtype=float)
        self.rate = np.zeros(num_points) if rate is None else np.asarray(rate, dtype=float)
        if self.value.shape != (num_points,) or self.rate.shape != (num_points,):
            raise ValueError(f"Small-scale arrays must have length {num_points}")

    @classmethod
    def static(cls, value: np.ndarray) -> "SmallScaleField":
        """Field holding quasi-static values (no rate history)."""
        value = np.asarray(value, dtype=float)
        return cls(len(value), dynamic=False, value=value)

    def copy(self) -> "SmallScaleField":
        return SmallScaleField(self.num_points, self.dynamic, self.value.copy(), self.rate.copy())

    def condensation_coefficients(self, alpha: AlphaParams, tau_dyn) -> Condensation:
        """
        Closed-form affine maps of the next step.

        Args:
            alpha (AlphaParams): Generalized-alpha parameters.
            tau_dyn: Dynamic stabilization parameter (scalar or per point).

        Returns:
            Condensation: Slopes and intercepts in terms of the residual at n+alpha.
        """
        if not self.dynamic:
            raise ValueError("Condensation applies to dynamic small-scales only")
        if np.any(np.asarray(tau_dyn) <= 0.0):
            raise ValueError("tau_dyn must be positive")
        a_f, a_m, g, dt = alpha.alpha_f, alpha.alpha_m, alpha.gamma, alpha.dt
        if min(a_f, dt) <= 0.0:
            raise ValueError("Condensation needs alpha_f > 0 and dt > 0")
        inv_tau = 1.0 / np.asarray(tau_dyn, dtype=float)
        denominator = a_m + a_f * g * dt * inv_tau
        history = ((1.0 - a_m) * self.rate + inv_tau * self.value
                   + inv_tau * a_f * dt * (1.0 - g) * self.rate)
        new_rate_intercept = -history / denominator

        slope_value = a_f * g * dt / denominator
        slope_rate = a_m / denominator
        value_intercept = self.value + a_f * dt * (1.0 - g) * self.rate + a_f * dt * g * new_rate_intercept
        rate_intercept = (1.0 - a_m) * self.rate + a_m * new_rate_intercept
        return Condensation(slope_value, slope_rate, value_intercept, rate_intercept, denominator, history)

    def commit_step(self, residual: np.ndarray, alpha: AlphaParams, tau_dyn,
                    condensation: Optional[Condensation] = None) -> "SmallScaleField":
        """
        Advance the field with the converged residual at level n+alpha.

        Returns:
            SmallScaleField: The field at level n+1; ``self`` is left untouched.
        """
        residual = np.asarray(residual, dtype=float)
        if residual.shape != (self.num_points,):
            raise ValueError(f"Expected {self.num_points} residual values, got {residual.shape}")
        condensation = condensation or self.condensation_coefficients(alpha, tau_dyn)
        rate_new = condensation.new_rate(residual)
        value_new = self.value + alpha.dt * ((1.0 - alpha.gamma) * self.rate + alpha.gamma * rate_new)
        return SmallScaleField(self.num_points, True, value_new, rate_new)


def static_evaluate(residual, tau_stat):
    """Quasi-static small-scale phi' = -tau_stat R."""
    return -tau_stat * np.asarray(residual, dtype=float)
