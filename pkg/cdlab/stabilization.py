"""
Stabilization parameters.

    tau_conv^-2 = a . G a
    tau_diff^-2 = C_I kappa^2 G : G
    tau_time^-2 = (alpha_m / (alpha_f gamma dt))^2

The static parameter combines all three components, the dynamic one omits the temporal
part. ``r_switch`` selects the root-sum-square (2) or the plain harmonic sum (1).
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from cdlab.time_integration import AlphaParams

logger = logging.getLogger(__name__)

DEFAULT_INVERSE_CONSTANTS = {1: 12.0, 2: 36.0}


class StabilizationParams:
    """Physics, inverse-estimate constant and time-integration data entering tau."""

    def __init__(self, velocity: Sequence[float], kappa: float, alpha: AlphaParams,
                 c_inverse: Optional[float] = None, degree: int = 2, r_switch: int = 2):
        if kappa < 0.0:
            raise ValueError(f"Diffusivity must be non-negative, got {kappa}")
        if r_switch not in (1, 2):
            raise ValueError(f"r_switch must be 1 or 2, got {r_switch}")
        self.velocity = np.asarray(velocity, dtype=float)
        self.kappa = float(kappa)
        self.alpha = alpha
        self.c_inverse = float(c_inverse) if c_inverse is not None else DEFAULT_INVERSE_CONSTANTS[degree]
        if self.c_inverse <= 0.0:
            raise ValueError(f"Inverse-estimate constant must be positive, got {self.c_inverse}")
        self.r_switch = r_switch


def tau_time_inverse(alpha: AlphaParams) -> float:
    """tau_time^-1 = alpha_m / (alpha_f gamma dt); zero for an infinite step."""
    if np.isinf(alpha.dt):
        return 0.0
    if alpha.alpha_f == 0.0:
        raise ValueError("alpha_f = 0 leaves tau_time undefined")
    return alpha.alpha_m / (alpha.alpha_f * alpha.gamma * alpha.dt)


def tau_components(params: StabilizationParams, G: np.ndarray) -> Tuple[float, float, float]:
    """
    Squared reciprocals of the convective, diffusive and temporal parts.

    Args:
        params (StabilizationParams): Stabilization data.
        G (np.ndarray): 2x2 metric tensor.

    Returns:
        Tuple[float, float, float]: (tau_conv^-2, tau_diff^-2, tau_time^-2).
    """
    a = params.velocity
    conv = float(a @ G @ a)
    diff = params.c_inverse * params.kappa ** 2 * float(np.sum(G * G))
    time = tau_time_inverse(params.alpha) ** 2
    return conv, diff, time


def _combine(inverse_squares, r_switch: int) -> float:
    if all(v == 0.0 for v in inverse_squares):
        raise ValueError("degenerate stabilization: all tau components vanish")
    if r_switch == 2:
        return float(sum(inverse_squares)) ** -0.5
    return 1.0 / float(sum(np.sqrt(v) for v in inverse_squares))


def tau_static(params: StabilizationParams, G: np.ndarray) -> float:
    return _combine(tau_components(params, G), params.r_switch)


def tau_dyn(params: StabilizationParams, G: np.ndarray) -> float:
    conv, diff, _ = tau_components(params, G)
    return _combine((conv, diff), params.r_switch)


def tau_time(params: StabilizationParams) -> float:
    inv = tau_time_inverse(params.alpha)
    return np.inf if inv == 0.0 else 1.0 / inv


def tau_eff(params: StabilizationParams, G: np.ndarray) -> float:
    """Sensitivity of the condensed dynamic small-scale: (tau_time^-1 + tau_dyn^-1)^-1."""
    return 1.0 / (tau_time_inverse(params.alpha) + 1.0 / tau_dyn(params, G))


def tau_summary(params: StabilizationParams, G: np.ndarray) -> dict:
    """All tau values at one element, for run metadata."""
    conv, diff, time = tau_components(params, G)
    summary = {"tau_conv_inv2": conv, "tau_diff_inv2": diff, "tau_time_inv2": time,
               "c_inverse": params.c_inverse, "r_switch": params.r_switch}
    try:
        summary["tau_static"] = tau_static(params, G)
        summary["tau_dyn"] = tau_dyn(params, G)
        summary["tau_eff"] = tau_eff(params, G)
    except ValueError as e:
        logger.warning(f"Stabilization summary incomplete: {e}")
    return summary


def inverse_estimate_constant(grid, element=0) -> float:
    """
    Largest generalized eigenvalue of (Lap N_a, Lap N_b)_e x = lambda G:G (N_a, N_b)_e x.

    The result bounds ||Lap w||_e^2 <= C_I G:G ||w||_e^2 over the local polynomial space.
    It is independent of the mesh size on a uniform mesh.
    """
    weights, values, _, laps = grid.element_tables(element)
    G = grid.metric_tensor(element)
    stiff = laps.T @ (weights[:, None] * laps)
    mass = values.T @ (weights[:, None] * values)
    eigenvalues = scipy.linalg.eigh(stiff, mass, eigvals_only=True)
    return float(max(eigenvalues.max(), 0.0) / np.sum(G * G))
