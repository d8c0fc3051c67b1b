"""
Energy bookkeeping of a run.

For a step n -> n+1 with discrete rates du = (u_{n+1} - u_n) / dt, generalized-alpha with
alpha_m = gamma gives for any field u

    E(u_{n+1}) - E(u_n) + dt^2 (alpha_f - 1/2) ||du||^2 = dt (u_{n+alpha_f}, du)

so testing the formulation with its own solution yields exact discrete energy statements.
Positive dissipation values remove energy.
"""

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from cdlab.formulations import Formulation, StepResult
from cdlab.small_scales import SmallScaleField
from cdlab.time_integration import AlphaParams, StepState

logger = logging.getLogger(__name__)

LEDGER_COLUMNS = [
    "t",
    "energy_large",
    "energy_small",
    "energy_cross",
    "energy_total",
    "physical_dissipation",
    "tau_dissipation",
    "small_scale_dissipation",
    "large_scale_dissipation",
    "orthogonality",
    "orthogonality_scale",
    "temporal_large",
    "temporal_total",
    "exchange",
    "forcing_large",
    "forcing_small",
    "numerical_dissipation",
    "unwanted",
    "balance_residual",
    "balance_residual_large",
    "mass_large",
    "mass_small",
    "min_local_dissipation",
    "min_local_dissipation_large",
    "constraint_residual",
    "solve_residual",
]


class LocalDissipationField:
    """Per-element energy terms of one step, in flat element order."""

    FIELDS = ("small_scale_dissipation", "large_scale_dissipation", "tau_dissipation",
              "orthogonality", "temporal_large", "temporal_total")

    def __init__(self, shape: Tuple[int, int], t: float, **fields):
        self.shape = shape
        self.t = t
        missing = [name for name in self.FIELDS if name not in fields]
        if missing:
            raise ValueError(f"Missing local fields: {', '.join(missing)}")
        self.fields: Dict[str, np.ndarray] = {k: np.asarray(v, dtype=float) for k, v in fields.items()}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.fields[name]

    def as_grid(self, name: str) -> np.ndarray:
        """Field reshaped to (m_y, m_x)."""
        return self.fields[name].reshape(self.shape[1], self.shape[0])

    @classmethod
    def zeros(cls, shape: Tuple[int, int], t: float = 0.0) -> "LocalDissipationField":
        n = shape[0] * shape[1]
        return cls(shape, t, **{name: np.zeros(n) for name in cls.FIELDS})


class EnergyLedger:
    """Rows of per-step energy quantities."""

    def __init__(self, initial: Dict[str, float], balance_exact: bool):
        self.initial = initial
        self.balance_exact = balance_exact
        self.rows: List[Dict[str, float]] = []

    def append(self, row: Dict[str, float]):
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        if name not in LEDGER_COLUMNS:
            raise KeyError(f"Unknown ledger column '{name}'")
        return np.array([row[name] for row in self.rows])

    def __len__(self) -> int:
        return len(self.rows)


def balance_is_exact(formulation: Formulation) -> bool:
    """Whether the discrete total-energy identity holds for this parameter set."""
    a = formulation.alpha
    if abs(a.alpha_m - a.gamma) > 1e-14:
        return False
    static = formulation.kind.stabilized and not formulation.kind.dynamic
    return not static or abs(a.alpha_f - a.alpha_m) <= 1e-14


def discrete_balance_residual(energy_before: float, energy_after: float, rate_norm_sq: float,
                              dissipation: float, forcing: float, alpha: AlphaParams, warn: bool = True):
    """
    Residual of the discrete energy identity of one step.

    Args:
        energy_before (float): Total energy at level n.
        energy_after (float): Total energy at level n+1.
        rate_norm_sq (float): ||du||^2 of the discrete total rate.
        dissipation (float): Physical plus tau dissipation at n+alpha_f.
        forcing (float): Forcing work (u_{n+alpha_f}, f).
        alpha (AlphaParams): Time-integration parameters.
        warn (bool): Log a warning outside the energy-decaying family.

    Returns:
        Tuple of the residual and whether the identity applies (alpha_m = gamma, alpha_f >= 1/2).
    """
    dt = alpha.dt
    residual = (energy_after - energy_before + dt * dt * (alpha.alpha_f - 0.5) * rate_norm_sq
                + dt * (dissipation - forcing))
    if warn and not alpha.energy_decaying:
        logger.warning(f"Energy identity checked outside the energy-decaying family ({alpha})")
    return residual, alpha.energy_decaying


class EnergyDiagnostics:
    """Evaluates energies and dissipation terms for one formulation."""

    def __init__(self, formulation: Formulation):
        self.formulation = formulation
        self.grid = formulation.grid
        self.kind = formulation.kind
        self.alpha = formulation.alpha
        self.balance_exact = balance_is_exact(formulation)
        if not self.balance_exact:
            logger.warning(f"Discrete energy identity does not hold exactly for {self.kind.value} "
                           f"with {self.alpha}; balance residuals include time-integration error")
        self.last_local: Optional[LocalDissipationField] = None

    def energies(self, phi: np.ndarray, small_scales: np.ndarray) -> Dict[str, float]:
        """Large, small, cross and total energy of a state."""
        g = self.grid
        large = self.formulation.V @ phi
        total = large + small_scales
        return {
            "energy_large": 0.5 * g.inner(large, large),
            "energy_small": 0.5 * g.inner(small_scales, small_scales),
            "energy_cross": g.inner(large, small_scales),
            "energy_total": 0.5 * g.inner(total, total),
        }

    def start(self, state: StepState, field: SmallScaleField) -> EnergyLedger:
        """Open a ledger with the energies of the initial state."""
        initial = self.energies(state.phi, field.value)
        initial["mass_large"] = self.grid.integrate(self.formulation.V @ state.phi)
        initial["mass_small"] = self.grid.integrate(field.value)
        return EnergyLedger(initial, self.balance_exact)

    def _pointwise(self, state: StepState, field: SmallScaleField, result: StepResult) -> Dict[str, np.ndarray]:
        f = self.formulation
        a = self.alpha
        dt = a.dt
        phi_alpha = a.alpha_f * result.state.phi + (1.0 - a.alpha_f) * state.phi
        large_alpha = f.V @ phi_alpha
        small_alpha = result.small_scale_alpha
        d_large = f.V @ (result.state.phi - state.phi) / dt
        d_small = (result.field.value - field.value) / dt
        grad_x = self.grid.grad_x @ phi_alpha
        grad_y = self.grid.grad_y @ phi_alpha
        lap = f.L @ phi_alpha

        terms = {
            "large_alpha": large_alpha,
            "small_alpha": small_alpha,
            "d_large": d_large,
            "d_small": d_small,
            "lap": lap,
            "physical_dissipation": f.kappa * (grad_x ** 2 + grad_y ** 2),
            "tau_dissipation": small_alpha ** 2 / f.tau if f.tau else np.zeros_like(small_alpha),
            "orthogonality": f.kappa * lap * small_alpha,
            "temporal_large": small_alpha * d_large,
            "temporal_total": d_small * (large_alpha + small_alpha),
            "exchange": (f.conv @ phi_alpha) * small_alpha,
            "forcing_large": large_alpha * f.forcing,
            "forcing_small": small_alpha * f.forcing,
        }

        c = self.kind.orthogonality_factor
        static = self.kind.stabilized and not self.kind.dynamic
        unwanted = c * terms["orthogonality"]
        small_diss = terms["tau_dissipation"] - c * terms["orthogonality"]
        if static:
            unwanted = unwanted + terms["temporal_total"]
            small_diss = small_diss - terms["temporal_total"]
        if self.kind.orthogonal:
            sigma_term = f.kappa * (f.L @ result.sigma) * small_alpha
            unwanted = unwanted + 2.0 * terms["orthogonality"] + sigma_term
        terms["unwanted"] = unwanted
        terms["small_scale_dissipation"] = small_diss

        large_diss = -(f.weight_operator @ phi_alpha) * small_alpha if self.kind.stabilized \
            else np.zeros_like(small_alpha)
        if self.kind.dynamic:
            large_diss = large_diss + large_alpha * d_small
        terms["large_scale_dissipation"] = large_diss
        return terms

    def local_dissipation_field(self, state: StepState, field: SmallScaleField,
                                result: StepResult) -> LocalDissipationField:
        """Element-wise restriction of the dissipation terms of a step."""
        terms = self._pointwise(state, field, result)
        return self._local(terms, result.state.t)

    def _local(self, terms, t) -> LocalDissipationField:
        sums = {name: self.grid.element_sum(terms[name]) for name in LocalDissipationField.FIELDS}
        return LocalDissipationField(self.grid.space.shape, t, **sums)

    def scale_exchange(self, state: StepState, field: SmallScaleField, result: StepResult):
        """
        Terms of the separate large- and small-scale energy evolutions.

        Returns:
            Tuple of dicts with the dE^h/dt and dE'/dt contributions; the convective exchange
            appears in both with opposite signs.
        """
        if not self.kind.dynamic:
            raise ValueError("Scale exchange is defined for dynamic small-scales")
        terms = self._pointwise(state, field, result)
        g = self.grid
        exchange = g.integrate(terms["exchange"])
        large = {
            "physical": -g.integrate(terms["physical_dissipation"]),
            "forcing": g.integrate(terms["forcing_large"]),
            "exchange": exchange,
            "temporal": -g.inner(terms["large_alpha"], terms["d_small"]),
        }
        small = {
            "tau": -g.integrate(terms["tau_dissipation"]),
            "forcing": g.integrate(terms["forcing_small"]),
            "exchange": -exchange,
            "temporal": -g.integrate(terms["temporal_large"]),
        }
        return large, small

    def ledger_step(self, state: StepState, field: SmallScaleField, result: StepResult) -> Dict[str, float]:
        """
        One ledger row for the step from (state, field) to result.

        Energies refer to level n+1, all other terms to the alpha levels of the step.
        """
        f = self.formulation
        g = self.grid
        dt = self.alpha.dt
        terms = self._pointwise(state, field, result)
        before = self.energies(state.phi, field.value)
        after = self.energies(result.state.phi, result.field.value)

        row = {"t": result.state.t}
        row.update(after)
        for name in ("physical_dissipation", "tau_dissipation", "small_scale_dissipation",
                     "large_scale_dissipation", "orthogonality", "temporal_large", "temporal_total",
                     "exchange", "forcing_large", "forcing_small", "unwanted"):
            row[name] = g.integrate(terms[name])

        small = terms["small_alpha"]
        row["orthogonality_scale"] = f.kappa * np.sqrt(g.inner(terms["lap"], terms["lap"]) * g.inner(small, small))

        d_total = terms["d_large"] + terms["d_small"]
        rate_sq = g.inner(d_total, d_total)
        row["numerical_dissipation"] = dt * (self.alpha.alpha_f - 0.5) * rate_sq
        row["balance_residual"], _ = discrete_balance_residual(
            before["energy_total"], after["energy_total"], rate_sq,
            row["physical_dissipation"] + row["tau_dissipation"],
            row["forcing_large"] + row["forcing_small"], self.alpha, warn=False)
        rate_sq_large = g.inner(terms["d_large"], terms["d_large"])
        row["balance_residual_large"], _ = discrete_balance_residual(
            before["energy_large"], after["energy_large"], rate_sq_large,
            row["physical_dissipation"] + row["large_scale_dissipation"],
            row["forcing_large"], self.alpha, warn=False)
        row["mass_large"] = g.integrate(f.V @ result.state.phi)
        row["mass_small"] = g.integrate(result.field.value)

        local = self._local(terms, result.state.t)
        self.last_local = local
        row["min_local_dissipation"] = float(local["small_scale_dissipation"].min())
        row["min_local_dissipation_large"] = float(local["large_scale_dissipation"].min())

        row["constraint_residual"] = 0.0
        if self.kind.orthogonal:
            constraints = f.constraint_residuals(small)
            scale = f.kappa * np.sqrt(g.inner(small, small)) * self._laplacian_norm()
            row["constraint_residual"] = float(np.abs(constraints).max() / scale) if scale > 0 else 0.0
        row["solve_residual"] = result.solve_residual
        return row

    def _laplacian_norm(self) -> float:
        """max_i ||Lap N_i|| (identical for every function on a uniform periodic mesh)."""
        L = self.formulation.L
        norms = np.asarray(L.multiply(L).T @ self.grid.weights).ravel()
        return float(np.sqrt(norms.max()))
