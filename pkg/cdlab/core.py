"""
Run orchestration: build a simulation from a RunConfig, step it to the end time and
collect the ledger, snapshots and metadata.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from cdlab import __version__
from cdlab.config import RunConfig
from cdlab.energy import EnergyDiagnostics, EnergyLedger, LocalDissipationField
from cdlab.exceptions import SolverError
from cdlab.formulations import Formulation, FormulationKind, LinearSolver
from cdlab.model_problem import make_initial_condition
from cdlab.output import emit_outputs, plot_curves
from cdlab.quadrature import QuadratureGrid
from cdlab.spline_space import SplineSpace2D, project_l2
from cdlab.stabilization import tau_summary
from cdlab.time_integration import make_alpha

logger = logging.getLogger(__name__)

SWEEP_MESHES = (16, 32, 64)
REFERENCE_MESH = 128


class Snapshot:
    """Field coefficients and local dissipation at one time."""

    def __init__(self, t: float, phi: np.ndarray, local: Optional[LocalDissipationField]):
        self.t = t
        self.phi = phi
        self.local = local


class RunResult:
    """Everything a finished run produced."""

    def __init__(self, config: RunConfig, formulation: Formulation, ledger: EnergyLedger,
                 snapshots: List[Snapshot], final_state, final_field, meta: dict):
        self.config = config
        self.formulation = formulation
        self.kind = formulation.kind
        self.space = formulation.space
        self.ledger = ledger
        self.snapshots = snapshots
        self.final_state = final_state
        self.final_field = final_field
        self.meta = meta
        self.files: List[Path] = []


class Simulation:
    """A configured run, ready to step."""

    def __init__(self, config: RunConfig):
        config.validate()
        self.config = config
        mx, my = config.mesh
        self.space = SplineSpace2D.uniform(config.degree, mx, my, config.domain[0], config.domain[1])
        self.grid = QuadratureGrid(self.space)
        self.dt = config.time_step()
        self.num_steps = config.num_steps()
        self.alpha = make_alpha(config.alpha, self.dt, config.alpha_f)
        self.formulation = Formulation(
            config.formulation, self.grid, config.velocity, config.kappa, self.alpha,
            forcing=config.forcing, c_inverse=config.c_inverse, r_switch=config.r_switch,
            boundary=config.boundary, solver=LinearSolver(config.solver, config.solver_tolerance),
            do_regularization=config.do_regularization, do_epsilon=config.do_epsilon,
        )
        self.diagnostics = EnergyDiagnostics(self.formulation)
        self.initial_condition = make_initial_condition(config.initial_condition)

    def initial_coefficients(self) -> np.ndarray:
        if not self.initial_condition.exactly_representable(self.space):
            logger.warning("Initial condition is not exactly representable on this mesh; "
                           "using its L2 projection")
        return project_l2(self.space, self.initial_condition, self.grid, dofs=self.formulation.free)

    def snapshot_steps(self) -> Dict[int, float]:
        steps = {}
        for t in self.config.snapshot_times:
            k = int(round(t / self.dt))
            if k <= self.num_steps:
                steps[k] = k * self.dt
            else:
                logger.warning(f"Snapshot time {t} lies beyond the end of the run")
        return steps

    def metadata(self, ledger: EnergyLedger) -> dict:
        meta = {
            "version": __version__,
            "config": self.config.to_dict(),
            "dt": self.dt,
            "num_steps": self.num_steps,
            "cfl_convention": "dt = cfl * min(h_x, h_y) / max(|a_x|, |a_y|)",
            "alpha": self.alpha.to_dict(),
            "tau": tau_summary(self.formulation.params, self.grid.metric_tensor()),
            "initial_energy": ledger.initial,
            "balance_exact": ledger.balance_exact,
            "initial_condition_exact": self.initial_condition.exactly_representable(self.space),
            "num_functions": self.space.num_functions,
            "num_quadrature_points": self.grid.num_points,
        }
        if self.formulation.kind.orthogonal:
            meta["do_regularization"] = self.config.do_regularization
        return meta

    def run(self) -> RunResult:
        """Step from the projected initial condition to the end time."""
        form = self.formulation
        state, field = form.initial_state(self.initial_coefficients(), rate=self.config.initial_rate)
        ledger = self.diagnostics.start(state, field)
        steps = self.snapshot_steps()
        snapshots = []
        if 0 in steps:
            snapshots.append(Snapshot(0.0, state.phi.copy(), None))

        logger.info(f"Running {form.kind.value} on {self.space.shape[0]}x{self.space.shape[1]} "
                    f"mesh: dt={self.dt:.6g}, steps={self.num_steps}")
        for k in range(1, self.num_steps + 1):
            try:
                result = form.step(state, field)
            except SolverError as e:
                e.step = k
                raise
            row = self.diagnostics.ledger_step(state, field, result)
            if k % self.config.output_every == 0 or k == self.num_steps:
                ledger.append(row)
            logger.debug(f"step {k}: t={row['t']:.6f} E={row['energy_total']:.12e} "
                         f"solve_residual={row['solve_residual']:.2e}")
            if k in steps:
                snapshots.append(Snapshot(result.state.t, result.state.phi.copy(),
                                          self.diagnostics.last_local))
            state, field = result.state, result.field

        logger.info(f"Finished {form.kind.value}: E_0={ledger.initial['energy_total']:.6e}, "
                    f"E_end={ledger.rows[-1]['energy_total']:.6e}")
        return RunResult(self.config, form, ledger, snapshots, state, field, self.metadata(ledger))


def run(config: RunConfig, write: bool = True) -> RunResult:
    """
    Run one configuration.

    Args:
        config (RunConfig): Run configuration.
        write (bool): Write output files when ``config.output_dir`` is set.

    Returns:
        RunResult: The finished run.
    """
    result = Simulation(config).run()
    if write and config.output_dir:
        result.files = emit_outputs(result, config.output_dir)
    return result


def curve_distance(coarse_t, coarse_values, fine_t, fine_values) -> float:
    """Sup-norm distance between two curves at the coarse times."""
    return float(np.max(np.abs(np.interp(coarse_t, fine_t, fine_values) - np.asarray(coarse_values))))


def energy_curve(result: RunResult, column: str = "energy_total"):
    """(t, values) of a ledger column, prefixed with the initial value."""
    t = np.concatenate([[0.0], result.ledger.column("t")])
    start = result.ledger.initial.get(column, np.nan)
    return t, np.concatenate([[start], result.ledger.column(column)])


def sweep(formulations: Sequence[str], meshes: Sequence[int] = SWEEP_MESHES, reference: bool = True,
          output_dir: Optional[str] = None, column: str = "energy_total", **overrides) -> Dict[str, dict]:
    """
    Run each formulation on the benchmark mesh family.

    Args:
        formulations: Formulation names.
        meshes: Mesh sizes, coarse to fine.
        reference (bool): Add the 128x128 reference run.
        output_dir (str, optional): Root directory; each run writes into ``<kind>-<m>``.
        column (str): Ledger column compared between meshes.
        **overrides: RunConfig overrides applied to every run.

    Returns:
        Dict mapping formulation name to {"curves", "distances", "ordered"}.
    """
    meshes = list(meshes) + ([REFERENCE_MESH] if reference and REFERENCE_MESH not in meshes else [])
    summary = {}
    rows = []
    for name in formulations:
        kind = FormulationKind.parse(name)
        curves = {}
        for m in meshes:
            run_dir = None if output_dir is None else str(Path(output_dir) / f"{kind.value}-{m}")
            config = RunConfig(mesh=[m, m], formulation=kind.value, output_dir=run_dir, **overrides)
            label = f"{m}x{m}" + (" reference" if reference and m == REFERENCE_MESH else "")
            curves[label] = energy_curve(run(config), column)
        labels = list(curves)
        distances = []
        for coarse, fine in zip(labels[:-1], labels[1:]):
            d = curve_distance(*curves[coarse], *curves[fine])
            distances.append(d)
            rows.append((kind.value, coarse, fine, d))
        ordered = all(b < a for a, b in zip(distances[:-1], distances[1:]))
        summary[kind.value] = {"curves": curves, "distances": distances, "ordered": ordered}
        logger.info(f"Sweep {kind.value}: distances {['%.3e' % d for d in distances]}, ordered={ordered}")
        if output_dir is not None:
            plot_curves(Path(output_dir) / f"{kind.value}-{column}.svg", curves,
                        f"{kind.value.upper()} mesh family", column.replace("_", " "))

    if output_dir is not None:
        path = Path(output_dir) / "sweep.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            f.write("formulation,coarse,fine,sup_distance\n")
            for kind_name, coarse, fine, d in rows:
                f.write(f"{kind_name},{coarse},{fine},{d:.17g}\n")
    return summary
