"""
Weak formulations of the convection-diffusion problem and their per-step linear systems.

Every formulation is written at the generalized-alpha levels (values at n+alpha_f, rates at
n+alpha_m) and reduced to one linear system for phi_{n+1} (plus sigma for the dynamic
orthogonal form). With R the large-scale residual at quadrature points, the stabilized
forms add

    - (a . grad w + s kappa Lap w, phi')      s = +1 (VMS), 0 (SUPG), -1 (GLS)
    + (w, d/dt phi')                           dynamic small-scales only

to the Galerkin terms. The unknown ordering is phi dofs first, then sigma dofs.
"""

import logging
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import LinearOperator, gmres, spilu, splu

from cdlab.exceptions import SolverError
from cdlab.quadrature import QuadratureGrid
from cdlab.small_scales import Condensation, SmallScaleField, static_evaluate
from cdlab.stabilization import StabilizationParams, tau_dyn, tau_static
from cdlab.time_integration import AlphaParams, GeneralizedAlpha, StepState

logger = logging.getLogger(__name__)

INITIAL_RATES = ("consistent", "rest")


class FormulationKind(Enum):
    GALERKIN = "galerkin"
    SUPG_STATIC = "supgs"
    VMS_STATIC = "vmss"
    GLS_STATIC = "glss"
    VMS_DYNAMIC = "vmsd"
    SUPG_DYNAMIC = "supgd"
    SUPG_DYNAMIC_INCONSISTENT = "supgd-inconsistent"
    GLS_DYNAMIC = "glsd"
    DYNAMIC_ORTHOGONAL = "do"

    @classmethod
    def parse(cls, name: Union[str, "FormulationKind"]) -> "FormulationKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"Unknown formulation '{name}'; expected one of {choices}") from None

    @property
    def stabilized(self) -> bool:
        return self is not FormulationKind.GALERKIN

    @property
    def dynamic(self) -> bool:
        return self in (FormulationKind.VMS_DYNAMIC, FormulationKind.SUPG_DYNAMIC,
                        FormulationKind.SUPG_DYNAMIC_INCONSISTENT, FormulationKind.GLS_DYNAMIC,
                        FormulationKind.DYNAMIC_ORTHOGONAL)

    @property
    def orthogonal(self) -> bool:
        return self is FormulationKind.DYNAMIC_ORTHOGONAL

    @property
    def consistent(self) -> bool:
        """Whether the small-scale residual keeps the diffusive term."""
        return self is not FormulationKind.SUPG_DYNAMIC_INCONSISTENT

    @property
    def weight_sign(self) -> int:
        """Sign s of kappa Lap w in the weighting operator a . grad w + s kappa Lap w."""
        if self in (FormulationKind.VMS_STATIC, FormulationKind.VMS_DYNAMIC,
                    FormulationKind.DYNAMIC_ORTHOGONAL):
            return 1
        if self in (FormulationKind.GLS_STATIC, FormulationKind.GLS_DYNAMIC):
            return -1
        return 0

    @property
    def orthogonality_factor(self) -> int:
        """Multiple of (kappa Lap phi^h, phi') left in the total-energy evolution."""
        if not self.stabilized or self.orthogonal:
            return 0
        return self.weight_sign + (1 if self.consistent else 0)


class AssembledSystem:
    """A linear system of one step, restricted to the free unknowns."""

    def __init__(self, matrix: sps.csr_matrix, rhs: np.ndarray, dofs: np.ndarray, num_unknowns: int,
                 kind: FormulationKind, residual_intercept: np.ndarray,
                 condensation: Optional[Condensation] = None):
        self.matrix = matrix
        self.rhs = rhs
        self.dofs = dofs
        self.num_unknowns = num_unknowns
        self.kind = kind
        self.residual_intercept = residual_intercept
        self.condensation = condensation

    def expand(self, reduced: np.ndarray) -> np.ndarray:
        """Scatter a reduced solution into the full unknown vector (zeros elsewhere)."""
        full = np.zeros(self.num_unknowns)
        full[self.dofs] = reduced
        return full


class StepResult:
    """Everything one step produces."""

    def __init__(self, state: StepState, field: SmallScaleField, small_scale_alpha: np.ndarray,
                 residual_alpha: np.ndarray, solve_residual: float, sigma: Optional[np.ndarray] = None):
        self.state = state
        self.field = field
        self.small_scale_alpha = small_scale_alpha
        self.residual_alpha = residual_alpha
        self.solve_residual = solve_residual
        self.sigma = sigma


class LinearSolver:
    """Sparse direct solve with iterative refinement, or preconditioned GMRES."""

    def __init__(self, method: str = "direct", tolerance: float = 1e-12, max_refinements: int = 3):
        if method not in ("direct", "gmres"):
            raise ValueError(f"Unknown solver '{method}'; expected 'direct' or 'gmres'")
        self.method = method
        self.tolerance = tolerance
        self.max_refinements = max_refinements
        self._matrix = None
        self._lu = None
        self._ilu = None

    def _factorize(self, matrix):
        if matrix is self._matrix:
            return
        try:
            if self.method == "direct":
                self._lu = splu(matrix.tocsc())
            else:
                self._ilu = spilu(matrix.tocsc(), drop_tol=1e-6, fill_factor=20)
        except RuntimeError as e:
            raise SolverError(f"Factorization failed: {e}") from e
        self._matrix = matrix

    def solve(self, matrix: sps.csr_matrix, rhs: np.ndarray, guess: Optional[np.ndarray] = None):
        """
        Solve matrix x = rhs.

        Returns:
            Tuple of the solution and the attained relative residual.

        Raises:
            SolverError: If the relative residual exceeds the tolerance.
        """
        norm_b = np.linalg.norm(rhs)
        if norm_b == 0.0:
            return np.zeros_like(rhs), 0.0
        self._factorize(matrix)

        if self.method == "direct":
            x = self._lu.solve(rhs)
            residual = np.linalg.norm(rhs - matrix @ x) / norm_b
            for _ in range(self.max_refinements):
                if residual <= self.tolerance:
                    break
                x = x + self._lu.solve(rhs - matrix @ x)
                residual = np.linalg.norm(rhs - matrix @ x) / norm_b
        else:
            precond = LinearOperator(matrix.shape, matvec=self._ilu.solve)
            x, info = gmres(matrix, rhs, x0=guess, rtol=self.tolerance, atol=0.0,
                            restart=200, maxiter=50, M=precond)
            residual = np.linalg.norm(rhs - matrix @ x) / norm_b
            if info < 0:
                raise SolverError("GMRES breakdown", residual)

        if not np.isfinite(residual) or residual > self.tolerance:
            raise SolverError("Linear solve did not reach the requested tolerance", residual)
        return x, residual


class Formulation:
    """
    One weak formulation on a fixed mesh, time step and physics.

    Example:
        >>> space = SplineSpace2D.uniform(2, 16)
        >>> form = Formulation("glsd", QuadratureGrid(space), velocity=(1, 1), kappa=5e-4,
        ...                    alpha=make_alpha("crank-nicolson", dt=1 / 32))
        >>> state, field = form.initial_state(phi0)
        >>> result = form.step(state, field)
    """

    def __init__(self, kind, grid: QuadratureGrid, velocity, kappa: float, alpha: AlphaParams,
                 forcing: Union[float, Callable] = 0.0, c_inverse: Optional[float] = None,
                 r_switch: int = 2, boundary: str = "periodic", solver: Optional[LinearSolver] = None,
                 do_regularization: str = "pin", do_epsilon: float = 1e-10):
        self.kind = FormulationKind.parse(kind)
        self.grid = grid
        self.space = grid.space
        self.velocity = np.asarray(velocity, dtype=float)
        self.kappa = float(kappa)
        self.alpha = alpha
        self.integrator = GeneralizedAlpha(alpha)
        self.boundary = boundary
        self.solver = solver or LinearSolver()
        self.do_regularization = do_regularization
        self.do_epsilon = do_epsilon

        if boundary not in ("periodic", "dirichlet"):
            raise ValueError(f"Unknown boundary mode '{boundary}'")
        if do_regularization not in ("pin", "tikhonov"):
            raise ValueError(f"Unknown regularization '{do_regularization}'")
        if self.kind.orthogonal and self.kappa <= 0.0:
            raise ValueError("DO requires positive diffusivity")
        if self.kind.orthogonal and self.space.degree < 2:
            raise ValueError("DO requires second derivatives of the basis (degree 2)")

        N = self.space.num_functions
        self.num_functions = N
        self.num_unknowns = 2 * N if self.kind.orthogonal else N
        self.free = np.arange(N) if boundary == "periodic" else self.space.boundary_free_dofs()
        self.dofs = np.concatenate([self.free, N + self.free]) if self.kind.orthogonal else self.free

        # pointwise operators (quadrature points x functions)
        self.V = grid.values
        self.L = grid.laplacian
        self.conv = grid.convection_operator(self.velocity)
        kappa_res = self.kappa if self.kind.consistent else 0.0
        self.residual_operator = (self.conv - kappa_res * self.L).tocsr()
        self.weight_operator = (self.conv + self.kind.weight_sign * self.kappa * self.L).tocsr()

        if callable(forcing):
            self.forcing = np.asarray(forcing(grid.points[:, 0], grid.points[:, 1]), dtype=float)
        else:
            self.forcing = np.full(grid.num_points, float(forcing))

        W = grid.weighted()
        self.mass = grid.mass_matrix()
        self.convection = (self.V.T @ W @ self.conv).tocsr()
        self.stiffness = grid.stiffness_matrix()
        self.transport = (self.convection + self.kappa * self.stiffness).tocsr()
        self.load = self.V.T @ (grid.weights * self.forcing)

        c_m = alpha.rate_coefficient
        self.residual_slope = (c_m * self.V + alpha.alpha_f * self.residual_operator).tocsr()

        self.metric = grid.metric_tensor()
        self.params = StabilizationParams(self.velocity, self.kappa, alpha, c_inverse,
                                          self.space.degree, r_switch)
        self.tau_static = None
        self.tau_dyn = None
        if self.kind.stabilized and not self.kind.dynamic:
            self.tau_static = tau_static(self.params, self.metric)
        if self.kind.dynamic:
            self.tau_dyn = tau_dyn(self.params, self.metric)
        self._matrix = None
        logger.debug(f"Formulation {self.kind.value}: N={N}, points={grid.num_points}, "
                     f"tau_static={self.tau_static}, tau_dyn={self.tau_dyn}")

    @property
    def tau(self) -> Optional[float]:
        """The tau scaling the small-scale dissipation ||tau^-1/2 phi'||^2."""
        return self.tau_dyn if self.kind.dynamic else self.tau_static

    # ------------------------------------------------------------------
    # residuals and initial data

    def residual_points(self, phi: np.ndarray, phi_dot: np.ndarray) -> np.ndarray:
        """Large-scale residual phidot + a.grad phi - kappa Lap phi - f at the points."""
        return self.V @ phi_dot + self.residual_operator @ phi - self.forcing

    def _solve_free(self, matrix, rhs) -> np.ndarray:
        free = self.free
        out = np.zeros(self.num_functions)
        x, _ = LinearSolver(tolerance=self.solver.tolerance).solve(matrix[free][:, free].tocsr(), rhs[free])
        out[free] = x
        return out

    def initial_state(self, phi0: np.ndarray, t0: float = 0.0, rate: str = "consistent"):
        """
        Initial rates and small-scales.

        Args:
            phi0 (np.ndarray): Initial coefficients.
            t0 (float): Initial time.
            rate (str): ``"consistent"`` solves the weak form at t0 for the rate; ``"rest"``
                starts with a zero rate, which excites the alternating mode of Crank-Nicolson.

        Returns:
            Tuple of the StepState and SmallScaleField at t0.
        """
        if rate not in INITIAL_RATES:
            raise ValueError(f"Unknown initial rate '{rate}'; expected one of {INITIAL_RATES}")
        phi0 = np.asarray(phi0, dtype=float).copy()
        if self.boundary == "dirichlet":
            mask = np.ones(self.num_functions, dtype=bool)
            mask[self.free] = False
            phi0[mask] = 0.0
        spatial = self.load - self.transport @ phi0

        if rate == "rest":
            phi_dot0 = np.zeros(self.num_functions)
        elif self.kind.stabilized and not self.kind.dynamic:
            W = self.grid.weighted(self.tau_static)
            lhs = self.mass + self.weight_operator.T @ W @ self.V
            rhs = spatial - self.weight_operator.T @ (
                self.grid.weights * self.tau_static * (self.residual_operator @ phi0 - self.forcing))
            phi_dot0 = self._solve_free(lhs.tocsr(), rhs)
        else:
            phi_dot0 = self._solve_free(self.mass, spatial)

        state = StepState(phi0, phi_dot0, t0)
        residual = self.residual_points(phi0, phi_dot0)
        if self.kind.dynamic:
            field = SmallScaleField(self.grid.num_points, dynamic=True, rate=-residual)
        elif self.kind.stabilized:
            field = SmallScaleField.static(static_evaluate(residual, self.tau_static))
        else:
            field = SmallScaleField.static(np.zeros(self.grid.num_points))
        return state, field

    # ------------------------------------------------------------------
    # assembly

    def _system_matrix(self, tau_eff, rate_ratio) -> sps.csr_matrix:
        a = self.alpha
        W = self.grid.weighted
        B = self.residual_slope
        A = a.rate_coefficient * self.mass + a.alpha_f * self.transport
        if self.kind.stabilized:
            A = A + self.weight_operator.T @ W(tau_eff) @ B
        if self.kind.dynamic:
            A = A - self.V.T @ W(rate_ratio) @ B
        if not self.kind.orthogonal:
            return A.tocsr()

        k = self.kappa
        L = self.L
        A_ps = -k * (self.weight_operator.T @ W(tau_eff) @ L) + k * (self.V.T @ W(rate_ratio) @ L)
        A_sp = -k * (L.T @ W(tau_eff) @ B)
        A_ss = k * k * (L.T @ W(tau_eff) @ L)
        if self.do_regularization == "tikhonov":
            eps = self.do_epsilon * k * k * float(np.sum(self.metric * self.metric))
            A_ss = A_ss + eps * self.mass
            logger.info(f"DO Tikhonov regularization epsilon={eps:.3e}")
        elif self.boundary == "periodic":
            # constants span the kernel of the sigma block; summing the constraint rows
            # then forces the pinned multiplier to zero
            eps = float(A_ss.diagonal().mean())
            pin = sps.coo_matrix(([eps], ([0], [0])), shape=A_ss.shape)
            A_ss = A_ss + pin
            logger.debug(f"DO pin regularization epsilon={eps:.3e}")
        return sps.bmat([[A, A_ps], [A_sp, A_ss]], format="csr")

    def assemble(self, state: StepState, field: SmallScaleField) -> AssembledSystem:
        """
        Assemble the system of the step n -> n+1.

        Args:
            state (StepState): Large-scale state at level n.
            field (SmallScaleField): Small-scales at level n.

        Returns:
            AssembledSystem: Matrix and right-hand side on the free unknowns.
        """
        a = self.alpha
        rate0 = self.integrator.rate_intercept(state)
        r0 = self.V @ rate0 + (1.0 - a.alpha_f) * (self.residual_operator @ state.phi) - self.forcing
        b = self.load - self.mass @ rate0 - (1.0 - a.alpha_f) * (self.transport @ state.phi)

        condensation = None
        tau_eff, rate_ratio = None, None
        value_intercept = rate_intercept = 0.0
        if self.kind.dynamic:
            if field.num_points != self.grid.num_points:
                raise ValueError("Small-scale field does not match the quadrature grid")
            condensation = field.condensation_coefficients(a, self.tau_dyn)
            tau_eff, rate_ratio = condensation.slope_value, condensation.slope_rate
            value_intercept, rate_intercept = condensation.value_intercept, condensation.rate_intercept
        elif self.kind.stabilized:
            tau_eff = self.tau_static

        w = self.grid.weights
        if self.kind.stabilized:
            b = b + self.weight_operator.T @ (w * (value_intercept - tau_eff * r0))
        if self.kind.dynamic:
            b = b - self.V.T @ (w * (rate_intercept - rate_ratio * r0))
        if self.kind.orthogonal:
            b_sigma = -self.kappa * (self.L.T @ (w * (value_intercept - tau_eff * r0)))
            b = np.concatenate([b, b_sigma])

        if self._matrix is None:
            # tau_eff and the rate ratio do not change between steps
            matrix = self._system_matrix(tau_eff, rate_ratio)
            if len(self.dofs) != self.num_unknowns:
                matrix = matrix[self.dofs][:, self.dofs].tocsr()
            self._matrix = matrix
        return AssembledSystem(self._matrix, b[self.dofs], self.dofs, self.num_unknowns, self.kind,
                               r0, condensation)

    def solve(self, system: AssembledSystem, guess: Optional[np.ndarray] = None):
        """Solve an assembled system; returns the full unknown vector and the relative residual."""
        reduced_guess = None if guess is None else guess[system.dofs]
        x, residual = self.solver.solve(system.matrix, system.rhs, reduced_guess)
        return system.expand(x), residual

    def recover_small_scales(self, system: AssembledSystem, solution: np.ndarray):
        """
        Small-scales at level n+alpha_f from a solved system.

        Returns:
            Tuple of phi'_{n+alpha_f} and the residual driving it (including the multiplier
            term for the orthogonal form).
        """
        N = self.num_functions
        residual = self.residual_slope @ solution[:N] + system.residual_intercept
        if self.kind.orthogonal:
            residual = residual - self.kappa * (self.L @ solution[N:])
        if not self.kind.stabilized:
            return np.zeros(self.grid.num_points), residual
        if self.kind.dynamic:
            return system.condensation.value(residual), residual
        return static_evaluate(residual, self.tau_static), residual

    def step(self, state: StepState, field: SmallScaleField) -> StepResult:
        """Advance large- and small-scales by one step."""
        system = self.assemble(state, field)
        N = self.num_functions
        solved = {}

        def solve_phi(current: StepState, phi_pred: np.ndarray) -> np.ndarray:
            guess = np.zeros(self.num_unknowns)
            guess[:N] = phi_pred
            if current.sigma is not None:
                guess[N:] = current.sigma
            solved["solution"], solved["residual"] = self.solve(system, guess)
            return solved["solution"][:N]

        new_state = self.integrator.advance(state, solve_phi)
        solution, solve_residual = solved["solution"], solved["residual"]
        sigma = solution[N:].copy() if self.kind.orthogonal else None
        new_state.sigma = sigma
        small_alpha, residual_alpha = self.recover_small_scales(system, solution)

        if self.kind.dynamic:
            new_field = field.commit_step(residual_alpha, self.alpha, self.tau_dyn, system.condensation)
        elif self.kind.stabilized:
            new_field = SmallScaleField.static(static_evaluate(
                self.residual_points(new_state.phi, new_state.phi_dot), self.tau_static))
        else:
            new_field = SmallScaleField.static(np.zeros(self.grid.num_points))
        return StepResult(new_state, new_field, small_alpha, residual_alpha, solve_residual, sigma)

    # ------------------------------------------------------------------
    # constraint monitoring

    def constraint_residuals(self, small_scales: np.ndarray) -> np.ndarray:
        """(kappa Lap N_i, phi') for every basis function N_i."""
        return self.kappa * (self.L.T @ (self.grid.weights * small_scales))
