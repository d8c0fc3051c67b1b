"""
Periodic B-spline spaces on uniform Cartesian meshes.

The 1D space of degree p on m elements has exactly m functions: the p functions that
would stick out of the domain are identified with their periodic images by taking
the global index modulo m. On element e the active functions are (e + k) mod m for
k = 0..p, so function j is supported on elements j-p, ..., j.
"""

import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sps

logger = logging.getLogger(__name__)

SUPPORTED_DEGREES = (1, 2)


def basis_derivatives(span: int, degree: int, knots: np.ndarray, u: float, nders: int) -> np.ndarray:
    """
    Cox-de Boor evaluation of the non-zero B-splines and their derivatives.

    Args:
        span (int): Knot span index i with knots[i] <= u < knots[i+1].
        degree (int): Polynomial degree p.
        knots (np.ndarray): Knot vector.
        u (float): Evaluation parameter.
        nders (int): Highest derivative requested.

    Returns:
        np.ndarray: Array of shape (nders+1, p+1); row k holds the k-th derivatives of
            the p+1 functions active on the span.
    """
    p = degree
    ndu = np.zeros((p + 1, p + 1))
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = u - knots[span + 1 - j]
        right[j] = knots[span + j] - u
        saved = 0.0
        for r in range(j):
            # lower triangle holds knot differences
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((nders + 1, p + 1))
    ders[0, :] = ndu[:, p]

    for r in range(p + 1):
        s1, s2 = 0, 1
        a = np.zeros((2, p + 1))
        a[0, 0] = 1.0
        for k in range(1, min(nders, p) + 1):
            d = 0.0
            rk = r - k
            pk = p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1

    factor = p
    for k in range(1, min(nders, p) + 1):
        ders[k, :] *= factor
        factor *= p - k
    # derivatives above the degree stay zero
    return ders


class SplineSpace1D:
    """Periodic uniform B-spline space in one direction."""

    def __init__(self, degree: int, num_elements: int, length: float = 1.0):
        """
        Initialize the space.

        Args:
            degree (int): Polynomial degree (1 or 2).
            num_elements (int): Number of elements m (at least 3).
            length (float): Domain length L.
        """
        if degree not in SUPPORTED_DEGREES:
            raise ValueError(f"Unsupported degree {degree}; expected one of {SUPPORTED_DEGREES}")
        if num_elements < 3:
            raise ValueError(f"A periodic space needs at least 3 elements, got {num_elements}")
        if length <= 0.0:
            raise ValueError(f"Domain length must be positive, got {length}")
        self.degree = degree
        self.num_elements = num_elements
        self.length = float(length)
        self.h = self.length / num_elements
        self.periodic = True
        # local uniform knot vector around span p, in units of h
        self._local_knots = np.arange(-degree, degree + 2, dtype=float)

    @property
    def num_functions(self) -> int:
        return self.num_elements

    def active_functions(self, element: int) -> np.ndarray:
        """Global indices of the p+1 functions active on an element."""
        self._check_element(element)
        return (element + np.arange(self.degree + 1)) % self.num_elements

    def eval_basis(self, element: int, xi: float) -> np.ndarray:
        """
        Evaluate the active functions at a parent coordinate.

        Args:
            element (int): Element index.
            xi (float): Parent coordinate in [-1, 1].

        Returns:
            np.ndarray: Shape (p+1, 3) with value, d/dx and d2/dx2 in physical coordinates.
        """
        self._check_element(element)
        if xi < -1.0 - 1e-14 or xi > 1.0 + 1e-14:
            raise ValueError(f"Parent coordinate {xi} outside [-1, 1]")
        t = 0.5 * (min(max(xi, -1.0), 1.0) + 1.0)
        ders = basis_derivatives(self.degree, self.degree, self._local_knots, t, 2)
        # d/dx = (1/h) d/dt
        scale = np.array([1.0, 1.0 / self.h, 1.0 / self.h ** 2])
        return (ders * scale[:, None]).T

    def collocation(self, element_xi: Sequence[float], order: int = 0) -> sps.csr_matrix:
        """
        Sparse matrix of a derivative of every function at the points xi of every element.

        Rows are ordered element-major: row e*len(xi) + q is point q of element e.
        """
        npts = len(element_xi)
        tables = np.array([self.eval_basis(0, xi)[:, order] for xi in element_xi])
        rows, cols, data = [], [], []
        local = np.arange(self.degree + 1)
        for e in range(self.num_elements):
            glob = (e + local) % self.num_elements
            for q in range(npts):
                rows.extend([e * npts + q] * len(local))
                cols.extend(glob)
                data.extend(tables[q])
        shape = (self.num_elements * npts, self.num_functions)
        return sps.coo_matrix((data, (rows, cols)), shape=shape).tocsr()

    def locate(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Element index and parent coordinate of physical points (wrapped into [0, L])."""
        x = np.asarray(x, dtype=float)
        wrapped = np.where(np.isclose(x, self.length), self.length, np.mod(x, self.length))
        element = np.minimum(np.floor(wrapped / self.h).astype(int), self.num_elements - 1)
        xi = 2.0 * (wrapped / self.h - element) - 1.0
        return element, np.clip(xi, -1.0, 1.0)

    def sample_matrix(self, x: np.ndarray, order: int = 0) -> sps.csr_matrix:
        """Sparse evaluation matrix of all functions at arbitrary physical points."""
        element, xi = self.locate(x)
        rows, cols, data = [], [], []
        for i, (e, s) in enumerate(zip(element, xi)):
            values = self.eval_basis(int(e), float(s))[:, order]
            rows.extend([i] * (self.degree + 1))
            cols.extend(self.active_functions(int(e)))
            data.extend(values)
        return sps.coo_matrix((data, (rows, cols)), shape=(len(element), self.num_functions)).tocsr()

    def _check_element(self, element: int):
        if not 0 <= element < self.num_elements:
            raise IndexError(f"Element {element} out of range [0, {self.num_elements})")


class SplineSpace2D:
    """Tensor product of two periodic spaces; global index g = iy * m_x + ix."""

    def __init__(self, space_x: SplineSpace1D, space_y: SplineSpace1D):
        if space_x.degree != space_y.degree:
            raise ValueError("Both directions must use the same degree")
        self.space_x = space_x
        self.space_y = space_y
        self.degree = space_x.degree
        self.shape = (space_x.num_elements, space_y.num_elements)
        self.num_functions = space_x.num_functions * space_y.num_functions
        self.num_elements = space_x.num_elements * space_y.num_elements
        self.connectivity = self._build_connectivity()

    @classmethod
    def uniform(cls, degree: int, mx: int, my: Optional[int] = None,
                lx: float = 1.0, ly: float = 1.0) -> "SplineSpace2D":
        """Build the space on an mx-by-my mesh of [0, lx] x [0, ly]."""
        my = mx if my is None else my
        return cls(SplineSpace1D(degree, mx, lx), SplineSpace1D(degree, my, ly))

    @property
    def h(self) -> Tuple[float, float]:
        return self.space_x.h, self.space_y.h

    @property
    def area(self) -> float:
        return self.space_x.length * self.space_y.length

    def element_index(self, element) -> Tuple[int, int]:
        """Normalize a flat or (ex, ey) element index."""
        if isinstance(element, (tuple, list)):
            ex, ey = int(element[0]), int(element[1])
        else:
            ex, ey = int(element) % self.shape[0], int(element) // self.shape[0]
        if not (0 <= ex < self.shape[0] and 0 <= ey < self.shape[1]):
            raise IndexError(f"Element {element} out of range for mesh {self.shape}")
        return ex, ey

    def _build_connectivity(self) -> np.ndarray:
        mx, my = self.shape
        n1 = self.degree + 1
        conn = np.empty((self.num_elements, n1 * n1), dtype=int)
        for ey in range(my):
            gy = self.space_y.active_functions(ey)
            for ex in range(mx):
                gx = self.space_x.active_functions(ex)
                conn[ey * mx + ex] = (gy[:, None] * mx + gx[None, :]).ravel()
        return conn

    def eval_basis(self, element, xi: float, eta: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Evaluate the (p+1)^2 active functions of an element.

        Args:
            element: Flat index or (ex, ey).
            xi (float): Parent coordinate along x.
            eta (float): Parent coordinate along y.

        Returns:
            Tuple of values (n,), gradients (n, 2) and Laplacians (n,), ordered like the
            connectivity row of the element (local a = ky*(p+1) + kx).
        """
        ex, ey = self.element_index(element)
        bx = self.space_x.eval_basis(ex, xi)
        by = self.space_y.eval_basis(ey, eta)
        values = np.outer(by[:, 0], bx[:, 0]).ravel()
        grad = np.stack([np.outer(by[:, 0], bx[:, 1]).ravel(),
                         np.outer(by[:, 1], bx[:, 0]).ravel()], axis=1)
        laplacian = (np.outer(by[:, 0], bx[:, 2]) + np.outer(by[:, 2], bx[:, 0])).ravel()
        return values, grad, laplacian

    def evaluate(self, coefficients: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Evaluate a spline field on the tensor grid x (nx,) by y (ny,); returns (ny, nx)."""
        bx = self.space_x.sample_matrix(np.asarray(x))
        by = self.space_y.sample_matrix(np.asarray(y))
        c = np.asarray(coefficients).reshape(self.shape[1], self.shape[0])
        return by @ (bx @ c.T).T

    def boundary_free_dofs(self) -> np.ndarray:
        """Functions whose support does not wrap across the periodic seam."""
        p = self.degree
        mx, my = self.shape
        ix = np.arange(p, mx)
        iy = np.arange(p, my)
        return (iy[:, None] * mx + ix[None, :]).ravel()


def project_l2(space: SplineSpace2D, f: Callable[[np.ndarray, np.ndarray], np.ndarray],
               grid=None, dofs: Optional[np.ndarray] = None) -> np.ndarray:
    """
    L2 projection of a pointwise function onto the spline space.

    Args:
        space (SplineSpace2D): Target space.
        f (Callable): Vectorized function f(x, y).
        grid (QuadratureGrid, optional): Quadrature to integrate with; built if omitted.
        dofs (np.ndarray, optional): Restrict the projection to these functions.

    Returns:
        np.ndarray: Coefficients (length N; zero outside ``dofs``).
    """
    from scipy.sparse.linalg import splu

    from cdlab.quadrature import QuadratureGrid

    grid = grid or QuadratureGrid(space)
    values = np.asarray(f(grid.points[:, 0], grid.points[:, 1]), dtype=float)
    if values.shape == ():
        values = np.full(grid.num_points, float(values))
    mass = grid.mass_matrix()
    rhs = grid.values.T @ (grid.weights * values)
    coefficients = np.zeros(space.num_functions)
    if dofs is None:
        dofs = np.arange(space.num_functions)
    try:
        lu = splu(mass[dofs][:, dofs].tocsc())
    except RuntimeError as e:
        raise RuntimeError(f"Mass matrix factorization failed: {e}") from e
    coefficients[dofs] = lu.solve(rhs[dofs])
    return coefficients
