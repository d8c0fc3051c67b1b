"""
Uniform periodic mesh, tensor Gauss-Legendre quadrature and global evaluation operators.

All quadrature points of the mesh are stored in one flat array. Point index is
``iy * (m_x * q) + ix`` where ``ix = ex * q + qx`` (and likewise for y), so that the global
value/derivative operators are Kronecker products of 1D collocation matrices.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sps

from cdlab.spline_space import SplineSpace2D

logger = logging.getLogger(__name__)


class QuadratureGrid:
    """Gauss points, weights, metric tensor and cached basis operators of a spline space."""

    def __init__(self, space: SplineSpace2D, points_per_axis: Optional[int] = None):
        """
        Build the grid.

        Args:
            space (SplineSpace2D): Space whose functions are evaluated at the points.
            points_per_axis (int, optional): Gauss points per element and direction;
                defaults to p + 1.
        """
        self.space = space
        self.points_per_axis = points_per_axis or space.degree + 1
        q = self.points_per_axis
        self.parent_points, self.parent_weights = np.polynomial.legendre.leggauss(q)

        sx, sy = space.space_x, space.space_y
        bx = [sx.collocation(self.parent_points, k) for k in range(3)]
        by = [sy.collocation(self.parent_points, k) for k in range(3)]

        self.values = sps.kron(by[0], bx[0], format="csr")
        self.grad_x = sps.kron(by[0], bx[1], format="csr")
        self.grad_y = sps.kron(by[1], bx[0], format="csr")
        self.laplacian = (sps.kron(by[0], bx[2]) + sps.kron(by[2], bx[0])).tocsr()

        wx = np.tile(self.parent_weights * sx.h / 2.0, sx.num_elements)
        wy = np.tile(self.parent_weights * sy.h / 2.0, sy.num_elements)
        self.weights = np.kron(wy, wx)

        x1 = (np.arange(sx.num_elements)[:, None] + 0.5 * (self.parent_points[None, :] + 1.0)) * sx.h
        y1 = (np.arange(sy.num_elements)[:, None] + 0.5 * (self.parent_points[None, :] + 1.0)) * sy.h
        xx, yy = np.meshgrid(x1.ravel(), y1.ravel())
        self.points = np.column_stack([xx.ravel(), yy.ravel()])

        mx, my = space.shape
        ex = np.repeat(np.arange(mx), q)
        ey = np.repeat(np.arange(my), q)
        self.point_element = (ey[:, None] * mx + ex[None, :]).ravel()

        self._metric = np.diag([(2.0 / sx.h) ** 2, (2.0 / sy.h) ** 2])
        self._mass = None

    @property
    def num_points(self) -> int:
        return len(self.weights)

    @property
    def jacobian_determinant(self) -> float:
        hx, hy = self.space.h
        return hx * hy / 4.0

    def metric_tensor(self, element=0) -> np.ndarray:
        """
        Metric tensor G = (dxi/dx)^T (dxi/dx) of an element.

        On the uniform Cartesian mesh it is diag((2/h_x)^2, (2/h_y)^2) for every element.
        """
        self.space.element_index(element)
        return self._metric.copy()

    def quadrature_points(self, element) -> List[Tuple[np.ndarray, float]]:
        """Physical positions and combined weights of the Gauss points of one element."""
        ex, ey = self.space.element_index(element)
        flat = ey * self.space.shape[0] + ex
        idx = np.flatnonzero(self.point_element == flat)
        return [(self.points[i].copy(), float(self.weights[i])) for i in idx]

    def element_sum(self, integrand: np.ndarray) -> np.ndarray:
        """Weighted sum of a pointwise integrand over each element (flat element order)."""
        q = self.points_per_axis
        mx, my = self.space.shape
        weighted = (np.asarray(integrand) * self.weights).reshape(my, q, mx, q)
        return weighted.sum(axis=(1, 3)).ravel()

    def integrate(self, integrand: np.ndarray) -> float:
        return float(np.dot(self.weights, integrand))

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """Discrete L2 inner product of two pointwise fields."""
        return float(np.dot(self.weights, np.asarray(a) * np.asarray(b)))

    def weighted(self, factor=1.0) -> sps.dia_matrix:
        """Diagonal matrix of quadrature weights times a scalar or pointwise factor."""
        return sps.diags(self.weights * factor)

    def mass_matrix(self) -> sps.csr_matrix:
        if self._mass is None:
            self._mass = (self.values.T @ self.weighted() @ self.values).tocsr()
        return self._mass

    def stiffness_matrix(self) -> sps.csr_matrix:
        """Diffusion matrix (grad N_i, grad N_j)."""
        W = self.weighted()
        return (self.grad_x.T @ W @ self.grad_x + self.grad_y.T @ W @ self.grad_y).tocsr()

    def convection_operator(self, velocity) -> sps.csr_matrix:
        """Pointwise a . grad as a (points x functions) operator."""
        ax, ay = velocity
        return (ax * self.grad_x + ay * self.grad_y).tocsr()

    def element_tables(self, element=0) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """
        Local basis tables of one element.

        Returns:
            Tuple of weights (nq,), values (nq, n), gradients (nq, n, 2) and Laplacians (nq, n).
        """
        ex, ey = self.space.element_index(element)
        q = self.points_per_axis
        n = (self.space.degree + 1) ** 2
        weights = np.empty(q * q)
        values = np.empty((q * q, n))
        grads = np.empty((q * q, n, 2))
        laps = np.empty((q * q, n))
        detj = self.jacobian_determinant
        for jy, (eta, wy) in enumerate(zip(self.parent_points, self.parent_weights)):
            for jx, (xi, wx) in enumerate(zip(self.parent_points, self.parent_weights)):
                k = jy * q + jx
                values[k], grads[k], laps[k] = self.space.eval_basis((ex, ey), xi, eta)
                weights[k] = wx * wy * detj
        return weights, values, grads, laps
