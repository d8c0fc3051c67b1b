"""
The rotating-block benchmark: a smoothed square profile transported once through the
periodic unit square by a diagonal velocity.
"""

import logging
from typing import Tuple

import numpy as np

from cdlab.spline_space import SplineSpace2D

logger = logging.getLogger(__name__)

MODEL_VELOCITY = (1.0, 1.0)
MODEL_KAPPA = 5e-4
MODEL_CFL = 0.5
MODEL_END_TIME = 1.0
MODEL_SNAPSHOT_TIMES = (0.0, 0.25, 0.625, 1.0)


class BlockIC:
    """
    Product profile H(|x - 1/2|) H(|y - 1/2|) with

        H(z) = 1                           z <= l0
               1 - (z - l0)^2 / (2 hc^2)   l0 < z <= l1
               (l2 - z)^2 / (2 hc^2)       l1 < z <= l2
               0                           l2 < z

    and l0 = n hc, l1 = (n+1) hc, l2 = (n+2) hc. The profile is a C1 piecewise quadratic
    whose breaks lie on the lines of a mesh with spacing hc.
    """

    def __init__(self, n: int = 2, h_c: float = 1.0 / 16.0, center: Tuple[float, float] = (0.5, 0.5)):
        if n < 0:
            raise ValueError(f"Plateau index must be non-negative, got {n}")
        if h_c <= 0.0:
            raise ValueError(f"Coarse spacing must be positive, got {h_c}")
        self.n = n
        self.h_c = float(h_c)
        self.center = center
        self.l0 = n * h_c
        self.l1 = (n + 1) * h_c
        self.l2 = (n + 2) * h_c

    def profile(self, z: np.ndarray) -> np.ndarray:
        z = np.abs(np.asarray(z, dtype=float))
        h2 = 2.0 * self.h_c ** 2
        return np.select(
            [z <= self.l0, z <= self.l1, z <= self.l2],
            [np.ones_like(z), 1.0 - (z - self.l0) ** 2 / h2, (self.l2 - z) ** 2 / h2],
            default=0.0,
        )

    def __call__(self, x, y) -> np.ndarray:
        return self.profile(np.asarray(x) - self.center[0]) * self.profile(np.asarray(y) - self.center[1])

    def breakpoints(self) -> np.ndarray:
        offsets = np.array([self.l0, self.l1, self.l2])
        return np.concatenate([self.center[0] - offsets, self.center[0] + offsets])

    def exactly_representable(self, space: SplineSpace2D) -> bool:
        """Whether all profile breaks lie on mesh lines of a quadratic space."""
        if space.degree < 2:
            return False
        for s, c in ((space.space_x, self.center[0]), (space.space_y, self.center[1])):
            offsets = np.array([self.l0, self.l1, self.l2])
            breaks = np.concatenate([c - offsets, c + offsets]) / s.h
            if not np.allclose(breaks, np.round(breaks), atol=1e-9):
                return False
        return True

    def to_dict(self) -> dict:
        return {"type": "block", "n": self.n, "h_c": self.h_c}


class ConstantIC:
    """Spatially constant initial condition."""

    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def __call__(self, x, y) -> np.ndarray:
        return np.full(np.shape(x), self.value)

    def exactly_representable(self, space: SplineSpace2D) -> bool:
        return True

    def to_dict(self) -> dict:
        return {"type": "constant", "value": self.value}


def block_ic_value(ic: BlockIC, x) -> float:
    """Value of the block profile at a point x = (x, y)."""
    return float(ic(x[0], x[1]))


def make_initial_condition(spec: dict):
    """Build an initial condition from its JSON description."""
    kind = spec.get("type", "block")
    if kind == "block":
        return BlockIC(int(spec.get("n", 2)), float(spec.get("h_c", 1.0 / 16.0)))
    if kind == "constant":
        return ConstantIC(float(spec.get("value", 1.0)))
    raise ValueError(f"Unknown initial condition type '{kind}'")


def peak_location(space: SplineSpace2D, coefficients: np.ndarray, samples_per_element: int = 4) -> np.ndarray:
    """Position of the maximum of a spline field sampled on a refined grid."""
    mx, my = space.shape
    x = np.linspace(0.0, space.space_x.length, samples_per_element * mx, endpoint=False)
    y = np.linspace(0.0, space.space_y.length, samples_per_element * my, endpoint=False)
    values = space.evaluate(coefficients, x, y)
    iy, ix = np.unravel_index(np.argmax(values), values.shape)
    return np.array([x[ix], y[iy]])


def profile_center(space: SplineSpace2D, coefficients: np.ndarray, level: float = 0.5,
                   samples_per_element: int = 4) -> np.ndarray:
    """
    Periodic centroid of the region where the field exceeds ``level`` times its maximum.

    A plateau has no unique maximum, so transport checks compare centroids.
    """
    mx, my = space.shape
    lengths = (space.space_x.length, space.space_y.length)
    x = np.linspace(0.0, lengths[0], samples_per_element * mx, endpoint=False)
    y = np.linspace(0.0, lengths[1], samples_per_element * my, endpoint=False)
    values = space.evaluate(coefficients, x, y)
    mask = values >= level * values.max()
    yy, xx = np.meshgrid(y, x, indexing="ij")
    center = []
    for coord, length in ((xx, lengths[0]), (yy, lengths[1])):
        angle = 2.0 * np.pi * coord[mask] / length
        mean = np.arctan2(np.sin(angle).sum(), np.cos(angle).sum())
        center.append(np.mod(mean, 2.0 * np.pi) * length / (2.0 * np.pi))
    return np.array(center)


def periodic_distance(a: np.ndarray, b: np.ndarray, lengths=(1.0, 1.0)) -> np.ndarray:
    """Componentwise distance on the periodic box."""
    d = np.abs(np.asarray(a) - np.asarray(b))
    lengths = np.asarray(lengths)
    return np.minimum(d, lengths - d)
