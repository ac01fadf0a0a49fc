"""Uniform B-spline knots and Cox-de Boor basis evaluation.

Every edge function in a KAN layer is a weighted sum of the basis functions
defined here. Inputs outside ``[domain_min, domain_max]`` are clamped to the
nearest boundary before evaluation, so basis values stay bounded and the
derivative with respect to ``x`` is zero outside the domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Uniformly spaced knots extended ``degree`` steps past each domain end."""

    domain_min: float
    domain_max: float
    grid_size: int
    degree: int
    knots: np.ndarray = field(repr=False)

    @property
    def step(self) -> float:
        return (self.domain_max - self.domain_min) / self.grid_size

    @property
    def n_basis(self) -> int:
        return self.grid_size + self.degree

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnotVector):
            return NotImplemented
        return (
            self.domain_min == other.domain_min
            and self.domain_max == other.domain_max
            and self.grid_size == other.grid_size
            and self.degree == other.degree
        )

    def __hash__(self) -> int:
        return hash((self.domain_min, self.domain_max, self.grid_size, self.degree))


def build_knots(domain_min: float, domain_max: float, grid_size: int, degree: int) -> KnotVector:
    """Build the ``G + 2k + 1`` knots for ``G`` intervals and degree ``k``.

    The interior knots come from :func:`numpy.linspace`, so ``knots[k]`` and
    ``knots[G + k]`` are the domain bounds exactly.
    """
    if not (math.isfinite(domain_min) and math.isfinite(domain_max)):
        raise ValueError("spline domain bounds must be finite")
    if not domain_min < domain_max:
        raise ValueError(f"inverted spline domain [{domain_min}, {domain_max}]")
    if int(grid_size) != grid_size or grid_size < 1:
        raise ValueError(f"grid_size must be a positive integer, got {grid_size}")
    if int(degree) != degree or degree < 0:
        raise ValueError(f"degree must be a nonnegative integer, got {degree}")
    grid_size, degree = int(grid_size), int(degree)

    h = (domain_max - domain_min) / grid_size
    interior = np.linspace(domain_min, domain_max, grid_size + 1)
    below = domain_min - h * np.arange(degree, 0, -1)
    above = domain_max + h * np.arange(1, degree + 1)
    knots = np.concatenate([below, interior, above])
    knots.flags.writeable = False
    return KnotVector(float(domain_min), float(domain_max), grid_size, degree, knots)


class NonFiniteInput(ValueError):
    pass


def _prepare(x, kv: KnotVector) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("spline inputs must be finite")
    return x, np.clip(x, kv.domain_min, kv.domain_max)


def _basis_table(xc: np.ndarray, kv: KnotVector, degree: int) -> np.ndarray:
    """Cox-de Boor values of every degree-``degree`` function on the full knot set.

    Returns an array of shape ``xc.shape + (len(knots) - 1 - degree,)``.
    ``xc`` must already be clamped into the domain.
    """
    t = kv.knots
    n_int = len(t) - 1
    # the last domain cell is closed on the right so x == domain_max is covered
    cell = np.searchsorted(t, xc, side="right") - 1
    cell = np.clip(cell, kv.degree, kv.grid_size + kv.degree - 1)

    table = np.zeros(xc.shape + (n_int,))
    np.put_along_axis(table, cell[..., None], 1.0, axis=-1)

    xe = xc[..., None]
    for d in range(1, degree + 1):
        m = n_int - d
        left = (xe - t[:m]) / (t[d : d + m] - t[:m])
        right = (t[d + 1 : d + 1 + m] - xe) / (t[d + 1 : d + 1 + m] - t[1 : 1 + m])
        table = left * table[..., :m] + right * table[..., 1 : m + 1]
    return table


def basis_values(x, kv: KnotVector) -> np.ndarray:
    """Evaluate ``B_1(x) .. B_{G+k}(x)``; output shape is ``x.shape + (G + k,)``."""
    _, xc = _prepare(x, kv)
    return _basis_table(xc, kv, kv.degree)


def basis_derivatives(x, kv: KnotVector) -> np.ndarray:
    """``dB_m/dx`` via degree reduction; zero wherever ``x`` was clamped."""
    x, xc = _prepare(x, kv)
    k = kv.degree
    if k == 0:
        return np.zeros(x.shape + (kv.n_basis,))
    lower = _basis_table(xc, kv, k - 1)
    t = kv.knots
    m = kv.n_basis
    deriv = k * (
        lower[..., :m] / (t[k : k + m] - t[:m])
        - lower[..., 1 : m + 1] / (t[k + 1 : k + 1 + m] - t[1 : 1 + m])
    )
    outside = (x < kv.domain_min) | (x > kv.domain_max)
    return np.where(outside[..., None], 0.0, deriv)


def basis_and_derivatives(x, kv: KnotVector) -> tuple[np.ndarray, np.ndarray]:
    return basis_values(x, kv), basis_derivatives(x, kv)
