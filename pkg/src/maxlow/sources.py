"""Seeded generators for smooth, compactly supported source data.

All data derives from the C-infinity cutoff ``exp(1 - 1/(1 - s))`` of the
squared scaled radius ``s = |x - c|^2 / R^2`` times low-order polynomials
with seeded coefficients.  Exactly solenoidal staggered data is produced by
applying the discrete curls to sampled bump potentials, so the divergence
constraints hold to machine precision by the mimetic identities.
"""

from __future__ import annotations

import numpy as np

from .grid import (
    GridDomain,
    Kind,
    StaggeredField,
    discrete_curl,
    discrete_curl_dual,
)

__all__ = [
    "smooth_bump",
    "random_bump_field",
    "solenoidal_sources",
    "generic_sources",
]


def smooth_bump(pts: np.ndarray, center, radius: float) -> np.ndarray:
    """Compactly supported cutoff, 1 at the center, 0 outside the ball."""
    d = np.asarray(pts, dtype=float) - np.asarray(center, dtype=float)
    s = np.sum(d * d, axis=-1) / radius ** 2
    out = np.zeros(s.shape)
    inside = s < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    return out


def random_bump_field(
    grid: GridDomain,
    kind: Kind,
    seed: int,
    center=(0.0, 0.0, 0.0),
    radius: float = 1.0,
    degree: int = 1,
) -> StaggeredField:
    """Bump times a random affine polynomial, sampled per component."""
    rng = np.random.default_rng(seed)
    n_comp = len(grid.shapes(kind))
    coef = rng.standard_normal((n_comp, 1 + 3 * degree)) \
        + 1j * rng.standard_normal((n_comp, 1 + 3 * degree))

    def fn(pts: np.ndarray, axis: int) -> np.ndarray:
        c = coef[axis]
        poly = np.full(len(pts), c[0], dtype=np.complex128)
        if degree >= 1:
            poly = poly + pts @ c[1:4]
        return smooth_bump(pts, center, radius) * poly

    return StaggeredField.from_function(grid, kind, fn)


def solenoidal_sources(
    grid: GridDomain,
    seed: int,
    center=(0.0, 0.0, 0.0),
    radius: float = 1.0,
):
    """Exactly divergence-free source pair (F on edges, G on faces).

    F is the dual curl of a face bump potential (node divergence vanishes
    identically); G is the curl of an edge bump potential (cell divergence
    vanishes identically).
    """
    A_face = random_bump_field(grid, Kind.FACE, seed, center, radius)
    A_edge = random_bump_field(grid, Kind.EDGE, seed + 1, center, radius)
    F = discrete_curl_dual(A_face, None)
    G = discrete_curl(A_edge, None)
    return F, G


def generic_sources(
    grid: GridDomain,
    seed: int,
    center=(0.0, 0.0, 0.0),
    radius: float = 1.0,
):
    """Smooth compact source pair with generically nonzero divergence."""
    F = random_bump_field(grid, Kind.EDGE, seed, center, radius)
    G = random_bump_field(grid, Kind.FACE, seed + 1, center, radius)
    return F, G
