"""Equal-area bijection between the unit square and the unit sphere.

Octahedral layout: the centered square (u, v) = (2s-1, 2t-1) is cut into
eight triangles. The four inner triangles (|u| + |v| <= 1) cover the northern
hemisphere, the four outer ones fold down to the southern hemisphere with the
z component negated. Fractional area is preserved exactly: a square region of
area a maps to spherical area 4*pi*a.

Branch table (phi measured from +x):
    quadrant u >= 0, v >= 0:  phi =        pi/4 * (1 + (|v|-|u|)/r)
    quadrant u <  0, v >= 0:  phi = pi   - pi/4 * (1 + (|v|-|u|)/r)
    quadrant u <  0, v <  0:  phi = pi   + pi/4 * (1 + (|v|-|u|)/r)
    quadrant u >= 0, v <  0:  phi = 2*pi - pi/4 * (1 + (|v|-|u|)/r)
with r = |u| + |v| inside the diamond and r = 2 - |u| - |v| outside, then
x = cos(phi) * r * sqrt(2 - r^2), y = sin(phi) * r * sqrt(2 - r^2),
z = +-(1 - r^2). At r = 0 (the poles) phi is fixed to 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

WELD_TOLERANCE = 1e-12


def square_to_sphere(st) -> np.ndarray:
    """Map points of the unit square (..., 2) to unit vectors (..., 3)."""
    st = np.asarray(st, dtype=np.float64)
    scalar = st.ndim == 1
    st = np.atleast_2d(st)
    u = 2.0 * st[:, 0] - 1.0
    v = 2.0 * st[:, 1] - 1.0
    au, av = np.abs(u), np.abs(v)
    inner = au + av <= 1.0
    r = np.where(inner, au + av, 2.0 - au - av)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi1 = np.where(r > 0.0, 0.25 * np.pi * (1.0 + (av - au) / np.where(r > 0, r, 1.0)), 0.0)
    phi = np.where(
        u >= 0.0,
        np.where(v >= 0.0, phi1, 2.0 * np.pi - phi1),
        np.where(v >= 0.0, np.pi - phi1, np.pi + phi1),
    )
    rho = r * np.sqrt(np.maximum(2.0 - r * r, 0.0))
    out = np.empty((st.shape[0], 3))
    out[:, 0] = np.cos(phi) * rho
    out[:, 1] = np.sin(phi) * rho
    out[:, 2] = np.where(inner, 1.0 - r * r, -(1.0 - r * r))
    return out[0] if scalar else out


def sphere_to_square(xyz) -> np.ndarray:
    """Analytic inverse of `square_to_sphere` for unit vectors (..., 3).

    All four square corners are preimages of the south pole; it resolves to
    the canonical corner (1, 1).
    """
    xyz = np.asarray(xyz, dtype=np.float64)
    scalar = xyz.ndim == 1
    xyz = np.atleast_2d(xyz)
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    r = np.sqrt(np.maximum(1.0 - np.abs(z), 0.0))
    phi = np.arctan2(y, x)
    phi = np.where(phi < 0.0, phi + 2.0 * np.pi, phi)
    q = np.clip((phi // (0.5 * np.pi)).astype(np.int64), 0, 3)
    phi1 = np.select(
        [q == 0, q == 1, q == 2],
        [phi, np.pi - phi, phi - np.pi],
        default=2.0 * np.pi - phi,
    )
    d = r * (4.0 * phi1 / np.pi - 1.0)  # |v| - |u|
    total = np.where(z >= 0.0, r, 2.0 - r)  # |u| + |v|
    au = 0.5 * (total - d)
    av = 0.5 * (total + d)
    u = np.where((q == 1) | (q == 2), -au, au)
    v = np.where(q >= 2, -av, av)
    out = np.empty((xyz.shape[0], 2))
    out[:, 0] = 0.5 * (u + 1.0)
    out[:, 1] = 0.5 * (v + 1.0)
    return out[0] if scalar else out


@dataclass(frozen=True)
class UniformGrid:
    """Equal-area grid samples u_ij = (i/W, j/H) for i, j in [1, W]."""

    resolution: int
    ij: np.ndarray        # (N, 2) int, 1-based grid indices
    square: np.ndarray    # (N, 2) square points
    sphere: np.ndarray    # (N, 3) unit vectors
    weld_index: np.ndarray  # (N,) id of the distinct sphere point per sample
    distinct_sphere: np.ndarray  # (D, 3) representative unit vectors

    @property
    def sample_count(self) -> int:
        return self.ij.shape[0]

    @property
    def distinct_count(self) -> int:
        return self.distinct_sphere.shape[0]


def uniform_grid(resolution: int) -> UniformGrid:
    """Lift the R x R grid onto the sphere and weld duplicate samples.

    Samples on the square boundary are glued center-symmetrically by the
    octahedral map, so a fraction of them coincide on the sphere; duplicates
    within WELD_TOLERANCE share one id in `weld_index`.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    R = resolution
    i, j = np.meshgrid(np.arange(1, R + 1), np.arange(1, R + 1), indexing="ij")
    ij = np.stack([i.ravel(), j.ravel()], axis=1)
    square = ij / float(R)
    sphere = square_to_sphere(square)

    tree = cKDTree(sphere)
    pairs = tree.query_pairs(WELD_TOLERANCE, output_type="ndarray")
    parent = np.arange(sphere.shape[0])

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            # Lowest sample index is the representative.
            lo, hi = (ra, rb) if ra < rb else (rb, ra)
            parent[hi] = lo
    roots = np.array([find(k) for k in range(sphere.shape[0])])
    uniq, weld_index = np.unique(roots, return_inverse=True)
    return UniformGrid(
        resolution=R,
        ij=ij,
        square=square,
        sphere=sphere,
        weld_index=weld_index,
        distinct_sphere=sphere[uniq],
    )
