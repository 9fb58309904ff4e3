"""Geometric regularization terms, triangle quality, and Chamfer/F-score.

All metrics are pure and rigid-motion invariant; surface sampling is seeded
and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .mesh import TriangleMesh, MeshError, face_adjacency, uniform_laplacian


@dataclass(frozen=True)
class RegWeights:
    alpha_nor: float = 0.1
    alpha_lap: float = 0.5
    alpha_edg: float = 0.1
    e0_policy: Union[str, float] = "mean_edge_length"

    def __post_init__(self):
        if min(self.alpha_nor, self.alpha_lap, self.alpha_edg) < 0:
            raise ValueError("regularization weights must be >= 0")


@dataclass
class MetricsReport:
    l_nor: Optional[float] = None
    l_lap: Optional[float] = None
    l_edge: Optional[float] = None
    reg_total: Optional[float] = None
    aspect_ratio_mean: Optional[float] = None
    aspect_ratio_max: Optional[float] = None
    chamfer_mm: Optional[float] = None
    f_score_pct: Optional[float] = None

    def to_text(self) -> str:
        lines = []
        for k, v in vars(self).items():
            if v is not None:
                lines.append(f"{k}: {v!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        out = cls()
        for line in text.splitlines():
            if ":" not in line:
                continue
            k, v = line.split(":", 1)
            k = k.strip()
            if hasattr(out, k):
                setattr(out, k, float(v))
        return out


def normals_consistency(mesh: TriangleMesh) -> float:
    """Sum over adjacent face pairs of 1 - cos(angle between normals)."""
    n = mesh.face_normals(normalized=False)
    lens = np.linalg.norm(n, axis=1)
    if np.any(lens == 0.0):
        raise MeshError("zero-area face: undefined normal")
    pairs = face_adjacency(mesh).pairs
    n0 = n[pairs[:, 0]]
    n1 = n[pairs[:, 1]]
    cos = np.einsum("ij,ij->i", n0, n1) / (lens[pairs[:, 0]] * lens[pairs[:, 1]])
    return float(np.sum(1.0 - cos))


def laplacian_smoothing(mesh: TriangleMesh) -> float:
    """Sum over vertices of ||L v||^2 with the uniform Laplacian."""
    L = uniform_laplacian(mesh)
    lv = L @ mesh.vertices
    return float(np.sum(lv * lv))


def _target_edge_length(mesh: TriangleMesh, e0_policy) -> float:
    lengths = np.linalg.norm(
        mesh.vertices[mesh.edges()[:, 0]] - mesh.vertices[mesh.edges()[:, 1]], axis=1
    )
    if e0_policy == "mean_edge_length":
        return float(lengths.mean())
    return float(e0_policy)


def edge_length_reg(mesh: TriangleMesh, e0_policy="mean_edge_length") -> float:
    """(1/E) * sum over edges of (|e| - e0)^2."""
    edges = mesh.edges()
    if edges.shape[0] == 0:
        raise MeshError("mesh has no edges")
    lengths = np.linalg.norm(
        mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1
    )
    e0 = _target_edge_length(mesh, e0_policy)
    return float(np.mean((lengths - e0) ** 2))


def geometric_reg_total(mesh: TriangleMesh, weights: RegWeights = RegWeights()) -> float:
    """alpha_nor * L_nor + alpha_lap * L_lap + alpha_edg * L_edge."""
    return (
        weights.alpha_nor * normals_consistency(mesh)
        + weights.alpha_lap * laplacian_smoothing(mesh)
        + weights.alpha_edg * edge_length_reg(mesh, weights.e0_policy)
    )


def aspect_ratio(mesh: TriangleMesh) -> tuple[np.ndarray, float, float]:
    """q = Lmax * (L0 + L1 + L2) / (4 * sqrt(3) * A) per face, plus mean/max.

    q >= 1, equality only for equilateral triangles; zero-area faces yield
    an inf sentinel.
    """
    v = mesh.vertices
    f = mesh.faces
    L0 = np.linalg.norm(v[f[:, 1]] - v[f[:, 0]], axis=1)
    L1 = np.linalg.norm(v[f[:, 2]] - v[f[:, 1]], axis=1)
    L2 = np.linalg.norm(v[f[:, 0]] - v[f[:, 2]], axis=1)
    area = mesh.face_areas()
    lmax = np.maximum(np.maximum(L0, L1), L2)
    with np.errstate(divide="ignore"):
        q = np.where(
            area > 0.0, lmax * (L0 + L1 + L2) / (4.0 * np.sqrt(3.0) * area), np.inf
        )
    return q, float(np.mean(q)), float(np.max(q))


# ---------------------------------------------------------------------------
# Surface sampling and point-to-surface distance

def sample_surface(mesh: TriangleMesh, count: int, seed: int = 0) -> np.ndarray:
    """Area-uniform surface samples (count, 3), seeded."""
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0.0:
        raise MeshError("degenerate mesh with zero total area")
    rng = np.random.default_rng(seed)
    faces = rng.choice(mesh.face_count, size=count, p=areas / total)
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    tri = mesh.vertices[mesh.faces[faces]]
    return (
        (1.0 - r1)[:, None] * tri[:, 0]
        + (r1 * (1.0 - r2))[:, None] * tri[:, 1]
        + (r1 * r2)[:, None] * tri[:, 2]
    )


def _closest_on_triangles(p, a, b, c) -> np.ndarray:
    """Closest point on triangle (a, b, c) to p; fully vectorized."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    out = np.empty_like(p)
    done = np.zeros(p.shape[0], dtype=bool)

    def assign(mask, value):
        nonlocal done
        m = mask & ~done
        out[m] = value[m]
        done |= m

    assign((d1 <= 0) & (d2 <= 0), a)
    assign((d3 >= 0) & (d4 <= d3), b)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = np.where(d1 != d3, d1 / (d1 - d3), 0.0)
        assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + t_ab[:, None] * ab)
        assign((d6 >= 0) & (d5 <= d6), c)
        t_ac = np.where(d2 != d6, d2 / (d2 - d6), 0.0)
        assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + t_ac[:, None] * ac)
        den_bc = (d4 - d3) + (d5 - d6)
        t_bc = np.where(den_bc != 0, (d4 - d3) / den_bc, 0.0)
        assign(
            (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
            b + t_bc[:, None] * (c - b),
        )
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 1.0 / 3.0)
        w = np.where(denom != 0, vc / denom, 1.0 / 3.0)
    assign(np.ones_like(done), a + v[:, None] * ab + w[:, None] * ac)
    return out


class _SurfaceDistance:
    """Exact point-to-surface distance with KD-tree candidate pruning."""

    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh
        self.tri = mesh.vertices[mesh.faces]
        centroids = self.tri.mean(axis=1)
        self.face_radius = np.linalg.norm(
            self.tri - centroids[:, None, :], axis=2
        ).max(axis=1)
        self.radius_max = float(self.face_radius.max())
        self.tree = cKDTree(centroids)

    def query(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        n = points.shape[0]
        best = np.full(n, np.inf)
        k = min(8, self.mesh.face_count)
        pending = np.arange(n)
        while pending.size:
            dc, fi = self.tree.query(points[pending], k=k)
            if k == 1:
                dc = dc[:, None]
                fi = fi[:, None]
            flat_f = fi.ravel()
            flat_p = np.repeat(points[pending], fi.shape[1], axis=0)
            closest = _closest_on_triangles(
                flat_p,
                self.tri[flat_f, 0],
                self.tri[flat_f, 1],
                self.tri[flat_f, 2],
            )
            d = np.linalg.norm(flat_p - closest, axis=1).reshape(fi.shape)
            dmin = d.min(axis=1)
            best[pending] = np.minimum(best[pending], dmin)
            if k >= self.mesh.face_count:
                break
            # Safe when every farther face's centroid is provably too far.
            unsafe = dc[:, -1] <= best[pending] + self.radius_max
            pending = pending[unsafe]
            k = min(k * 4, self.mesh.face_count)
        return best


def _directed_distances(src: TriangleMesh, dst: TriangleMesh, samples: int, seed: int):
    pts = sample_surface(src, samples, seed)
    return _SurfaceDistance(dst).query(pts)


def chamfer_distance(
    a: TriangleMesh, b: TriangleMesh, samples: int = 100_000, seed: int = 0
) -> float:
    """Symmetric mean point-to-surface distance (same units as the input)."""
    d_ab = _directed_distances(a, b, samples, seed)
    d_ba = _directed_distances(b, a, samples, seed)
    return 0.5 * (float(d_ab.mean()) + float(d_ba.mean()))


def f_score(
    a: TriangleMesh,
    b: TriangleMesh,
    tau: float,
    samples: int = 100_000,
    seed: int = 0,
) -> float:
    """Harmonic mean of precision and recall at threshold tau, in percent."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    precision = float(np.mean(_directed_distances(a, b, samples, seed) <= tau))
    recall = float(np.mean(_directed_distances(b, a, samples, seed) <= tau))
    if precision + recall == 0.0:
        return 0.0
    return 100.0 * 2.0 * precision * recall / (precision + recall)
