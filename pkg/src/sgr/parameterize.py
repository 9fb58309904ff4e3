"""Spherical parameterization by coarse-to-fine stretch minimization.

The mesh is simplified to a tetrahedron, the tetrahedron is embedded on the
unit sphere, and vertices are re-inserted inside the kernel of their ring
polygon, optimizing stretch locally after each insertion and globally in
periodic sweeps. Validity (no flipped spherical triangle) is preserved at
every step because flipped or degenerate triangles carry infinite energy.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .mesh import TriangleMesh, MeshError, save_mesh, load_mesh
from .progressive import ProgressiveMesh, VertexSplit, simplify_to_tetrahedron

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class ParamConfig:
    epsilon: float = 1e-3          # inverse-stretch regularization weight
    p: int = 4                     # inverse-stretch exponent (even, >= 2)
    directions_per_pass: int = 8   # random great circles per vertex optimization
    local_tolerance: float = 1e-6  # arc-length tolerance of the line search
    global_sweep_growth_factor: float = 1.5
    global_convergence_threshold: float = 1e-5
    rng_seed: int = 0
    global_sweeps_enabled: bool = True
    max_sweep_passes: int = 10

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.p < 2 or self.p % 2 != 0:
            raise ValueError("p must be an even integer >= 2")
        if self.global_sweep_growth_factor <= 1.0:
            raise ValueError("global_sweep_growth_factor must be > 1")


@dataclass
class SphericalEmbedding:
    """Unit-sphere position per mesh vertex, sharing the mesh connectivity."""

    positions: np.ndarray  # (V, 3) unit vectors
    source: TriangleMesh

    def orientation_dets(self, faces: Optional[np.ndarray] = None) -> np.ndarray:
        """det[s_a, s_b, s_c] per face; all must be > 0 for a valid embedding."""
        f = self.source.faces if faces is None else np.asarray(faces)
        s = self.positions
        return np.einsum("ij,ij->i", s[f[:, 0]], np.cross(s[f[:, 1]], s[f[:, 2]]))

    def is_valid(self, faces: Optional[np.ndarray] = None) -> bool:
        return bool(np.all(self.orientation_dets(faces) > 0.0))


@dataclass(frozen=True)
class StretchStats:
    l2_stretch: float
    linf_stretch: float
    efficiency: float
    per_face_singular_values: np.ndarray  # (F, 2) = (Gamma, gamma)
    energy: float
    regularization: float
    sweep_energies: Optional[list] = None
    step_min_det: Optional[list] = None


@dataclass(frozen=True)
class KernelRegion:
    """Intersection of open hemispheres bounded by the ring polygon edges."""

    half_space_normals: np.ndarray  # (m, 3) unit vectors
    is_empty: bool
    point: Optional[np.ndarray]  # strict interior representative when feasible


# ---------------------------------------------------------------------------
# Per-face stretch

def _flatten_2x2(tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangular 2x2 edge matrices of triangles (F, 3, 3).

    Returns (M, twice_area) where M[:,0,0]=|e1|, M[:,0,1]=e2.b1,
    M[:,1,1]=e2.b2 and det M = 2*area (> 0 for non-degenerate triangles).
    """
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    n = np.cross(e1, e2)
    twice_area = np.linalg.norm(n, axis=1)
    l1 = np.linalg.norm(e1, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        b1 = e1 / l1[:, None]
        b2 = np.cross(n, e1)
        b2 /= np.linalg.norm(b2, axis=1)[:, None]
    M = np.zeros((tris.shape[0], 2, 2))
    M[:, 0, 0] = l1
    M[:, 0, 1] = np.einsum("ij,ij->i", e2, b1)
    M[:, 1, 1] = np.einsum("ij,ij->i", e2, b2)
    return M, twice_area


def _singular_values(mesh_tris: np.ndarray, sph_tris: np.ndarray):
    """(Gamma, gamma) of the per-face linear map chordal-sphere -> mesh."""
    Mm, area2_m = _flatten_2x2(mesh_tris)
    Ms, area2_s = _flatten_2x2(sph_tris)
    # J = Mm @ inv(Ms); both upper triangular.
    with np.errstate(divide="ignore", invalid="ignore"):
        a = Mm[:, 0, 0] / Ms[:, 0, 0]
        d = Mm[:, 1, 1] / Ms[:, 1, 1]
        b = (Mm[:, 0, 1] - a * Ms[:, 0, 1]) / Ms[:, 1, 1]
    frob2 = a * a + b * b + d * d
    det = a * d
    disc = np.sqrt(np.maximum(frob2 * frob2 - 4.0 * det * det, 0.0))
    Gamma = np.sqrt(0.5 * (frob2 + disc))
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = np.where(Gamma > 0, np.abs(det) / Gamma, 0.0)
    bad = (area2_m <= 0) | (area2_s <= 0)
    Gamma[bad] = np.inf
    gamma[bad] = 0.0
    return Gamma, gamma


def face_stretch(mesh_triangle, sphere_triangle) -> tuple[float, float]:
    """Singular values (Gamma >= gamma > 0) of the flattened-triangle map."""
    mt = np.asarray(mesh_triangle, dtype=np.float64).reshape(1, 3, 3)
    st = np.asarray(sphere_triangle, dtype=np.float64).reshape(1, 3, 3)
    _, a2m = _flatten_2x2(mt)
    _, a2s = _flatten_2x2(st)
    if a2m[0] <= 0 or a2s[0] <= 0:
        raise ValueError("zero-area triangle")
    Gamma, gamma = _singular_values(mt, st)
    return float(Gamma[0]), float(gamma[0])


def stretch_energy(
    mesh: TriangleMesh, embedding: SphericalEmbedding, cfg: ParamConfig
) -> StretchStats:
    """Area-weighted spherical L2 stretch plus the inverse-stretch regularizer.

    A flipped-face embedding reports +inf energy (sentinel), with efficiency 0.
    """
    faces = mesh.faces
    mesh_tris = mesh.vertices[faces]
    sph_tris = embedding.positions[faces]
    dets = embedding.orientation_dets()
    areas = mesh.face_areas()
    total_area = float(areas.sum())
    if np.any(dets <= 0.0):
        sv = np.full((faces.shape[0], 2), np.nan)
        return StretchStats(
            l2_stretch=np.inf,
            linf_stretch=np.inf,
            efficiency=0.0,
            per_face_singular_values=sv,
            energy=np.inf,
            regularization=np.inf,
        )
    Gamma, gamma = _singular_values(mesh_tris, sph_tris)
    main = float(np.sum(areas * 0.5 * (Gamma**2 + gamma**2)))
    l2 = np.sqrt(main / total_area)
    reg = regularization_term(total_area, Gamma, gamma, cfg)
    efficiency = (total_area / FOUR_PI) / (l2 * l2)
    return StretchStats(
        l2_stretch=float(l2),
        linf_stretch=float(Gamma.max()),
        efficiency=float(efficiency),
        per_face_singular_values=np.stack([Gamma, gamma], axis=1),
        energy=main + reg,
        regularization=reg,
    )


def regularization_term(total_area, Gamma, gamma, cfg: ParamConfig) -> float:
    """eps * (A_M / 4pi)^(p/2 + 1) * sum over faces of inverse stretch^p."""
    if cfg.epsilon == 0.0:
        return 0.0
    scale = (total_area / FOUR_PI) ** (cfg.p / 2 + 1)
    with np.errstate(divide="ignore"):
        inv = np.where(gamma > 0, 1.0 / gamma, np.inf)
    return float(cfg.epsilon * scale * np.sum(inv**cfg.p))


# ---------------------------------------------------------------------------
# Kernel of a spherical polygon

def polygon_kernel(ring) -> KernelRegion:
    """Kernel of the spherical polygon with ordered ring vertices (m, 3).

    Half-space normals are n_e = normalize(r_e x r_{e+1}); feasibility is
    decided by a small linear program maximizing the worst margin.
    """
    pts = np.asarray(ring, dtype=np.float64)
    if pts.shape[0] < 3:
        raise ValueError("ring must have at least 3 points")
    nxt = np.roll(pts, -1, axis=0)
    normals = np.cross(pts, nxt)
    lens = np.linalg.norm(normals, axis=1)
    if np.any(lens < 1e-12):
        raise ValueError("degenerate ring edge (identical or antipodal points)")
    normals /= lens[:, None]
    point = _kernel_point(normals)
    return KernelRegion(
        half_space_normals=normals, is_empty=point is None, point=point
    )


def _max_margin(normals: np.ndarray) -> tuple[float, Optional[np.ndarray]]:
    """Best worst-case margin over the half-space cone and its argmax."""
    m = normals.shape[0]
    # Variables (x, y, z, t): maximize t subject to n.x >= t, |x_i| <= 1.
    A_ub = np.hstack([-normals, np.ones((m, 1))])
    c = np.array([0.0, 0.0, 0.0, -1.0])
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=np.zeros(m),
        bounds=[(-1, 1), (-1, 1), (-1, 1), (None, 2)],
        method="highs",
    )
    if not res.success:
        return -np.inf, None
    return float(res.x[3]), res.x[:3]


def _kernel_point(normals: np.ndarray) -> Optional[np.ndarray]:
    """Max-margin interior direction, or None when the cone is empty."""
    t, x = _max_margin(normals)
    if x is None or t <= 1e-9:
        return None
    nrm = np.linalg.norm(x)
    if nrm < 1e-12:
        return None
    return x / nrm


# ---------------------------------------------------------------------------
# Base embedding and vertex insertion

_TETRA_DIRECTIONS = np.array(
    [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64
) / np.sqrt(3.0)


def embed_base(pm: ProgressiveMesh) -> SphericalEmbedding:
    """Place the base tetrahedron at the regular tetrahedron positions.

    Orientation is matched to the base connectivity so that every spherical
    triangle satisfies det[s_a, s_b, s_c] > 0. Deterministic.
    """
    if len(pm.base_vertices) != 4 or len(pm.base_faces) != 4:
        raise ValueError("progressive mesh base is not a tetrahedron")
    positions = np.zeros((pm.source.vertex_count, 3))
    for vid, pos in zip(pm.base_vertices, _TETRA_DIRECTIONS):
        positions[vid] = pos
    emb = SphericalEmbedding(positions=positions, source=pm.source)
    dets = emb.orientation_dets(np.array(pm.base_faces))
    if np.all(dets < 0.0):
        positions[:, 0] *= -1.0  # mirror flips all orientations
    elif not np.all(dets > 0.0):
        raise RuntimeError("base connectivity is not consistently oriented")
    return emb


def insert_vertex(
    embedding: SphericalEmbedding, split: VertexSplit
) -> SphericalEmbedding:
    """Place the split's new vertex strictly inside its ring kernel.

    An empty kernel signals a broken prior embedding and raises ValueError.
    """
    ring_ids = split.ring()
    ring = embedding.positions[ring_ids]
    kernel = polygon_kernel(ring)
    if kernel.is_empty:
        raise ValueError("empty kernel: prior embedding is not valid")
    centroid = ring.sum(axis=0)
    nrm = np.linalg.norm(centroid)
    pos = None
    if nrm > 1e-12:
        cand = centroid / nrm
        if np.min(kernel.half_space_normals @ cand) > 1e-9:
            pos = cand
    if pos is None:
        pos = kernel.point
    out = SphericalEmbedding(
        positions=embedding.positions.copy(), source=embedding.source
    )
    out.positions[split.new_vertex] = pos
    return out


# ---------------------------------------------------------------------------
# Local vertex optimization

class _State:
    """Mutable optimization state over the current (coarse) face set."""

    def __init__(self, mesh: TriangleMesh, positions: np.ndarray, cfg: ParamConfig):
        self.mesh = mesh
        self.positions = positions
        self.cfg = cfg
        self.incident: dict[int, list[tuple]] = {}
        self._mesh_cache: dict[tuple, tuple] = {}  # face -> (M 2x2, area)
        self.total_area = 0.0

    def add_face(self, f: tuple) -> None:
        for v in f:
            self.incident.setdefault(v, []).append(f)
        self.total_area += self._mesh_face(f)[1]

    def remove_face(self, f: tuple) -> None:
        for v in f:
            self.incident[v].remove(f)
        self.total_area -= self._mesh_face(f)[1]

    def _mesh_face(self, f: tuple):
        got = self._mesh_cache.get(f)
        if got is None:
            tri = self.mesh.vertices[list(f)].reshape(1, 3, 3)
            M, a2 = _flatten_2x2(tri)
            got = (M[0], 0.5 * float(a2[0]))
            self._mesh_cache[f] = got
        return got

    def neighbors(self, vertex: int) -> set[int]:
        out: set[int] = set()
        for f in self.incident.get(vertex, []):
            out.update(f)
        out.discard(vertex)
        return out

    def vertex_system(self, vertex: int):
        """Per-incident-face data with the moving vertex rotated to slot 2.

        Rotating a face cyclically leaves the stretch singular values
        unchanged, so the mesh-side 2x2 matrices can be cached per rotated
        face while the sphere side is recomputed from the moving position.
        """
        faces = self.incident.get(vertex, [])
        rot = []
        for f in faces:
            a, b, c = f
            if c == vertex:
                rot.append((a, b, c))
            elif a == vertex:
                rot.append((b, c, a))
            else:
                rot.append((c, a, b))
        data = [self._mesh_face(r) for r in rot]
        Mm = np.stack([M for M, _ in data]) if data else np.zeros((0, 2, 2))
        areas = np.array([ar for _, ar in data])
        pq = np.array([(r[0], r[1]) for r in rot], dtype=np.int64).reshape(-1, 2)
        return pq, Mm[:, 0, 0], Mm[:, 0, 1], Mm[:, 1, 1], areas

    def reg_scale(self) -> float:
        if self.cfg.epsilon == 0.0:
            return 0.0
        return self.cfg.epsilon * (self.total_area / FOUR_PI) ** (self.cfg.p / 2 + 1)


class _LocalEnergy:
    """Batched stretch energy of one vertex's star as the vertex moves.

    The two fixed vertices of every incident face are frozen at construction,
    so evaluating K candidate positions is a handful of (K, F) array ops.
    """

    def __init__(self, state: _State, vertex: int):
        pq, Mm00, Mm01, Mm11, self.areas = state.vertex_system(vertex)
        self.face_count = pq.shape[0]
        P = state.positions[pq[:, 0]]
        Q = state.positions[pq[:, 1]]
        self.e1 = Q - P
        self.l1 = np.linalg.norm(self.e1, axis=1)
        self.b1 = self.e1 / self.l1[:, None]
        self.P = P
        self.cross_pq = np.cross(P, Q)  # orientation: det = V . (P x Q)
        self.a = Mm00 / self.l1  # J[0,0] is independent of the moving vertex
        self.Mm01 = Mm01
        self.Mm11 = Mm11
        self.reg_scale = state.reg_scale()
        self.p = state.cfg.p

    def __call__(self, cands: np.ndarray) -> np.ndarray:
        """Energies (K,) for candidate unit positions (K, 3)."""
        V = np.atleast_2d(cands)
        dets = V @ self.cross_pq.T  # (K, F)
        e2 = V[:, None, :] - self.P[None]
        e2x, e2y, e2z = e2[:, :, 0], e2[:, :, 1], e2[:, :, 2]
        e1x, e1y, e1z = self.e1[:, 0], self.e1[:, 1], self.e1[:, 2]
        nx = e1y * e2z - e1z * e2y
        ny = e1z * e2x - e1x * e2z
        nz = e1x * e2y - e1y * e2x
        nn = np.sqrt(nx * nx + ny * ny + nz * nz)
        with np.errstate(divide="ignore", invalid="ignore"):
            b1 = self.b1
            Ms01 = e2x * b1[:, 0] + e2y * b1[:, 1] + e2z * b1[:, 2]
            Ms11 = nn / self.l1[None]
            a = self.a[None]
            d = self.Mm11 / Ms11
            b = (self.Mm01[None] - a * Ms01) / Ms11
            frob2 = a * a + b * b + d * d
            det = a * d
            energy = 0.5 * (self.areas[None] * frob2).sum(axis=1)
            if self.reg_scale > 0.0:
                disc = np.sqrt(np.maximum(frob2 * frob2 - 4.0 * det * det, 0.0))
                Gamma2 = 0.5 * (frob2 + disc)
                inv_gamma2 = Gamma2 / (det * det)
                energy += self.reg_scale * (inv_gamma2 ** (self.p // 2)).sum(axis=1)
        bad = np.any((dets <= 0.0) | (nn <= 0.0), axis=1) | ~np.isfinite(energy)
        energy[bad] = np.inf
        return energy


_COARSE_THETAS = np.concatenate(
    [0.8 * 0.5**k * np.array([1.0, -1.0]) for k in range(8)]
)


def _refine_theta(f, thetas, fvals, tol: float):
    """Shrink the bracket around the best sample, batch-evaluating interior
    points, then polish with one parabolic fit."""
    order = np.argsort(thetas)
    thetas, fvals = thetas[order], fvals[order]
    k = int(np.argmin(fvals))
    lo = thetas[max(k - 1, 0)]
    hi = thetas[min(k + 1, thetas.size - 1)]
    tb, fb = thetas[k], fvals[k]
    for _ in range(10):
        if hi - lo <= tol:
            break
        probes = np.linspace(lo, hi, 6)[1:-1]
        pv = f(probes)
        ts = np.concatenate([[lo, tb, hi], probes])
        vs = np.concatenate([[np.inf, fb, np.inf], pv])
        order = np.argsort(ts)
        ts, vs = ts[order], vs[order]
        k = int(np.argmin(vs))
        lo = ts[max(k - 1, 0)]
        hi = ts[min(k + 1, ts.size - 1)]
        tb, fb = ts[k], vs[k]
    # Parabolic fit through the final bracket.
    fl, fh = f(np.array([lo, hi]))
    if not (np.isfinite(fl) and np.isfinite(fh)):
        return tb, fb
    denom = (tb - lo) * (fb - fh) - (tb - hi) * (fb - fl)
    if denom != 0.0:
        t = tb - 0.5 * ((tb - lo) ** 2 * (fb - fh) - (tb - hi) ** 2 * (fb - fl)) / denom
        if lo < t < hi:
            ft = float(f(np.array([t]))[0])
            if ft < fb:
                return t, ft
    return tb, fb


def _optimize_vertex_state(
    state: _State, vertex: int, rng: np.random.Generator
) -> float:
    """Great-circle searches in random directions; returns arc moved.

    Each direction is scanned coarsely, then bracketed and minimized by
    parabolic refinement. Only strictly improving candidates are accepted, so
    the local (and hence total) stretch energy never increases.
    """
    cfg = state.cfg
    energy = _LocalEnergy(state, vertex)
    if energy.face_count == 0:
        return 0.0
    positions = state.positions
    x0 = positions[vertex].copy()
    best_pos = x0
    best_e = float(energy(x0[None])[0])
    for _ in range(cfg.directions_per_pass):
        d = rng.standard_normal(3)
        d -= (d @ best_pos) * best_pos
        nrm = np.linalg.norm(d)
        if nrm < 1e-12:
            continue
        d /= nrm
        xc = best_pos

        def f(thetas, xc=xc, d=d):
            cand = np.cos(thetas)[:, None] * xc + np.sin(thetas)[:, None] * d
            return energy(cand)

        fvals = f(_COARSE_THETAS)
        if fvals.min() >= best_e:
            continue
        theta, fb = _refine_theta(
            f,
            np.concatenate([[0.0], _COARSE_THETAS]),
            np.concatenate([[best_e], fvals]),
            cfg.local_tolerance,
        )
        if fb < best_e and theta != 0.0:
            cand = np.cos(theta) * xc + np.sin(theta) * d
            cand /= np.linalg.norm(cand)
            fe = float(energy(cand[None])[0])
            if fe < best_e:
                best_e = fe
                best_pos = cand
    positions[vertex] = best_pos
    return float(np.arccos(np.clip(best_pos @ x0, -1.0, 1.0)))


# Reaches far below the optimizer's coarse scan: a pinched neighborhood may
# admit valid moves only at arcs of ~1e-9 radians.
_OPEN_THETAS = np.concatenate(
    [0.6 * 0.5**k * np.array([1.0, -1.0]) for k in range(34)]
)


def _best_probe(normals: np.ndarray) -> tuple[float, np.ndarray]:
    """Direction maximizing the worst half-space margin, by discrete search
    over the normals, their negations, and pairwise sums."""
    pair_sums = (normals[None, :, :] + normals[:, None, :]).reshape(-1, 3)
    cands = np.concatenate([normals, -normals, pair_sums])
    lens = np.linalg.norm(cands, axis=1)
    cands = cands[lens > 1e-12] / lens[lens > 1e-12, None]
    vals = (cands @ normals.T).min(axis=1)
    j = int(np.argmax(vals))
    return float(vals[j]), cands[j]


def _open_ring_kernel(
    state: _State, ring_ids: tuple, rng: np.random.Generator, rounds: int = 40
) -> bool:
    """Nudge ring vertices until the spherical ring polygon has a kernel.

    Hill-climbs the worst half-space margin along the LP's least-infeasible
    direction; every move must keep the moved vertex's incident faces
    positively oriented (finite local energy), so the embedding stays valid.
    """
    positions = state.positions
    ids = list(ring_ids)
    m = len(ids)
    for _ in range(rounds):
        pts = positions[ids]
        nxt = np.roll(pts, -1, axis=0)
        normals = np.cross(pts, nxt)
        lens = np.linalg.norm(normals, axis=1)
        if np.any(lens < 1e-12):
            return False
        normals /= lens[:, None]
        if _kernel_point(normals) is not None:
            return True
        # The max-margin LP degenerates to x = 0 on an empty cone, so find a
        # least-infeasible direction by discrete search over normal combos.
        _, probe = _best_probe(normals)
        probes = probe[None, :]
        improved = False
        for k, v in enumerate(ids):
            # Edges k-1 and k touch vertex v; the rest are fixed this move.
            others = [e for e in range(m) if e not in ((k - 1) % m, k)]
            fixed_min = (
                np.min(normals[others] @ probes.T, axis=0)
                if others else np.full(2, np.inf)
            )
            touching = np.min(normals[[(k - 1) % m, k]] @ probes.T, axis=0)
            current = float(np.max(np.minimum(fixed_min, touching)))
            energy = _LocalEnergy(state, v)
            prev_p = positions[ids[(k - 1) % m]]
            next_p = positions[ids[(k + 1) % m]]
            best_pos, best_val = None, current
            for _ in range(4):
                d = rng.standard_normal(3)
                d -= (d @ positions[v]) * positions[v]
                dn = np.linalg.norm(d)
                if dn < 1e-12:
                    continue
                d /= dn
                cands = (
                    np.cos(_OPEN_THETAS)[:, None] * positions[v]
                    + np.sin(_OPEN_THETAS)[:, None] * d
                )
                cands /= np.linalg.norm(cands, axis=1, keepdims=True)
                valid = np.isfinite(energy(cands))
                n1 = np.cross(np.broadcast_to(prev_p, cands.shape), cands)
                n2 = np.cross(cands, np.broadcast_to(next_p, cands.shape))
                l1 = np.linalg.norm(n1, axis=1)
                l2 = np.linalg.norm(n2, axis=1)
                valid &= (l1 > 1e-12) & (l2 > 1e-12)
                with np.errstate(divide="ignore", invalid="ignore"):
                    per_probe = np.minimum(
                        (n1 @ probes.T) / l1[:, None],
                        (n2 @ probes.T) / l2[:, None],
                    )
                    vals = np.minimum(fixed_min[None, :], per_probe).max(axis=1)
                vals[~valid] = -np.inf
                j = int(np.argmax(vals))
                if vals[j] > best_val + 1e-15:
                    best_val = float(vals[j])
                    best_pos = cands[j]
            if best_pos is not None:
                positions[v] = best_pos
                improved = True
                break  # normals are stale after a move; restart the round
        if not improved:
            return False
    return False


def optimize_vertex(
    embedding: SphericalEmbedding,
    vertex_index: int,
    mesh: TriangleMesh,
    cfg: ParamConfig,
) -> SphericalEmbedding:
    """One local-optimization pass for a single vertex of a full embedding."""
    out = SphericalEmbedding(
        positions=embedding.positions.copy(), source=embedding.source
    )
    state = _State(mesh, out.positions, cfg)
    for f in map(tuple, mesh.faces.tolist()):
        state.add_face(f)
    rng = np.random.default_rng(cfg.rng_seed)
    _optimize_vertex_state(state, vertex_index, rng)
    return out


# ---------------------------------------------------------------------------
# Full pipeline

def parameterize(
    mesh: TriangleMesh, cfg: ParamConfig = ParamConfig(), collect_trace: bool = False
) -> tuple[SphericalEmbedding, StretchStats]:
    """Simplify, embed the base, replay splits with kernel insertion and
    local optimization, and run periodic global sweeps.

    Returns the final embedding and its stretch statistics. With
    collect_trace the stats carry per-sweep energies and the minimum
    orientation determinant recorded after every insertion step.
    """
    pm = simplify_to_tetrahedron(mesh, cfg.rng_seed)
    emb = embed_base(pm)
    positions = emb.positions
    rng = np.random.default_rng(cfg.rng_seed + 1)

    state = _State(mesh, positions, cfg)
    for f in pm.base_faces:
        state.add_face(f)
    active = list(pm.base_vertices)
    current_faces: set = set(pm.base_faces)

    sweep_energies: list[float] = []
    step_min_det: list[float] = []

    def faces_array():
        return np.array(sorted(current_faces), dtype=np.int64)

    def record_step():
        if collect_trace:
            step_min_det.append(float(np.min(emb.orientation_dets(faces_array()))))

    def total_energy() -> float:
        fa = faces_array()
        dets = emb.orientation_dets(fa)
        if np.any(dets <= 0.0):
            return np.inf
        Gamma, gamma = _singular_values(mesh.vertices[fa], positions[fa])
        areas = 0.5 * np.linalg.norm(
            np.cross(
                mesh.vertices[fa[:, 1]] - mesh.vertices[fa[:, 0]],
                mesh.vertices[fa[:, 2]] - mesh.vertices[fa[:, 0]],
            ),
            axis=1,
        )
        main = float(np.sum(areas * 0.5 * (Gamma**2 + gamma**2)))
        return main + regularization_term(state.total_area, Gamma, gamma, cfg)

    def global_sweep() -> None:
        threshold = cfg.global_convergence_threshold
        changes = {v: np.inf for v in active}
        dirty = set(active)
        for _ in range(cfg.max_sweep_passes):
            order = sorted(dirty, key=lambda v: (-changes.get(v, 0.0), v))
            max_change = 0.0
            next_dirty: set[int] = set()
            for v in order:
                moved = _optimize_vertex_state(state, v, rng)
                changes[v] = moved
                max_change = max(max_change, moved)
                if moved >= threshold:
                    # A real move invalidates the whole 1-ring.
                    next_dirty.add(v)
                    next_dirty.update(state.neighbors(v))
            if max_change < threshold:
                break
            dirty = next_dirty

    next_sweep_at = max(8, int(np.ceil(4 * cfg.global_sweep_growth_factor)))
    record_step()

    for sp in pm.splits:
        for f in sp.coarse_faces:
            current_faces.remove(f)
            state.remove_face(f)
        for attempt in range(6):
            try:
                emb2 = insert_vertex(
                    SphericalEmbedding(positions=positions, source=mesh), sp
                )
                break
            except ValueError:
                if attempt == 5:
                    raise
                # The ring kernel can close up on badly distorted
                # neighborhoods; nudge the coarse ring until it reopens.
                for f in sp.coarse_faces:
                    current_faces.add(f)
                    state.add_face(f)
                for v in sp.ring():
                    _optimize_vertex_state(state, v, rng)
                _open_ring_kernel(state, sp.ring(), rng)
                for f in sp.coarse_faces:
                    current_faces.remove(f)
                    state.remove_face(f)
        positions[sp.new_vertex] = emb2.positions[sp.new_vertex]
        for f in sp.fine_faces:
            current_faces.add(f)
            state.add_face(f)
        active.append(sp.new_vertex)

        _optimize_vertex_state(state, sp.new_vertex, rng)
        for v in sp.ring():
            _optimize_vertex_state(state, v, rng)
        record_step()

        if cfg.global_sweeps_enabled and len(active) >= next_sweep_at:
            if collect_trace:
                sweep_energies.append(total_energy())
            global_sweep()
            if collect_trace:
                sweep_energies.append(total_energy())
            next_sweep_at = int(np.ceil(next_sweep_at * cfg.global_sweep_growth_factor))

    if cfg.global_sweeps_enabled:
        if collect_trace:
            sweep_energies.append(total_energy())
        global_sweep()
        if collect_trace:
            sweep_energies.append(total_energy())

    final = SphericalEmbedding(positions=positions, source=mesh)
    norms = np.linalg.norm(final.positions, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise RuntimeError("internal failure: non-unit embedding position")
    if not final.is_valid():
        raise RuntimeError("internal failure: flipped spherical triangle")
    stats = stretch_energy(mesh, final, cfg)
    if collect_trace:
        stats = StretchStats(
            l2_stretch=stats.l2_stretch,
            linf_stretch=stats.linf_stretch,
            efficiency=stats.efficiency,
            per_face_singular_values=stats.per_face_singular_values,
            energy=stats.energy,
            regularization=stats.regularization,
            sweep_energies=sweep_energies,
            step_min_det=step_min_det,
        )
    return final, stats


# ---------------------------------------------------------------------------
# Embedding serialization

_EMB_MAGIC = b"SGREMB01"


def save_embedding(embedding: SphericalEmbedding, path) -> None:
    """Write the embedding as PLY plus a binary sidecar with the mesh hash."""
    path = Path(path)
    as_mesh = TriangleMesh(embedding.positions, embedding.source.faces)
    save_mesh(as_mesh, path, format="ply")
    digest = bytes.fromhex(embedding.source.content_hash())
    sidecar = path.with_suffix(path.suffix + ".emb")
    sidecar.write_bytes(_EMB_MAGIC + struct.pack("<I", len(digest)) + digest)


def load_embedding(path, source: TriangleMesh) -> SphericalEmbedding:
    """Read an embedding PLY; verifies the sidecar hash against `source`."""
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".emb")
    if not sidecar.exists():
        raise MeshError(f"missing embedding sidecar: {sidecar}")
    raw = sidecar.read_bytes()
    if not raw.startswith(_EMB_MAGIC):
        raise MeshError(f"bad embedding sidecar: {sidecar}")
    (n,) = struct.unpack_from("<I", raw, len(_EMB_MAGIC))
    digest = raw[len(_EMB_MAGIC) + 4 : len(_EMB_MAGIC) + 4 + n].hex()
    if digest != source.content_hash():
        raise MeshError("embedding does not match mesh")
    as_mesh = load_mesh(path, format="ply")
    if as_mesh.vertex_count != source.vertex_count:
        raise MeshError("embedding does not match mesh")
    return SphericalEmbedding(positions=as_mesh.vertices, source=source)
