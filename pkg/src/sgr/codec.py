"""Baking surface signals into SGR grids and reconstructing meshes.

A grid sample is located in the spherical triangulation of the embedding,
its signal interpolated with spherical barycentric weights, and the grid
reconstructed back into a mesh by the convex hull of the (welded) sphere
samples, which is exactly their spherical Delaunay triangulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import cv2
import numpy as np
from scipy.spatial import ConvexHull, cKDTree

from .equalarea import UniformGrid, sphere_to_square, uniform_grid
from .mesh import TriangleMesh, MeshError
from .parameterize import SphericalEmbedding

KINDS = ("geometry", "texture", "displacement")
_CONTAIN_TOL = 1e-12
_TINY_AREA = 1e-14


@dataclass
class SgrMap:
    """H x W x C grid of surface signals anchored to equal-area sphere samples.

    values[j-1, i-1] holds the sample at grid index (i, j), i along width.
    """

    resolution: tuple[int, int]  # (W, H)
    channels: int
    kind: str
    values: np.ndarray  # (H, W, C)
    quantization: Optional[np.ndarray] = None  # (C, 2) per-channel (min, max)
    grid: Optional[UniformGrid] = None
    source_hash: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown SGR kind: {self.kind!r}")
        if self.kind == "geometry" and self.channels != 3:
            raise ValueError("geometry maps must have 3 channels")
        H, W = self.values.shape[:2]
        if (W, H) != tuple(self.resolution):
            raise ValueError("values shape disagrees with resolution")


@dataclass(frozen=True)
class BarycentricHit:
    face_index: int
    lam: tuple[float, float, float]


class TriangleLocator:
    """Point location over the spherical triangles of an embedding.

    A KD-tree over face centroids prunes candidates; results are identical
    to a brute-force scan (lowest containing face index wins).
    """

    def __init__(self, embedding: SphericalEmbedding):
        if not embedding.is_valid():
            raise ValueError("invalid embedding: flipped spherical triangle")
        self.embedding = embedding
        faces = embedding.source.faces
        s = embedding.positions
        self.tri = s[faces]  # (F, 3, 3)
        # Inward edge normals: containment is dot >= -tol for all three.
        self.edge_normals = np.stack(
            [
                np.cross(self.tri[:, 0], self.tri[:, 1]),
                np.cross(self.tri[:, 1], self.tri[:, 2]),
                np.cross(self.tri[:, 2], self.tri[:, 0]),
            ],
            axis=1,
        )  # (F, 3, 3)
        centroids = self.tri.sum(axis=1)
        centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
        self.centroids = centroids
        self.radius = float(
            np.max(np.linalg.norm(self.tri - centroids[:, None, :], axis=2))
        )
        self.tree = cKDTree(centroids)

    def candidates(self, point: np.ndarray) -> np.ndarray:
        idx = self.tree.query_ball_point(point, self.radius + 1e-9)
        return np.asarray(sorted(idx), dtype=np.int64)


def build_locator(embedding: SphericalEmbedding) -> TriangleLocator:
    return TriangleLocator(embedding)


def _spherical_area(a, b, c) -> np.ndarray:
    """Signed solid angle of spherical triangles (van Oosterom-Strackee)."""
    num = np.einsum("...i,...i->...", a, np.cross(b, c))
    den = (
        1.0
        + np.einsum("...i,...i->...", a, b)
        + np.einsum("...i,...i->...", b, c)
        + np.einsum("...i,...i->...", c, a)
    )
    return 2.0 * np.arctan2(num, den)


def _bary_in_face(point: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Opposite-vertex spherical barycentric weights, clamped + renormalized."""
    a, b, c = tri[0], tri[1], tri[2]
    total = _spherical_area(a, b, c)
    if abs(total) < _TINY_AREA:
        # Gnomonic planar fallback for sub-resolution triangles.
        n = np.cross(b - a, c - a)
        denom = n @ n
        l0 = np.cross(b - point, c - point) @ n / denom
        l1 = np.cross(c - point, a - point) @ n / denom
        lam = np.array([l0, l1, 1.0 - l0 - l1])
    else:
        lam = (
            np.array(
                [
                    _spherical_area(point, b, c),
                    _spherical_area(a, point, c),
                    _spherical_area(a, b, point),
                ]
            )
            / total
        )
    lam = np.clip(lam, 0.0, 1.0)
    s = lam.sum()
    if s <= 0.0:
        return np.full(3, 1.0 / 3.0)
    return lam / s


def locate(locator: TriangleLocator, point) -> BarycentricHit:
    """Containing face (lowest index on ties) and barycentric weights."""
    p = np.asarray(point, dtype=np.float64)
    cand = locator.candidates(p)
    face = _containing_face(locator, p, cand)
    if face < 0:
        # Numerical fallback: the face whose worst edge margin is largest.
        margins = np.min(
            np.einsum("fej,j->fe", locator.edge_normals, p), axis=1
        )
        face = int(np.argmax(margins))
    lam = _bary_in_face(p, locator.tri[face])
    return BarycentricHit(face_index=int(face), lam=tuple(float(x) for x in lam))


def _containing_face(locator, p, cand) -> int:
    if cand.size == 0:
        return -1
    dots = np.einsum("fej,j->fe", locator.edge_normals[cand], p)
    inside = np.all(dots >= -_CONTAIN_TOL, axis=1)
    hits = cand[inside]
    return int(hits.min()) if hits.size else -1


def locate_brute_force(locator: TriangleLocator, point) -> BarycentricHit:
    """Reference scan over all faces; oracle for locator equivalence."""
    p = np.asarray(point, dtype=np.float64)
    dots = np.einsum("fej,j->fe", locator.edge_normals, p)
    inside = np.flatnonzero(np.all(dots >= -_CONTAIN_TOL, axis=1))
    if inside.size:
        face = int(inside.min())
    else:
        face = int(np.argmax(np.min(dots, axis=1)))
    lam = _bary_in_face(p, locator.tri[face])
    return BarycentricHit(face_index=int(face), lam=tuple(float(x) for x in lam))


def _locate_faces_batch(locator: TriangleLocator, pts: np.ndarray) -> np.ndarray:
    """Containing face per point (lowest index on ties), -1 for misses.

    k-NN escalation over face centroids: a row is final once the k-th
    centroid lies beyond the global circumradius, because every containing
    face's centroid is within that radius.
    """
    n_faces = locator.tri.shape[0]
    faces = np.full(pts.shape[0], -1, dtype=np.int64)
    final = np.zeros(pts.shape[0], dtype=bool)
    radius = locator.radius + 1e-9
    pending = np.arange(pts.shape[0])
    k = min(8, n_faces)
    while pending.size:
        dc, fi = locator.tree.query(pts[pending], k=k)
        if k == 1:
            dc, fi = dc[:, None], fi[:, None]
        dots = np.einsum("nkej,nj->nke", locator.edge_normals[fi], pts[pending])
        inside = np.all(dots >= -_CONTAIN_TOL, axis=2)
        covered = (dc[:, -1] > radius) | (k >= n_faces)
        sel = np.where(inside, fi, np.iinfo(np.int64).max).min(axis=1)
        has = inside.any(axis=1)
        done = covered & has
        faces[pending[done]] = sel[done]
        final[pending[covered]] = True
        pending = pending[~covered]
        k = min(k * 4, n_faces)
    return faces


def _bary_batch(pts: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Vectorized `_bary_in_face` over matched (N, 3) points / (N, 3, 3) tris."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    total = _spherical_area(a, b, c)
    small = np.abs(total) < _TINY_AREA
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (
            np.stack(
                [
                    _spherical_area(pts, b, c),
                    _spherical_area(a, pts, c),
                    _spherical_area(a, b, pts),
                ],
                axis=1,
            )
            / total[:, None]
        )
    for i in np.flatnonzero(small):
        lam[i] = _bary_in_face(pts[i], tri[i])
    lam = np.clip(lam, 0.0, 1.0)
    s = lam.sum(axis=1)
    bad = s <= 0.0
    lam[bad] = 1.0 / 3.0
    s[bad] = 1.0
    return lam / s[:, None]


def bake(
    embedding: SphericalEmbedding,
    signal: np.ndarray,
    resolution: int,
    kind: str = "geometry",
) -> SgrMap:
    """Interpolate a per-vertex signal at every equal-area grid sample."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim == 1:
        signal = signal[:, None]
    if signal.shape[0] != embedding.source.vertex_count:
        raise ValueError("signal length must equal vertex count")
    locator = build_locator(embedding)
    grid = uniform_grid(resolution)
    faces = embedding.source.faces
    C = signal.shape[1]
    pts = grid.sphere
    hit_faces = _locate_faces_batch(locator, pts)
    for k in np.flatnonzero(hit_faces < 0):
        # Numerical fallback: face with the largest worst edge margin.
        margins = np.min(
            np.einsum("fej,j->fe", locator.edge_normals, pts[k]), axis=1
        )
        hit_faces[k] = int(np.argmax(margins))
    lam = _bary_batch(pts, locator.tri[hit_faces])
    out = np.einsum("nk,nkc->nc", lam, signal[faces[hit_faces]])
    R = resolution
    values = np.empty((R, R, C))
    rows = grid.ij[:, 1] - 1
    cols = grid.ij[:, 0] - 1
    values[rows, cols] = out
    return SgrMap(
        resolution=(R, R),
        channels=C,
        kind=kind,
        values=values,
        grid=grid,
        source_hash=embedding.source.content_hash(),
    )


@dataclass(frozen=True)
class SparseSgr:
    """Original-vertex mode: per-vertex square/sphere coordinates, no resampling."""

    square: np.ndarray   # (V, 2)
    sphere: np.ndarray   # (V, 3)
    values: np.ndarray   # (V, C) original signal (positions for geometry)
    faces: np.ndarray    # original connectivity


def bake_vertices_only(embedding: SphericalEmbedding, mesh: TriangleMesh) -> SparseSgr:
    """Record each original vertex with its square coordinates; topology kept."""
    if mesh.vertex_count != embedding.source.vertex_count:
        raise ValueError("embedding does not match mesh")
    return SparseSgr(
        square=sphere_to_square(embedding.positions),
        sphere=embedding.positions.copy(),
        values=mesh.vertices.copy(),
        faces=mesh.faces.copy(),
    )


def spherical_delaunay(points: np.ndarray) -> np.ndarray:
    """Delaunay triangulation of unit vectors = their convex hull, CCW-outward."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] < 4:
        raise ValueError("need at least 4 distinct sphere points")
    hull = ConvexHull(points)
    if hull.vertices.shape[0] != points.shape[0]:
        raise RuntimeError("hull dropped a point; inputs not in convex position")
    faces = hull.simplices.astype(np.int64)
    tri = points[faces]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    flip = np.einsum("ij,ij->i", n, tri.mean(axis=1)) < 0.0
    faces[flip] = faces[flip][:, ::-1]
    return faces[np.lexsort((faces[:, 2], faces[:, 1], faces[:, 0]))]


def reconstruct(sgr: SgrMap) -> TriangleMesh:
    """Mesh from a geometry SGR: hull connectivity, positions from G values."""
    if sgr.kind != "geometry":
        raise ValueError("geometry kind required")
    grid = sgr.grid if sgr.grid is not None else uniform_grid(sgr.resolution[0])
    rows = grid.ij[:, 1] - 1
    cols = grid.ij[:, 0] - 1
    samples = sgr.values[rows, cols]  # (N, C) in grid sample order
    D = grid.distinct_count
    sums = np.zeros((D, samples.shape[1]))
    counts = np.zeros(D)
    np.add.at(sums, grid.weld_index, samples)
    np.add.at(counts, grid.weld_index, 1.0)
    positions = sums / counts[:, None]
    faces = spherical_delaunay(grid.distinct_sphere)
    return TriangleMesh(positions, faces)


def center_symmetric_pad(values: np.ndarray) -> np.ndarray:
    """One-pixel border mirroring each edge about its center, corners averaged.

    Center block is copied; the left/right output columns are the source's
    left/right columns flipped vertically, the top/bottom rows the source's
    top/bottom rows flipped horizontally; the four output corners all equal
    the mean of the source's four corners.
    """
    g = np.asarray(values)
    squeeze = g.ndim == 2
    if squeeze:
        g = g[:, :, None]
    H, W, C = g.shape
    out = np.empty((H + 2, W + 2, C), dtype=g.dtype)
    out[1 : H + 1, 1 : W + 1] = g
    out[1 : H + 1, 0] = g[::-1, 0]
    out[1 : H + 1, W + 1] = g[::-1, W - 1]
    out[0, 1 : W + 1] = g[0, ::-1]
    out[H + 1, 1 : W + 1] = g[H - 1, ::-1]
    corner = (g[0, 0] + g[0, W - 1] + g[H - 1, 0] + g[H - 1, W - 1]) / 4.0
    out[0, 0] = out[0, W + 1] = out[H + 1, 0] = out[H + 1, W + 1] = corner
    return out[:, :, 0] if squeeze else out


# ---------------------------------------------------------------------------
# File format: PNG + .meta sidecar

def _meta_path(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".meta")


def write_sgr(sgr: SgrMap, path) -> None:
    """Quantize to PNG (16-bit for geometry, 8-bit otherwise) plus sidecar.

    Channel order is x -> R, y -> G, z -> B; constant channels are stored as
    zeros and flagged in the sidecar.
    """
    path = Path(path)
    depth = 16 if sgr.kind == "geometry" else 8
    maxval = (1 << depth) - 1
    vals = sgr.values
    cmin = vals.min(axis=(0, 1))
    cmax = vals.max(axis=(0, 1))
    quant = np.zeros(vals.shape, dtype=np.uint16 if depth == 16 else np.uint8)
    for c in range(sgr.channels):
        span = cmax[c] - cmin[c]
        if span > 0:
            quant[:, :, c] = np.rint(
                (vals[:, :, c] - cmin[c]) / span * maxval
            ).astype(quant.dtype)
    img = quant[:, :, ::-1]  # RGB -> BGR for the PNG encoder
    if not cv2.imwrite(str(path), img):
        raise MeshError(f"cannot write {path}")
    lines = [
        f"kind: {sgr.kind}",
        f"width: {sgr.resolution[0]}",
        f"height: {sgr.resolution[1]}",
        f"channels: {sgr.channels}",
        f"depth: {depth}",
    ]
    for c in range(sgr.channels):
        lines.append(f"min{c}: {float(cmin[c])!r}")
        lines.append(f"max{c}: {float(cmax[c])!r}")
        if cmax[c] == cmin[c]:
            lines.append(f"constant{c}: true")
    if sgr.source_hash:
        lines.append(f"source_hash: {sgr.source_hash}")
    _meta_path(path).write_text("\n".join(lines) + "\n")
    sgr.quantization = np.stack([cmin, cmax], axis=1)


def read_sgr(path) -> SgrMap:
    """Read a PNG + sidecar pair and reverse the quantization."""
    path = Path(path)
    meta_file = _meta_path(path)
    if not meta_file.exists():
        raise MeshError("missing quantization metadata")
    meta: dict[str, str] = {}
    for line in meta_file.read_text().splitlines():
        if ":" in line:
            k, v = line.split(":", 1)
            meta[k.strip()] = v.strip()
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise MeshError(f"cannot read {path}")
    if img.ndim == 2:
        img = img[:, :, None]
    img = img[:, :, ::-1]  # BGR -> RGB
    kind = meta["kind"]
    depth = int(meta["depth"])
    maxval = (1 << depth) - 1
    C = int(meta["channels"])
    vals = np.empty(img.shape[:2] + (C,))
    quant = np.zeros((C, 2))
    for c in range(C):
        cmin = float(meta[f"min{c}"])
        cmax = float(meta[f"max{c}"])
        quant[c] = (cmin, cmax)
        if cmax > cmin:
            vals[:, :, c] = img[:, :, c].astype(np.float64) / maxval * (cmax - cmin) + cmin
        else:
            vals[:, :, c] = cmin
    W, H = int(meta["width"]), int(meta["height"])
    return SgrMap(
        resolution=(W, H),
        channels=C,
        kind=kind,
        values=vals,
        quantization=quant,
        source_hash=meta.get("source_hash"),
    )
