"""Progressive-mesh simplification: edge collapses down to a tetrahedron.

Half-edge collapses (the removed vertex merges into a surviving neighbor,
positions never move) are ordered by a quadric error multiplied by an
aspect-ratio penalty, so the coarse levels keep well-shaped triangles. The
inverse records (vertex splits) replay the original connectivity exactly.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .mesh import TriangleMesh, TopologyError, validate_topology

Face = tuple[int, int, int]


def _canon(face) -> Face:
    """Rotate so the smallest index comes first; cyclic order preserved."""
    a, b, c = face
    m = min(a, b, c)
    if a == m:
        return (a, b, c)
    if b == m:
        return (b, c, a)
    return (c, a, b)


@dataclass(frozen=True)
class VertexSplit:
    """Inverse of one edge collapse.

    Replaying the split removes `coarse_faces` (the collapsed neighborhood of
    `parent`) and adds `fine_faces` (the original faces incident to
    `new_vertex`). `anchors` are the two ring vertices shared by parent and
    new vertex.
    """

    parent: int
    new_vertex: int
    anchors: tuple[int, int]
    coarse_faces: tuple[Face, ...]
    fine_faces: tuple[Face, ...]

    def ring(self) -> list[int]:
        """Ordered 1-ring of `new_vertex` (CCW seen from outside)."""
        nxt: dict[int, int] = {}
        for f in self.fine_faces:
            a, b, c = f
            if a == self.new_vertex:
                nxt[b] = c
            elif b == self.new_vertex:
                nxt[c] = a
            else:
                nxt[a] = b
        start = min(nxt)
        out = [start]
        cur = nxt[start]
        while cur != start:
            out.append(cur)
            cur = nxt[cur]
        return out


@dataclass(frozen=True)
class ProgressiveMesh:
    """Base tetrahedron plus the vertex-split sequence back to the full mesh."""

    base_vertices: tuple[int, int, int, int]
    base_faces: tuple[Face, ...]
    splits: tuple[VertexSplit, ...]
    source: TriangleMesh

    def replay(self) -> np.ndarray:
        """Apply every split; returns the reconstructed (F, 3) face array."""
        faces = set(self.base_faces)
        for sp in self.splits:
            for f in sp.coarse_faces:
                faces.remove(f)
            for f in sp.fine_faces:
                faces.add(f)
        return np.array(sorted(faces), dtype=np.int64)


_SQRT3_4 = 4.0 * np.sqrt(3.0)


def _face_quality(p0, p1, p2) -> float:
    """Aspect ratio q = Lmax*(L0+L1+L2)/(4*sqrt(3)*A); large for slivers."""
    ax, ay, az = p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]
    bx, by, bz = p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]
    cx, cy, cz = p2[0] - p1[0], p2[1] - p1[1], p2[2] - p1[2]
    e0 = math.sqrt(ax * ax + ay * ay + az * az)
    e1 = math.sqrt(cx * cx + cy * cy + cz * cz)
    e2 = math.sqrt(bx * bx + by * by + bz * bz)
    nx = ay * bz - az * by
    ny = az * bx - ax * bz
    nz = ax * by - ay * bx
    area = 0.5 * math.sqrt(nx * nx + ny * ny + nz * nz)
    if area <= 0.0:
        return np.inf
    return max(e0, e1, e2) * (e0 + e1 + e2) / (_SQRT3_4 * area)


def simplify_to_tetrahedron(mesh: TriangleMesh, seed: int = 0) -> ProgressiveMesh:
    """Collapse a watertight genus-zero mesh down to 4 vertices.

    Raises TopologyError on non-genus-zero input and RuntimeError if no legal
    collapse exists before reaching the tetrahedron (cannot happen on valid
    input; kept as an internal-failure sentinel).
    """
    report = validate_topology(mesh)
    if not (report.is_watertight and report.is_manifold):
        raise TopologyError("input must be a watertight 2-manifold")
    if report.genus != 0:
        raise TopologyError("genus must be zero")
    if mesh.vertex_count < 4:
        raise TopologyError("mesh must have at least 4 vertices")

    verts = mesh.vertices
    faces: set[Face] = {_canon(f) for f in mesh.faces.tolist()}
    incident: dict[int, set[Face]] = {v: set() for v in range(mesh.vertex_count)}
    for f in faces:
        for v in f:
            incident[v].add(f)

    # Per-vertex error quadrics from incident face planes.
    quadric = np.zeros((mesh.vertex_count, 4, 4))
    normals = mesh.face_normals()
    for f, n in zip(mesh.faces, normals):
        d = -float(n @ verts[f[0]])
        plane = np.append(n, d)
        K = np.outer(plane, plane)
        for v in f:
            quadric[v] += K

    rng = np.random.default_rng(seed)
    version = np.zeros(mesh.vertex_count, dtype=np.int64)
    alive = np.ones(mesh.vertex_count, dtype=bool)
    heap: list[tuple[float, float, int, int, int, int]] = []

    def neighbors(v: int) -> set[int]:
        out: set[int] = set()
        for f in incident[v]:
            out.update(f)
        out.discard(v)
        return out

    def collapse_cost(gone: int, keep: int) -> float:
        p = np.append(verts[keep], 1.0)
        err = float(p @ (quadric[gone] + quadric[keep]) @ p)
        worst = 1.0
        for f in incident[gone]:
            if keep in f:
                continue
            idx = [keep if v == gone else v for v in f]
            q = _face_quality(verts[idx[0]], verts[idx[1]], verts[idx[2]])
            worst = max(worst, q)
        if not np.isfinite(worst):
            return np.inf
        return max(err, 0.0) * worst + 1e-12 * worst

    def push_edges(around: set[int]) -> None:
        for g in around:
            if not alive[g]:
                continue
            for k in neighbors(g):
                c = collapse_cost(g, k)
                if np.isfinite(c):
                    heapq.heappush(
                        heap, (c, rng.random(), g, k, version[g], version[k])
                    )

    push_edges(set(np.flatnonzero(alive)))

    splits_rev: list[VertexSplit] = []
    remaining = mesh.vertex_count

    while remaining > 4:
        progressed = False
        while heap:
            cost, _, gone, keep, vg, vk = heapq.heappop(heap)
            if not (alive[gone] and alive[keep]):
                continue
            if version[gone] != vg or version[keep] != vk:
                continue
            shared = [f for f in incident[gone] if keep in f]
            if len(shared) != 2:
                continue
            # Link condition: gone and keep may share only the two anchors.
            anchors = set()
            for f in shared:
                anchors.update(f)
            anchors -= {gone, keep}
            if len(anchors) != 2:
                continue
            if neighbors(gone) & neighbors(keep) != anchors:
                continue
            fine = tuple(sorted(incident[gone]))
            coarse = []
            legal = True
            for f in fine:
                if keep in f:
                    continue
                nf = _canon(tuple(keep if v == gone else v for v in f))
                if nf in faces or nf in coarse:
                    legal = False
                    break
                coarse.append(nf)
            if not legal:
                continue

            for f in fine:
                faces.remove(f)
                for v in f:
                    incident[v].discard(f)
            for f in coarse:
                faces.add(f)
                for v in f:
                    incident[v].add(f)
            quadric[keep] += quadric[gone]
            alive[gone] = False
            remaining -= 1
            a0, a1 = sorted(anchors)
            splits_rev.append(
                VertexSplit(
                    parent=keep,
                    new_vertex=gone,
                    anchors=(a0, a1),
                    coarse_faces=tuple(coarse),
                    fine_faces=fine,
                )
            )
            touched = {keep} | neighbors(keep)
            for v in touched:
                version[v] += 1
            push_edges(touched)
            progressed = True
            break
        if not progressed:
            raise RuntimeError(
                "internal failure: no legal collapse found before reaching a tetrahedron"
            )

    base_vertices = tuple(sorted(int(v) for v in np.flatnonzero(alive)))
    if len(faces) != 4:
        raise RuntimeError("internal failure: base is not a tetrahedron")
    return ProgressiveMesh(
        base_vertices=base_vertices,  # type: ignore[arg-type]
        base_faces=tuple(sorted(faces)),
        splits=tuple(reversed(splits_rev)),
        source=mesh,
    )
