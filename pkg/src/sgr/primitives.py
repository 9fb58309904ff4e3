"""Canonical test solids: platonic meshes, icospheres, and a torus."""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh


def tetrahedron() -> TriangleMesh:
    """Regular tetrahedron inscribed in the unit sphere, CCW-outward faces."""
    v = np.array(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64
    ) / np.sqrt(3.0)
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return TriangleMesh(v, f)


def octahedron() -> TriangleMesh:
    v = np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
        dtype=np.float64,
    )
    f = np.array(
        [
            [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
            [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
        ]
    )
    return TriangleMesh(v, f)


def icosahedron() -> TriangleMesh:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    v /= np.linalg.norm(v[0])
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return TriangleMesh(v, f)


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> TriangleMesh:
    """Icosahedron subdivided `subdivisions` times, projected onto a sphere.

    V = 10 * 4**n + 2: n=2 -> 162, n=3 -> 642, n=4 -> 2562, n=5 -> 10242.
    """
    mesh = icosahedron()
    verts = list(mesh.vertices)
    faces = mesh.faces
    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}
        new_faces = []

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = np.array(new_faces)
    v = np.array(verts)
    v *= radius / np.linalg.norm(v, axis=1, keepdims=True)
    return TriangleMesh(v, faces)


def deformed_icosphere(
    subdivisions: int = 2, noise: float = 0.2, seed: int = 0
) -> TriangleMesh:
    """Icosphere with seeded radial perturbation, |dr| <= noise."""
    base = icosphere(subdivisions)
    rng = np.random.default_rng(seed)
    r = 1.0 + noise * rng.uniform(-1.0, 1.0, size=base.vertex_count)
    return TriangleMesh(base.vertices * r[:, None], base.faces)


def torus(major_segments: int = 16, minor_segments: int = 8,
          major_radius: float = 2.0, minor_radius: float = 0.6) -> TriangleMesh:
    """Genus-1 triangulated torus (for negative tests)."""
    verts = []
    for i in range(major_segments):
        a = 2 * np.pi * i / major_segments
        for j in range(minor_segments):
            b = 2 * np.pi * j / minor_segments
            r = major_radius + minor_radius * np.cos(b)
            verts.append([r * np.cos(a), r * np.sin(a), minor_radius * np.sin(b)])
    faces = []
    for i in range(major_segments):
        for j in range(minor_segments):
            a = i * minor_segments + j
            b = i * minor_segments + (j + 1) % minor_segments
            c = ((i + 1) % major_segments) * minor_segments + j
            d = ((i + 1) % major_segments) * minor_segments + (j + 1) % minor_segments
            faces.append([a, c, b])
            faces.append([b, c, d])
    return TriangleMesh(np.array(verts), np.array(faces))
