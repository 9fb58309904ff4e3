"""Triangle mesh data model, OBJ/PLY I/O, topology validation, and shared operators.

Positions are treated as millimeters for metric reporting; no unit conversion
is ever applied. Faces are CCW-outward; loaders do not reorient.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import sparse


class MeshError(Exception):
    """Malformed mesh data or unreadable/unwritable mesh file."""


class TopologyError(MeshError):
    """Mesh violates a topological precondition (manifoldness, genus, ...)."""


class TriangleMesh:
    """Indexed triangle surface: vertices (V, 3) float64 and faces (F, 3) int64.

    Immutable after construction; all operations on it are pure functions.
    """

    def __init__(self, vertices, faces):
        v = np.ascontiguousarray(np.asarray(vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(faces, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be (V, 3), got {v.shape}")
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"faces must be (F, 3), got {f.shape}")
        if v.shape[0] == 0:
            raise MeshError("empty mesh: no vertices")
        if f.size and (f.min() < 0 or f.max() >= v.shape[0]):
            raise MeshError("face references missing vertex")
        if f.size and (
            np.any(f[:, 0] == f[:, 1])
            or np.any(f[:, 1] == f[:, 2])
            or np.any(f[:, 0] == f[:, 2])
        ):
            raise MeshError("degenerate face: repeated vertex index")
        v.setflags(write=False)
        f.setflags(write=False)
        self.vertices = v
        self.faces = f

    @property
    def vertex_count(self) -> int:
        return self.vertices.shape[0]

    @property
    def face_count(self) -> int:
        return self.faces.shape[0]

    def edges(self) -> np.ndarray:
        """Unique undirected edges as a sorted (E, 2) int array."""
        he = self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        return np.unique(np.sort(he, axis=1), axis=0)

    def face_normals(self, normalized: bool = True) -> np.ndarray:
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        if normalized:
            lens = np.linalg.norm(n, axis=1, keepdims=True)
            with np.errstate(invalid="ignore"):
                n = np.where(lens > 0, n / lens, n)
        return n

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals(normalized=False), axis=1)

    def content_hash(self) -> str:
        """SHA-256 over canonical vertex/face bytes; stable across load/save."""
        h = hashlib.sha256()
        h.update(self.vertices.tobytes())
        h.update(self.faces.tobytes())
        return h.hexdigest()

    def __eq__(self, other) -> bool:
        if not isinstance(other, TriangleMesh):
            return NotImplemented
        return (
            self.vertices.shape == other.vertices.shape
            and self.faces.shape == other.faces.shape
            and np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.faces, other.faces)
        )

    def __repr__(self) -> str:
        return f"TriangleMesh(V={self.vertex_count}, F={self.face_count})"


@dataclass(frozen=True)
class TopologyReport:
    vertex_count: int
    edge_count: int
    face_count: int
    is_watertight: bool
    is_manifold: bool
    genus: Optional[int]
    boundary_edge_count: int

    @property
    def euler_characteristic(self) -> int:
        return self.vertex_count - self.edge_count + self.face_count


@dataclass(frozen=True)
class FaceAdjacency:
    """Unordered (face, face) pairs sharing an edge, each listed once."""

    pairs: np.ndarray  # (P, 2) int64


def validate_topology(mesh: TriangleMesh) -> TopologyReport:
    """Classify a mesh as watertight / manifold and derive its genus.

    A mesh is reported manifold only when every undirected edge carries at
    most two halfedges and halfedges of shared edges run in opposite
    directions (consistent CCW orientation). Genus comes from the Euler
    characteristic and is None when the mesh is open or non-manifold.
    """
    he = mesh.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    und = np.sort(he, axis=1)
    edges, inverse, counts = np.unique(
        und, axis=0, return_inverse=True, return_counts=True
    )
    edge_count = edges.shape[0]
    boundary = int(np.sum(counts == 1))
    manifold = bool(np.all(counts <= 2))
    if manifold:
        # Consistent orientation: no directed halfedge may repeat.
        directed = np.unique(he, axis=0)
        if directed.shape[0] != he.shape[0]:
            manifold = False
    watertight = manifold and boundary == 0
    genus: Optional[int] = None
    if watertight and manifold:
        chi = mesh.vertex_count - edge_count + mesh.face_count
        if (2 - chi) % 2 == 0:
            genus = (2 - chi) // 2
    return TopologyReport(
        vertex_count=mesh.vertex_count,
        edge_count=edge_count,
        face_count=mesh.face_count,
        is_watertight=watertight,
        is_manifold=manifold,
        genus=genus,
        boundary_edge_count=boundary,
    )


def face_adjacency(mesh: TriangleMesh) -> FaceAdjacency:
    """Pairs of faces sharing an edge. Raises on a 3+-face edge."""
    he = mesh.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    und = np.sort(he, axis=1)
    face_of = np.repeat(np.arange(mesh.face_count), 3)
    order = np.lexsort((und[:, 1], und[:, 0]))
    und = und[order]
    face_of = face_of[order]
    same = np.all(und[1:] == und[:-1], axis=1)
    # A run of k identical edges means k incident faces.
    run_len = np.diff(np.flatnonzero(np.concatenate(([True], ~same, [True]))))
    if np.any(run_len > 2):
        raise TopologyError("non-manifold edge with 3 or more incident faces")
    starts = np.flatnonzero(np.concatenate(([True], ~same)))
    paired = starts[run_len == 2]
    pairs = np.stack([face_of[paired], face_of[paired + 1]], axis=1)
    pairs = np.sort(pairs, axis=1)
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    return FaceAdjacency(pairs=pairs)


def vertex_neighbors(mesh: TriangleMesh) -> list[np.ndarray]:
    """Sorted neighbor index array per vertex."""
    he = mesh.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    und = np.unique(np.sort(he, axis=1), axis=0)
    nbrs: list[list[int]] = [[] for _ in range(mesh.vertex_count)]
    for a, b in und:
        nbrs[a].append(b)
        nbrs[b].append(a)
    return [np.array(sorted(n), dtype=np.int64) for n in nbrs]


def uniform_laplacian(mesh: TriangleMesh) -> sparse.csr_matrix:
    """Uniform (graph) Laplacian L = I - D^-1 A; rows sum to zero.

    Raises on isolated vertices (degree zero).
    """
    he = mesh.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    und = np.unique(np.sort(he, axis=1), axis=0)
    n = mesh.vertex_count
    rows = np.concatenate([und[:, 0], und[:, 1]])
    cols = np.concatenate([und[:, 1], und[:, 0]])
    adj = sparse.csr_matrix(
        (np.ones(rows.shape[0]), (rows, cols)), shape=(n, n)
    )
    deg = np.asarray(adj.sum(axis=1)).ravel()
    if np.any(deg == 0):
        raise MeshError("isolated vertex: degree zero")
    inv_deg = sparse.diags(1.0 / deg)
    return (sparse.identity(n, format="csr") - inv_deg @ adj).tocsr()


# ---------------------------------------------------------------------------
# File I/O: OBJ (ASCII) and PLY (ascii / binary little-endian)

def load_mesh(path, format: Optional[str] = None) -> TriangleMesh:
    """Load an OBJ or PLY file; polygons are fan-triangulated, indices 0-based."""
    path = Path(path)
    fmt = format or path.suffix.lstrip(".").lower()
    if fmt == "obj":
        return _load_obj(path)
    if fmt == "ply":
        return _load_ply(path)
    raise MeshError(f"unsupported mesh format: {fmt!r}")


def save_mesh(mesh: TriangleMesh, path, format: Optional[str] = None) -> None:
    """Write OBJ (text) or PLY (binary little-endian, double precision)."""
    path = Path(path)
    fmt = format or path.suffix.lstrip(".").lower()
    try:
        if fmt == "obj":
            _save_obj(mesh, path)
        elif fmt == "ply":
            _save_ply(mesh, path)
        else:
            raise MeshError(f"unsupported mesh format: {fmt!r}")
    except OSError as exc:
        raise MeshError(f"cannot write {path}: {exc}") from exc


def _load_obj(path: Path) -> TriangleMesh:
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    try:
        text = path.read_text()
    except OSError as exc:
        raise MeshError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise MeshError(f"{path}:{lineno}: malformed vertex line")
            try:
                verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError as exc:
                raise MeshError(f"{path}:{lineno}: bad vertex coordinate") from exc
        elif parts[0] == "f":
            try:
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            except ValueError as exc:
                raise MeshError(f"{path}:{lineno}: bad face index") from exc
            if len(idx) < 3:
                raise MeshError(f"{path}:{lineno}: face with fewer than 3 vertices")
            for k in range(1, len(idx) - 1):
                faces.append((idx[0], idx[k], idx[k + 1]))
    if not verts:
        raise MeshError(f"{path}: empty mesh")
    if faces and max(max(f) for f in faces) >= len(verts):
        raise MeshError("face references missing vertex")
    if faces and min(min(f) for f in faces) < 0:
        raise MeshError("face references missing vertex")
    return TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64))


def _save_obj(mesh: TriangleMesh, path: Path) -> None:
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.9g} {y:.9g} {z:.9g}")
    for a, b, c in mesh.faces:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    path.write_text("\n".join(lines) + "\n")


_PLY_TYPES = {
    "char": "b", "int8": "b",
    "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h",
    "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i",
    "uint": "I", "uint32": "I",
    "float": "f", "float32": "f",
    "double": "d", "float64": "d",
}


def _load_ply(path: Path) -> TriangleMesh:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise MeshError(f"cannot read {path}: {exc}") from exc
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise MeshError(f"{path}: not a PLY file")
    nl = raw.find(b"\n", end)
    header = raw[:nl].decode("ascii", errors="replace")
    body = raw[nl + 1:]

    fmt = None
    elements: list[tuple[str, int, list]] = []  # (name, count, props)
    for line in header.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property" and elements:
            if parts[1] == "list":
                elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
            else:
                elements[-1][2].append(("scalar", parts[1], parts[2]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshError(f"{path}: unsupported PLY format {fmt!r}")

    verts = None
    faces: list[tuple[int, ...]] = []
    if fmt == "ascii":
        tokens = body.decode("ascii").split()
        pos = 0
        for name, count, props in elements:
            if name == "vertex":
                cols = [p[2] for p in props if p[0] == "scalar"]
                width = len(cols)
                data = np.array(
                    tokens[pos:pos + count * width], dtype=np.float64
                ).reshape(count, width)
                pos += count * width
                verts = data[:, [cols.index("x"), cols.index("y"), cols.index("z")]]
            elif name == "face":
                for _ in range(count):
                    n = int(tokens[pos]); pos += 1
                    poly = [int(t) for t in tokens[pos:pos + n]]
                    pos += n
                    for k in range(1, n - 1):
                        faces.append((poly[0], poly[k], poly[k + 1]))
            else:
                for _ in range(count):
                    for p in props:
                        if p[0] == "list":
                            n = int(tokens[pos]); pos += 1 + n
                        else:
                            pos += 1
    else:
        offset = 0
        for name, count, props in elements:
            if name == "vertex":
                codes = [_PLY_TYPES[p[1]] for p in props if p[0] == "scalar"]
                cols = [p[2] for p in props if p[0] == "scalar"]
                rec = struct.Struct("<" + "".join(codes))
                data = np.array(
                    [rec.unpack_from(body, offset + i * rec.size) for i in range(count)],
                    dtype=np.float64,
                )
                offset += count * rec.size
                verts = data[:, [cols.index("x"), cols.index("y"), cols.index("z")]]
            elif name == "face":
                for _ in range(count):
                    (p0,) = props[:1]
                    cnt_code = _PLY_TYPES[p0[1]]
                    idx_code = _PLY_TYPES[p0[2]]
                    n = struct.unpack_from("<" + cnt_code, body, offset)[0]
                    offset += struct.calcsize(cnt_code)
                    poly = struct.unpack_from("<" + idx_code * n, body, offset)
                    offset += struct.calcsize(idx_code) * n
                    for k in range(1, n - 1):
                        faces.append((poly[0], poly[k], poly[k + 1]))
            else:
                codes = "".join(_PLY_TYPES[p[1]] for p in props if p[0] == "scalar")
                offset += count * struct.calcsize("<" + codes)
    if verts is None or len(verts) == 0:
        raise MeshError(f"{path}: empty mesh")
    farr = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if farr.size and farr.max() >= len(verts):
        raise MeshError("face references missing vertex")
    return TriangleMesh(verts, farr)


def _save_ply(mesh: TriangleMesh, path: Path) -> None:
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {mesh.vertex_count}\n"
        "property double x\n"
        "property double y\n"
        "property double z\n"
        f"element face {mesh.face_count}\n"
        "property list uchar int32 vertex_indices\n"
        "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
        counts = np.full((mesh.face_count, 1), 3, dtype=np.uint8)
        idx = np.ascontiguousarray(mesh.faces, dtype="<i4")
        rec = np.zeros(mesh.face_count, dtype=[("n", "u1"), ("v", "<i4", (3,))])
        rec["n"] = counts.ravel()
        rec["v"] = idx
        fh.write(rec.tobytes())
