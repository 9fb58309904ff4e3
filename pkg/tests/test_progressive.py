import numpy as np
import pytest

from sgr.mesh import TopologyError, TriangleMesh
from sgr.primitives import icosahedron, icosphere, tetrahedron, torus
from sgr.progressive import _canon, simplify_to_tetrahedron


def canonical_face_set(faces) -> set:
    return {_canon(tuple(f)) for f in np.asarray(faces).tolist()}


class TestSimplify:
    def test_tetrahedron_is_already_minimal(self):
        pm = simplify_to_tetrahedron(tetrahedron())
        assert len(pm.splits) == 0
        assert canonical_face_set(pm.base_faces) == canonical_face_set(
            tetrahedron().faces
        )

    def test_icosahedron_split_count(self):
        pm = simplify_to_tetrahedron(icosahedron())
        assert len(pm.splits) == 12 - 4
        assert len(pm.base_faces) == 4

    def test_replay_identity_icosahedron(self):
        mesh = icosahedron()
        pm = simplify_to_tetrahedron(mesh)
        assert canonical_face_set(pm.replay()) == canonical_face_set(mesh.faces)

    def test_replay_identity_icosphere(self, ico2):
        pm = simplify_to_tetrahedron(ico2)
        assert len(pm.splits) == ico2.vertex_count - 4
        assert canonical_face_set(pm.replay()) == canonical_face_set(ico2.faces)

    def test_torus_rejected(self):
        with pytest.raises(TopologyError, match="genus"):
            simplify_to_tetrahedron(torus())

    def test_open_mesh_rejected(self):
        mesh = TriangleMesh(np.eye(3), [[0, 1, 2]])
        with pytest.raises(TopologyError, match="watertight"):
            simplify_to_tetrahedron(mesh)

    def test_determinism(self, ico2):
        a = simplify_to_tetrahedron(ico2, seed=7)
        b = simplify_to_tetrahedron(ico2, seed=7)
        assert a.base_vertices == b.base_vertices
        assert a.splits == b.splits


class TestVertexSplit:
    def test_ring_is_closed_cycle(self, ico2):
        pm = simplify_to_tetrahedron(ico2)
        for sp in pm.splits:
            ring = sp.ring()
            assert len(ring) == len(set(ring))
            assert len(ring) == len(sp.fine_faces)
            assert sp.new_vertex not in ring

    def test_split_bookkeeping(self, ico2):
        # Each split adds one vertex and two faces.
        pm = simplify_to_tetrahedron(ico2)
        for sp in pm.splits:
            assert len(sp.fine_faces) - len(sp.coarse_faces) == 2
            assert all(sp.new_vertex in f for f in sp.fine_faces)
            assert all(sp.new_vertex not in f for f in sp.coarse_faces)

    def test_intermediate_levels_are_watertight(self, ico2):
        pm = simplify_to_tetrahedron(ico2)
        faces = set(pm.base_faces)
        for sp in pm.splits:
            for f in sp.coarse_faces:
                faces.remove(f)
            for f in sp.fine_faces:
                faces.add(f)
            # Spot-check a few levels (full validation on every level is slow).
            if len(faces) % 40 == 0:
                from sgr.mesh import validate_topology

                f = np.array(sorted(faces))
                used = np.unique(f)
                remap = np.zeros(ico2.vertex_count, dtype=int)
                remap[used] = np.arange(used.size)
                level = TriangleMesh(ico2.vertices[used], remap[f])
                rep = validate_topology(level)
                assert rep.is_watertight and rep.genus == 0
