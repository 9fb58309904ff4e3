import numpy as np
import pytest

from sgr.mesh import MeshError
from sgr.parameterize import (
    ParamConfig,
    SphericalEmbedding,
    embed_base,
    face_stretch,
    insert_vertex,
    load_embedding,
    optimize_vertex,
    parameterize,
    polygon_kernel,
    save_embedding,
    stretch_energy,
)
from sgr.primitives import deformed_icosphere, icosphere, tetrahedron, torus
from sgr.progressive import VertexSplit, simplify_to_tetrahedron


def ring_on_cap(angles, z=0.5):
    r = np.sqrt(1.0 - z * z)
    pts = np.stack(
        [r * np.cos(angles), r * np.sin(angles), np.full_like(angles, z)], axis=1
    )
    return pts


class TestEmbedBase:
    def test_regular_tetrahedron_geometry(self):
        pm = simplify_to_tetrahedron(tetrahedron())
        emb = embed_base(pm)
        base = emb.positions[list(pm.base_vertices)]
        dots = base @ base.T
        off = dots[~np.eye(4, dtype=bool)]
        assert np.allclose(off, -1.0 / 3.0, atol=1e-12)
        assert np.allclose(np.linalg.norm(base, axis=1), 1.0, atol=1e-12)

    def test_base_faces_positively_oriented(self, ico2):
        pm = simplify_to_tetrahedron(ico2)
        emb = embed_base(pm)
        dets = emb.orientation_dets(np.array(pm.base_faces))
        assert np.all(dets > 0.0)

    def test_deterministic(self, ico2):
        pm = simplify_to_tetrahedron(ico2)
        assert np.array_equal(embed_base(pm).positions, embed_base(pm).positions)


class TestPolygonKernel:
    def test_cap_triangle_contains_pole(self):
        ring = ring_on_cap(np.array([0.0, 2.0, 4.0]) * np.pi / 3.0)
        kernel = polygon_kernel(ring)
        assert not kernel.is_empty
        assert np.all(kernel.half_space_normals @ [0, 0, 1] > 0)

    def test_convex_ring_centroid_inside(self, rng):
        for _ in range(20):
            m = rng.integers(3, 9)
            angles = np.sort(rng.random(m) * 2.0 * np.pi)
            if np.min(np.diff(angles)) < 0.05:
                continue
            ring = ring_on_cap(angles, z=rng.random() * 0.6)
            kernel = polygon_kernel(ring)
            assert not kernel.is_empty
            centroid = ring.sum(axis=0)
            centroid /= np.linalg.norm(centroid)
            assert np.all(kernel.half_space_normals @ centroid > 0)
            assert np.all(kernel.half_space_normals @ kernel.point > 0)

    def test_bowtie_ring_empty(self):
        angles = np.array([0.0, np.pi, 0.5 * np.pi, 1.5 * np.pi])
        kernel = polygon_kernel(ring_on_cap(angles, z=0.1))
        assert kernel.is_empty
        assert kernel.point is None

    def test_degenerate_edge_rejected(self):
        ring = np.array([[0, 0, 1], [0, 0, 1], [1, 0, 0]], dtype=float)
        with pytest.raises(ValueError, match="degenerate"):
            polygon_kernel(ring)


class TestInsertVertex:
    @staticmethod
    def _split_with_ring(ring_ids):
        fine = tuple(
            (4, ring_ids[k], ring_ids[(k + 1) % len(ring_ids)])
            for k in range(len(ring_ids))
        )
        return VertexSplit(
            parent=ring_ids[0],
            new_vertex=4,
            anchors=(ring_ids[1], ring_ids[-1]),
            coarse_faces=(),
            fine_faces=fine,
        )

    def test_insert_into_convex_ring(self, ico2):
        positions = np.zeros((5, 3))
        positions[:4] = ring_on_cap(np.arange(4) * np.pi / 2.0)
        mesh = tetrahedron()
        emb = SphericalEmbedding(positions=positions, source=mesh)
        split = self._split_with_ring([0, 1, 2, 3])
        out = insert_vertex(emb, split)
        kernel = polygon_kernel(out.positions[split.ring()])
        assert np.all(kernel.half_space_normals @ out.positions[4] > 0)

    def test_empty_kernel_raises(self):
        positions = np.zeros((5, 3))
        # Bowtie ordering around the cap: the hemisphere intersection is empty.
        positions[:4] = ring_on_cap(np.array([0.0, np.pi, 0.5, np.pi + 0.5]), z=0.1)
        emb = SphericalEmbedding(positions=positions, source=tetrahedron())
        with pytest.raises(ValueError, match="kernel"):
            insert_vertex(emb, self._split_with_ring([0, 1, 2, 3]))


class TestFaceStretch:
    TRI = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)

    def test_identity(self):
        g, s = face_stretch(self.TRI, self.TRI)
        assert abs(g - 1) <= 1e-12 and abs(s - 1) <= 1e-12

    def test_uniform_scale(self):
        g, s = face_stretch(2.0 * self.TRI, self.TRI)
        assert abs(g - 2) <= 1e-12 and abs(s - 2) <= 1e-12

    def test_single_axis_stretch(self):
        stretched = self.TRI * np.array([3.0, 1.0, 1.0])
        g, s = face_stretch(stretched, self.TRI)
        assert abs(g - 3) <= 1e-12 and abs(s - 1) <= 1e-12

    def test_zero_area_rejected(self):
        flat = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
        with pytest.raises(ValueError, match="zero-area"):
            face_stretch(flat, self.TRI)


class TestStretchEnergy:
    def test_icosphere_identity_embedding(self, ico2):
        emb = SphericalEmbedding(positions=ico2.vertices.copy(), source=ico2)
        stats = stretch_energy(ico2, emb, ParamConfig())
        # Flat triangle area of the level-2 icosphere covers ~98% of 4*pi.
        assert 0.98 <= stats.efficiency <= 1.0 + 1e-9
        sv = stats.per_face_singular_values
        assert np.all(sv[:, 0] >= sv[:, 1])
        assert np.all(sv[:, 1] > 0)

    def test_flipped_face_is_infinite(self, ico2):
        positions = ico2.vertices.copy()
        positions[0] *= -1.0  # antipodal: flips the incident triangles
        emb = SphericalEmbedding(positions=positions, source=ico2)
        stats = stretch_energy(ico2, emb, ParamConfig())
        assert stats.energy == np.inf
        assert stats.efficiency == 0.0

    def test_epsilon_linearity(self, ico2):
        emb = SphericalEmbedding(positions=ico2.vertices.copy(), source=ico2)
        lo = stretch_energy(ico2, emb, ParamConfig(epsilon=1e-3))
        hi = stretch_energy(ico2, emb, ParamConfig(epsilon=2e-3))
        assert hi.energy - lo.energy == pytest.approx(
            lo.regularization, rel=1e-9
        )

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ParamConfig(p=3)
        with pytest.raises(ValueError):
            ParamConfig(epsilon=-1.0)
        with pytest.raises(ValueError):
            ParamConfig(global_sweep_growth_factor=1.0)


class TestOptimizeVertex:
    def test_locally_optimal_vertex_stays_put(self, ico2, ico2_embedding):
        emb, _ = ico2_embedding
        cfg = ParamConfig(rng_seed=11)
        current = emb
        for _ in range(4):
            current = optimize_vertex(current, 7, ico2, cfg)
        settled = optimize_vertex(current, 7, ico2, cfg)
        arc = np.arccos(
            np.clip(settled.positions[7] @ current.positions[7], -1, 1)
        )
        assert arc <= 1e-3

    def test_perturbed_vertex_recovers(self, ico2, ico2_embedding):
        emb, _ = ico2_embedding
        cfg = ParamConfig()
        base_energy = stretch_energy(ico2, emb, cfg).energy
        perturbed = SphericalEmbedding(
            positions=emb.positions.copy(), source=ico2
        )
        v = 25
        nudged = perturbed.positions[v] + 0.05 * perturbed.positions[(v + 1) % 42]
        perturbed.positions[v] = nudged / np.linalg.norm(nudged)
        assert perturbed.is_valid()
        worse = stretch_energy(ico2, perturbed, cfg).energy
        assert worse > base_energy
        fixed = optimize_vertex(perturbed, v, ico2, cfg)
        better = stretch_energy(ico2, fixed, cfg).energy
        assert better < worse
        assert fixed.is_valid()

    def test_energy_never_increases(self, ico2, ico2_embedding):
        emb, _ = ico2_embedding
        cfg = ParamConfig(rng_seed=3)
        before = stretch_energy(ico2, emb, cfg).energy
        out = optimize_vertex(emb, 0, ico2, cfg)
        after = stretch_energy(ico2, out, cfg).energy
        assert after <= before + 1e-12
        assert out.is_valid()


class TestParameterize:
    def test_small_icosphere(self):
        mesh = icosphere(1)
        emb, stats = parameterize(mesh)
        assert emb.is_valid()
        assert np.abs(np.linalg.norm(emb.positions, axis=1) - 1.0).max() <= 1e-9
        assert stats.efficiency <= 1.0 + 1e-9
        assert stats.efficiency > 0.8

    def test_determinism(self):
        mesh = icosphere(1)
        a, _ = parameterize(mesh, ParamConfig(rng_seed=5))
        b, _ = parameterize(mesh, ParamConfig(rng_seed=5))
        assert np.array_equal(a.positions, b.positions)

    def test_sweeps_help(self):
        mesh = deformed_icosphere(1, noise=0.2, seed=2)
        _, without = parameterize(mesh, ParamConfig(global_sweeps_enabled=False))
        _, with_sweeps = parameterize(mesh, ParamConfig())
        assert with_sweeps.efficiency > without.efficiency

    def test_torus_rejected(self):
        from sgr.mesh import TopologyError

        with pytest.raises(TopologyError):
            parameterize(torus())

    def test_trace_records_validity(self):
        mesh = icosphere(1)
        _, stats = parameterize(mesh, ParamConfig(), collect_trace=True)
        assert stats.step_min_det is not None
        assert min(stats.step_min_det) > 0.0
        assert stats.sweep_energies is not None


class TestEmbeddingIO:
    def test_round_trip(self, tmp_path, ico2, ico2_embedding):
        emb, _ = ico2_embedding
        p = tmp_path / "emb.ply"
        save_embedding(emb, p)
        again = load_embedding(p, ico2)
        assert np.array_equal(again.positions, emb.positions)

    def test_hash_mismatch(self, tmp_path, ico2, ico2_embedding):
        emb, _ = ico2_embedding
        p = tmp_path / "emb.ply"
        save_embedding(emb, p)
        with pytest.raises(MeshError, match="does not match"):
            load_embedding(p, icosphere(1))

    def test_missing_sidecar(self, tmp_path, ico2, ico2_embedding):
        emb, _ = ico2_embedding
        p = tmp_path / "emb.ply"
        save_embedding(emb, p)
        (tmp_path / "emb.ply.emb").unlink()
        with pytest.raises(MeshError, match="sidecar"):
            load_embedding(p, ico2)
