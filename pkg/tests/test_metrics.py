import numpy as np
import pytest

from sgr.mesh import MeshError, TriangleMesh
from sgr.metrics import (
    MetricsReport,
    RegWeights,
    aspect_ratio,
    chamfer_distance,
    edge_length_reg,
    f_score,
    geometric_reg_total,
    laplacian_smoothing,
    normals_consistency,
    sample_surface,
)
from sgr.primitives import icosahedron, icosphere, octahedron, tetrahedron


def random_rotation(rng):
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


class TestNormalsConsistency:
    def test_tetrahedron_oracle(self):
        # 6 adjacent pairs, each with cos = -1/3: 6 * (1 + 1/3) = 8.
        assert normals_consistency(tetrahedron()) == pytest.approx(8.0, abs=1e-9)

    def test_coplanar_pair(self):
        mesh = TriangleMesh(
            [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]],
            [[0, 1, 2], [2, 1, 3]],
        )
        assert normals_consistency(mesh) == pytest.approx(0.0, abs=1e-12)

    def test_perpendicular_pair(self):
        mesh = TriangleMesh(
            [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]],
            [[0, 1, 2], [1, 0, 3]],
        )
        assert normals_consistency(mesh) == pytest.approx(1.0, abs=1e-12)

    def test_zero_area_face(self):
        mesh = TriangleMesh(
            [[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]],
            [[0, 1, 3], [0, 2, 1]],
        )
        with pytest.raises(MeshError, match="zero-area"):
            normals_consistency(mesh)


class TestLaplacianSmoothing:
    def test_octahedron_oracle(self):
        assert laplacian_smoothing(octahedron()) == pytest.approx(6.0, abs=1e-9)

    def test_translation_invariance(self):
        mesh = icosahedron()
        moved = TriangleMesh(mesh.vertices + [10, -3, 7], mesh.faces)
        assert laplacian_smoothing(moved) == pytest.approx(
            laplacian_smoothing(mesh), rel=1e-12
        )

    def test_scale_homogeneity(self):
        mesh = octahedron()
        scaled = TriangleMesh(3.0 * mesh.vertices, mesh.faces)
        assert laplacian_smoothing(scaled) == pytest.approx(
            9.0 * laplacian_smoothing(mesh), rel=1e-12
        )


class TestEdgeLengthReg:
    def test_regular_solid_zero(self):
        assert edge_length_reg(icosahedron()) == pytest.approx(0.0, abs=1e-24)

    def test_explicit_target(self):
        # Equilateral triangle, side 1, e0 = 2: every term is (1 - 2)^2.
        mesh = TriangleMesh(
            [[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]], [[0, 1, 2]]
        )
        assert edge_length_reg(mesh, 2.0) == pytest.approx(1.0, rel=1e-12)

    def test_mean_policy_hand_check(self):
        # Right triangle legs 3, 4, hypotenuse 5: mean 4, variance (1+0+1)/3.
        mesh = TriangleMesh([[0, 0, 0], [3, 0, 0], [0, 4, 0]], [[0, 1, 2]])
        assert edge_length_reg(mesh) == pytest.approx(2.0 / 3.0, rel=1e-12)


class TestRegTotal:
    def test_zero_weights(self):
        w = RegWeights(alpha_nor=0, alpha_lap=0, alpha_edg=0)
        assert geometric_reg_total(tetrahedron(), w) == 0.0

    def test_component_sum(self):
        mesh = icosahedron()
        w = RegWeights()
        expected = (
            0.1 * normals_consistency(mesh)
            + 0.5 * laplacian_smoothing(mesh)
            + 0.1 * edge_length_reg(mesh)
        )
        assert geometric_reg_total(mesh, w) == expected

    def test_weight_linearity(self):
        mesh = tetrahedron()
        base = geometric_reg_total(mesh, RegWeights(0.1, 0.0, 0.0))
        doubled = geometric_reg_total(mesh, RegWeights(0.2, 0.0, 0.0))
        assert doubled == pytest.approx(2.0 * base, rel=1e-12)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            RegWeights(alpha_nor=-0.1)


class TestAspectRatio:
    def test_equilateral(self):
        mesh = TriangleMesh(
            [[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]], [[0, 1, 2]]
        )
        q, mean, qmax = aspect_ratio(mesh)
        assert q[0] == pytest.approx(1.0, abs=1e-12)
        assert mean == pytest.approx(1.0, abs=1e-12)

    def test_right_isoceles(self):
        mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        q, _, _ = aspect_ratio(mesh)
        assert q[0] == pytest.approx((np.sqrt(2) + 1) / np.sqrt(3), abs=1e-9)

    def test_needle_diverges(self):
        mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0.5, 1e-8, 0]], [[0, 1, 2]])
        assert aspect_ratio(mesh)[2] > 1e6

    def test_q_at_least_one_random(self, rng):
        for _ in range(100):
            mesh = TriangleMesh(rng.standard_normal((3, 3)), [[0, 1, 2]])
            if mesh.face_areas()[0] < 1e-9:
                continue
            assert aspect_ratio(mesh)[0][0] >= 1.0 - 1e-12


class TestChamfer:
    def test_self_distance_zero(self, ico2):
        assert chamfer_distance(ico2, ico2, samples=2000) <= 1e-9

    def test_translation_bound(self):
        a = icosphere(2)
        b = TriangleMesh(a.vertices + [0.1, 0, 0], a.faces)
        assert chamfer_distance(a, b, samples=5000) <= 0.1

    def test_symmetry_exact(self, ico2):
        a = ico2
        b = icosphere(1)
        assert chamfer_distance(a, b, samples=3000) == chamfer_distance(
            b, a, samples=3000
        )

    def test_concentric_spheres(self):
        a = icosphere(3, radius=1.0)
        b = icosphere(3, radius=1.05)
        cd = chamfer_distance(a, b, samples=20000)
        assert cd == pytest.approx(0.05, rel=0.05)

    def test_rigid_motion_invariance(self, rng):
        a = icosphere(1)
        b = TriangleMesh(a.vertices * 1.1, a.faces)
        base = chamfer_distance(a, b, samples=3000)
        R = random_rotation(rng)
        t = rng.standard_normal(3)
        a2 = TriangleMesh(a.vertices @ R.T + t, a.faces)
        b2 = TriangleMesh(b.vertices @ R.T + t, b.faces)
        assert chamfer_distance(a2, b2, samples=3000) == pytest.approx(
            base, rel=1e-9
        )

    def test_sampling_deterministic(self, ico2):
        assert np.array_equal(
            sample_surface(ico2, 100, seed=4), sample_surface(ico2, 100, seed=4)
        )


class TestFScore:
    def test_self_is_100(self, ico2):
        assert f_score(ico2, ico2, 0.001, samples=2000) == 100.0

    def test_threshold_flip(self):
        a = icosphere(3, radius=1.0)
        b = icosphere(3, radius=1.05)
        assert f_score(a, b, 0.01, samples=5000) == 0.0
        assert f_score(a, b, 0.1, samples=5000) == 100.0

    def test_monotone_in_tau(self):
        a = icosphere(2, radius=1.0)
        b = icosphere(2, radius=1.03)
        taus = [0.005, 0.02, 0.05, 0.1]
        scores = [f_score(a, b, t, samples=3000) for t in taus]
        assert scores == sorted(scores)

    def test_invalid_tau(self, ico2):
        with pytest.raises(ValueError):
            f_score(ico2, ico2, 0.0)


class TestMetricsInvariance:
    def test_single_mesh_metrics_rigid_invariant(self, rng):
        mesh = icosphere(1)
        R = random_rotation(rng)
        t = rng.standard_normal(3)
        moved = TriangleMesh(mesh.vertices @ R.T + t, mesh.faces)
        assert normals_consistency(moved) == pytest.approx(
            normals_consistency(mesh), rel=1e-9
        )
        assert laplacian_smoothing(moved) == pytest.approx(
            laplacian_smoothing(mesh), rel=1e-9
        )
        assert edge_length_reg(moved) == pytest.approx(
            edge_length_reg(mesh), rel=1e-9, abs=1e-15
        )
        assert aspect_ratio(moved)[1] == pytest.approx(
            aspect_ratio(mesh)[1], rel=1e-9
        )


class TestReport:
    def test_text_round_trip(self):
        rep = MetricsReport(l_nor=8.0, l_lap=6.0, aspect_ratio_mean=1.25)
        again = MetricsReport.from_text(rep.to_text())
        assert again.l_nor == 8.0
        assert again.l_lap == 6.0
        assert again.aspect_ratio_mean == 1.25
        assert again.chamfer_mm is None
