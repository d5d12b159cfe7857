import numpy as np
import pytest

from fairlift.graph import build_operators
from fairlift.linalg import (
    DegenerateGeometryError,
    NotSPDError,
    kabsch_align,
    matmul,
    solve_spd,
    sym_eigen,
)

from conftest import random_connected_skeleton


def naive_matmul(a, b):
    """Independent triple-loop product used as the reference oracle."""
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


class TestMatmul:
    def test_identity(self, rng):
        m = rng.normal(size=(3, 5))
        np.testing.assert_array_equal(matmul(np.eye(3), m), m)

    def test_hand_case(self):
        out = matmul([[1.0, 2.0], [3.0, 4.0]], [[0.0], [1.0]])
        np.testing.assert_array_equal(out, [[2.0], [4.0]])

    def test_matches_naive_oracle(self, rng):
        a = rng.normal(size=(5, 5))
        b = rng.normal(size=(5, 5))
        np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), atol=1e-12)

    def test_dimension_mismatch_names_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(np.zeros((2, 3)), np.zeros((2, 2)))

    def test_rejects_non_finite(self):
        bad = np.array([[1.0, np.nan], [0.0, 1.0]])
        with pytest.raises(ValueError, match="non-finite"):
            matmul(bad, np.eye(2))

    def test_associativity(self, rng):
        for _ in range(10):
            a = rng.normal(size=(4, 6))
            b = rng.normal(size=(6, 3))
            c = rng.normal(size=(3, 5))
            np.testing.assert_allclose(
                matmul(matmul(a, b), c), matmul(a, matmul(b, c)), atol=1e-9
            )


class TestSymEigen:
    def test_identity_spectrum(self):
        evals, evecs = sym_eigen(np.eye(2))
        np.testing.assert_allclose(evals, [1.0, 1.0])
        np.testing.assert_allclose(evecs @ evecs.T, np.eye(2), atol=1e-12)

    def test_known_2x2_spectrum(self):
        evals, _ = sym_eigen(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(evals, [-1.0, 1.0], atol=1e-14)

    def test_random_graph_laplacian(self, rng):
        ops = build_operators(random_connected_skeleton(rng, 10), max_hop=1)
        evals, evecs = sym_eigen(ops.laplacian)
        assert evals.min() >= -1e-12
        assert evals.max() <= 2.0 + 1e-12
        recon = evecs @ np.diag(evals) @ evecs.T
        np.testing.assert_allclose(recon, ops.laplacian, atol=1e-9)
        np.testing.assert_allclose(evecs.T @ evecs, np.eye(10), atol=1e-9)

    def test_reconstruction_up_to_32(self, rng):
        base = rng.normal(size=(32, 32))
        sym = 0.5 * (base + base.T)
        evals, evecs = sym_eigen(sym)
        np.testing.assert_allclose(evecs @ np.diag(evals) @ evecs.T, sym, atol=1e-9)
        np.testing.assert_allclose(evecs.T @ evecs, np.eye(32), atol=1e-9)
        assert np.all(np.diff(evals) >= 0.0)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="asymmetric"):
            sym_eigen(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            sym_eigen(np.zeros((2, 3)))


class TestSolveSPD:
    def test_identity_system(self, rng):
        rhs = rng.normal(size=(4, 2))
        np.testing.assert_allclose(solve_spd(np.eye(4), rhs), rhs)

    def test_diagonal_hand_case(self):
        out = solve_spd(np.diag([2.0, 4.0]), np.array([2.0, 4.0]))
        np.testing.assert_allclose(out, [1.0, 1.0])

    def test_random_spd_residual(self, rng):
        base = rng.normal(size=(8, 8))
        spd = base @ base.T + 8.0 * np.eye(8)
        rhs = rng.normal(size=(8, 3))
        x = solve_spd(spd, rhs)
        assert np.abs(spd @ x - rhs).max() < 1e-9

    def test_multiply_back_identity(self, rng):
        for _ in range(5):
            base = rng.normal(size=(6, 6))
            spd = base @ base.T + 6.0 * np.eye(6)
            rhs = rng.normal(size=6)
            np.testing.assert_allclose(spd @ solve_spd(spd, rhs), rhs, atol=1e-9)

    def test_non_spd_names_pivot(self):
        indefinite = np.diag([1.0, -1.0, 2.0])
        with pytest.raises(NotSPDError, match="pivot 1"):
            solve_spd(indefinite, np.ones(3))

    def test_rejects_asymmetric(self):
        m = np.array([[2.0, 1.0], [0.0, 2.0]])
        with pytest.raises(ValueError, match="symmetric"):
            solve_spd(m, np.ones(2))


def random_rotation(rng):
    quat = rng.normal(size=4)
    quat /= np.linalg.norm(quat)
    w, x, y, z = quat
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


class TestKabschAlign:
    def test_already_aligned(self, rng):
        pts = rng.normal(size=(9, 3))
        rot, trans, scale = kabsch_align(pts, pts, with_scale=True)
        np.testing.assert_allclose(rot, np.eye(3), atol=1e-9)
        np.testing.assert_allclose(trans, np.zeros(3), atol=1e-9)
        assert abs(scale - 1.0) < 1e-9

    def test_quarter_turn_about_z(self, rng):
        pts = rng.normal(size=(8, 3))
        rot90 = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        target = pts @ rot90.T
        rot, trans, scale = kabsch_align(pts, target)
        aligned = scale * (pts @ rot.T) + trans
        assert np.abs(aligned - target).max() < 1e-9
        assert abs(np.linalg.det(rot) - 1.0) < 1e-9

    def test_construct_then_recover_similarity(self, rng):
        pts = rng.normal(size=(12, 3))
        rot_true = random_rotation(rng)
        trans_true = rng.normal(size=3) * 10.0
        target = 2.0 * (pts @ rot_true.T) + trans_true
        rot, trans, scale = kabsch_align(pts, target, with_scale=True)
        assert abs(scale - 2.0) < 1e-6
        np.testing.assert_allclose(rot, rot_true, atol=1e-6)
        np.testing.assert_allclose(trans, trans_true, atol=1e-6)

    def test_proper_rotation_even_under_reflection(self, rng):
        pts = rng.normal(size=(10, 3))
        reflected = pts.copy()
        reflected[:, 2] *= -1.0
        rot, _, _ = kabsch_align(pts, reflected)
        assert abs(np.linalg.det(rot) - 1.0) < 1e-9
        np.testing.assert_allclose(rot.T @ rot, np.eye(3), atol=1e-9)

    def test_planar_points_align(self, rng):
        flat = rng.normal(size=(10, 3))
        flat[:, 2] = 0.0
        rot_true = random_rotation(rng)
        target = flat @ rot_true.T + 3.0
        rot, trans, scale = kabsch_align(flat, target)
        aligned = scale * (flat @ rot.T) + trans
        assert np.abs(aligned - target).max() < 1e-8
        assert abs(np.linalg.det(rot) - 1.0) < 1e-9

    def test_collinear_is_degenerate(self):
        line = np.outer(np.arange(5.0), np.array([1.0, 2.0, 3.0]))
        with pytest.raises(DegenerateGeometryError):
            kabsch_align(line, line + 1.0)

    def test_objective_invariant_under_common_rigid_motion(self, rng):
        p = rng.normal(size=(7, 3))
        q = p + rng.normal(size=(7, 3)) * 0.1

        def residual(a, b):
            rot, trans, scale = kabsch_align(a, b)
            return np.linalg.norm(scale * (a @ rot.T) + trans - b)

        shared_rot = random_rotation(rng)
        shared_trans = rng.normal(size=3)
        moved_p = p @ shared_rot.T + shared_trans
        moved_q = q @ shared_rot.T + shared_trans
        assert abs(residual(p, q) - residual(moved_p, moved_q)) < 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="differ in shape"):
            kabsch_align(np.zeros((4, 3)), np.zeros((5, 3)))

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="at least 3"):
            kabsch_align(np.zeros((2, 3)), np.zeros((2, 3)))
