"""Parity and selection tests for the numba/numpy kernel backends."""

import subprocess
import sys

import numpy as np
import pytest

from fairlift import backend

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


@pytest.fixture(scope="module")
def tables():
    numpy_kernels = backend.kernels_for("numpy")
    if HAVE_NUMBA:
        return numpy_kernels, backend.kernels_for("numba")
    return numpy_kernels, None


def _random_spd(rng, n):
    base = rng.normal(size=(n, n))
    return base @ base.T + n * np.eye(n)


@needs_numba
class TestBackendParity:
    def test_jacobi_eigh(self, tables, rng):
        np_k, nb_k = tables
        for n in (2, 5, 17, 32):
            base = rng.normal(size=(n, n))
            sym = 0.5 * (base + base.T)
            d1, v1, s1, off1 = np_k["jacobi_eigh"](sym, 1e-14, 64)
            d2, v2, s2, off2 = nb_k["jacobi_eigh"](sym, 1e-14, 64)
            scale = np.abs(sym).max()
            np.testing.assert_allclose(np.sort(d1), np.sort(d2), atol=1e-12 * scale)
            recon1 = v1 @ np.diag(d1) @ v1.T
            recon2 = v2 @ np.diag(d2) @ v2.T
            np.testing.assert_allclose(recon1, sym, atol=1e-10 * max(scale, 1.0))
            np.testing.assert_allclose(recon2, sym, atol=1e-10 * max(scale, 1.0))

    def test_cholesky(self, tables, rng):
        np_k, nb_k = tables
        spd = _random_spd(rng, 9)
        l1, i1, _ = np_k["cholesky"](spd, 1e-12)
        l2, i2, _ = nb_k["cholesky"](spd, 1e-12)
        assert i1 == i2 == -1
        np.testing.assert_allclose(l1, l2, rtol=1e-13, atol=1e-13)

    def test_cholesky_failure_agrees(self, tables):
        np_k, nb_k = tables
        indefinite = np.diag([4.0, -1.0, 2.0])
        _, i1, v1 = np_k["cholesky"](indefinite, 1e-12)
        _, i2, v2 = nb_k["cholesky"](indefinite, 1e-12)
        assert i1 == i2 == 1
        assert v1 == v2 == -1.0

    def test_chol_solve(self, tables, rng):
        np_k, nb_k = tables
        spd = _random_spd(rng, 7)
        rhs = rng.normal(size=(7, 3))
        l1, _, _ = np_k["cholesky"](spd, 1e-12)
        x1 = np_k["chol_solve"](l1, rhs)
        x2 = nb_k["chol_solve"](l1, rhs)
        np.testing.assert_allclose(x1, x2, rtol=1e-13, atol=1e-14)
        assert np.abs(spd @ x1 - rhs).max() < 1e-9

    def test_fair_jacobi_bitwise(self, tables, rng):
        np_k, nb_k = tables
        s = np.full((4, 4), 0.25)
        x = np.ascontiguousarray(rng.normal(size=(4, 3)))
        h1, it1, r1 = np_k["fair_jacobi"](s, x, 0.2, 1e-10, 1000)
        h2, it2, r2 = nb_k["fair_jacobi"](s, x, 0.2, 1e-10, 1000)
        assert it1 == it2
        np.testing.assert_array_equal(h1, h2)

    def test_adam_update_bitwise(self, tables, rng):
        np_k, nb_k = tables
        p1 = rng.normal(size=50)
        g = rng.normal(size=50)
        m1, v1 = np.zeros(50), np.zeros(50)
        p2, m2, v2 = p1.copy(), m1.copy(), v1.copy()
        np_k["adam_update"](p1, g, m1, v1, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001)
        nb_k["adam_update"](p2, g, m2, v2, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001)
        np.testing.assert_array_equal(p1, p2)
        np.testing.assert_array_equal(m1, m2)
        np.testing.assert_array_equal(v1, v2)


class TestSelection:
    def test_active_backend_is_valid(self):
        assert backend.ACTIVE_BACKEND in ("numba", "numpy")

    def test_kernels_for_rejects_unknown(self):
        with pytest.raises(ValueError, match="unknown backend"):
            backend.kernels_for("cuda")

    def test_env_var_forces_numpy(self):
        code = "import fairlift.backend as b; print(b.ACTIVE_BACKEND)"
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={"PATH": "/usr/bin:/bin", "FAIRLIFT_BACKEND": "numpy"},
            capture_output=True,
            text=True,
            check=True,
        )
        assert out.stdout.strip() == "numpy"

    def test_env_var_rejects_garbage(self):
        code = "import fairlift.backend"
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={"PATH": "/usr/bin:/bin", "FAIRLIFT_BACKEND": "gpu"},
            capture_output=True,
            text=True,
        )
        assert out.returncode != 0
        assert "FAIRLIFT_BACKEND" in out.stderr
