"""Dense linear algebra for small joint graphs.

Everything operates on row-major float64 numpy arrays.  Problem sizes
stay tiny (graphs have at most a few dozen nodes), so the emphasis is on
exactness and checkability rather than asymptotics: the eigensolver is
cyclic Jacobi, SPD systems go through an explicit Cholesky factorization,
and point-set alignment reuses the symmetric eigensolver on a 3x3 Gram
matrix instead of pulling in a general SVD.
"""

from __future__ import annotations

import numpy as np

from . import backend

EIGEN_SWEEP_TOL = 1e-14
EIGEN_MAX_SWEEPS = 64
CHOLESKY_PIVOT_TOL = 1e-12


class NotSPDError(ValueError):
    """Cholesky factorization hit a non-positive (or non-finite) pivot."""

    def __init__(self, pivot_index: int, pivot_value: float, threshold: float):
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value
        super().__init__(
            f"matrix is not positive definite: pivot {pivot_index} is "
            f"{pivot_value:.6e} (threshold {threshold:g})"
        )


class DegenerateGeometryError(ValueError):
    """Point sets too degenerate (coincident or collinear) to align."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a C-contiguous float64 2-D array with finite entries."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit conformability check."""
    am = as_matrix(a, "a")
    bm = as_matrix(b, "b")
    if am.shape[1] != bm.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {am.shape} x {bm.shape}")
    return am @ bm


def _require_square(m: np.ndarray, op: str) -> int:
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{op} needs a square matrix, got shape {m.shape}")
    return m.shape[0]


def sym_eigen(m, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix via cyclic Jacobi rotations.

    Returns eigenvalues in ascending order and the matching orthonormal
    eigenvectors as columns.  ``m`` must be symmetric to within ``tol``;
    it is explicitly symmetrized before factorization.
    """
    a = as_matrix(m, "m")
    n = _require_square(a, "sym_eigen")
    if n == 0:
        raise ValueError("sym_eigen needs a non-empty matrix")
    asym = float(np.abs(a - a.T).max())
    if asym > tol:
        raise ValueError(
            f"matrix is asymmetric beyond tol={tol:g} (max |m - m.T| = {asym:.3e})"
        )
    sym = 0.5 * (a + a.T)
    evals, evecs, sweeps, off = backend.jacobi_eigh(sym, EIGEN_SWEEP_TOL, EIGEN_MAX_SWEEPS)
    if off > 1e-10 * max(float(np.abs(sym).max()), 1.0):
        raise RuntimeError(
            f"Jacobi eigensolver did not converge in {sweeps} sweeps "
            f"(off-diagonal norm {off:.3e})"
        )
    order = np.argsort(evals, kind="stable")
    return evals[order], np.ascontiguousarray(evecs[:, order])


def solve_spd(m, rhs) -> np.ndarray:
    """Solve ``m @ x = rhs`` for symmetric positive definite ``m``.

    Uses a Cholesky factorization with pivot threshold
    ``CHOLESKY_PIVOT_TOL``; a failing pivot raises :class:`NotSPDError`
    naming the offending index.  ``rhs`` may be a vector or a matrix of
    right-hand-side columns.
    """
    a = as_matrix(m, "m")
    n = _require_square(a, "solve_spd")
    asym = float(np.abs(a - a.T).max())
    if asym > 1e-9 * max(float(np.abs(a).max()), 1.0):
        raise ValueError(f"solve_spd needs a symmetric matrix (max |m - m.T| = {asym:.3e})")
    r = np.ascontiguousarray(rhs, dtype=np.float64)
    vector = r.ndim == 1
    if vector:
        r = r[:, None]
    if r.ndim != 2 or r.shape[0] != n:
        raise ValueError(f"rhs shape {np.shape(rhs)} does not match matrix {a.shape}")
    if not np.isfinite(r).all():
        raise ValueError("rhs contains non-finite entries")
    lower, fail_index, fail_value = backend.cholesky(a, CHOLESKY_PIVOT_TOL)
    if fail_index >= 0:
        raise NotSPDError(int(fail_index), float(fail_value), CHOLESKY_PIVOT_TOL)
    x = backend.chol_solve(lower, r)
    return x[:, 0] if vector else x


def _det3(m: np.ndarray) -> float:
    return float(
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def kabsch_align(p, q, with_scale: bool = False) -> tuple[np.ndarray, np.ndarray, float]:
    """Least-squares similarity alignment of point rows ``p`` onto ``q``.

    Returns ``(rotation, translation, scale)`` minimizing
    ``sum_i || scale * rotation @ p[i] + translation - q[i] ||^2`` subject
    to ``rotation`` being a proper rotation (det +1).  ``scale`` is fixed
    at 1.0 unless ``with_scale`` is set.

    The 3x3 SVD of the cross-covariance is obtained from the symmetric
    eigendecomposition of its Gram matrix.  A reflection is corrected by
    flipping the direction of the smallest singular value; a planar point
    set (rank-2 cross-covariance) is handled by completing the singular
    basis with a cross product, while rank < 2 raises
    :class:`DegenerateGeometryError`.
    """
    pm = as_matrix(p, "p")
    qm = as_matrix(q, "q")
    if pm.shape != qm.shape:
        raise ValueError(f"point sets differ in shape: {pm.shape} vs {qm.shape}")
    n, dim = pm.shape
    if dim != 3:
        raise ValueError(f"points must be N x 3, got {pm.shape}")
    if n < 3:
        raise ValueError(f"need at least 3 points, got {n}")

    p_centroid = pm.mean(axis=0)
    q_centroid = qm.mean(axis=0)
    p0 = pm - p_centroid
    q0 = qm - q_centroid
    spread_p = float((p0 * p0).sum())
    if spread_p <= 0.0:
        raise DegenerateGeometryError("source points are all coincident")

    cov = p0.T @ q0
    gram = cov.T @ cov
    lam, vecs = sym_eigen(gram, tol=1e-6 * max(float(np.abs(gram).max()), 1.0))
    sigma = np.sqrt(np.maximum(lam, 0.0))  # ascending singular values of cov
    if sigma[2] <= 0.0 or sigma[1] <= 1e-9 * sigma[2]:
        raise DegenerateGeometryError(
            "cross-covariance is rank deficient (collinear or coincident points)"
        )
    left = np.empty((3, 3))
    left[:, 2] = cov @ vecs[:, 2] / sigma[2]
    left[:, 1] = cov @ vecs[:, 1] / sigma[1]
    if sigma[0] <= 1e-8 * sigma[2]:
        # planar point set: the smallest singular direction is undetermined
        sigma = sigma.copy()
        sigma[0] = 0.0
        left[:, 0] = np.cross(left[:, 1], left[:, 2])
    else:
        left[:, 0] = cov @ vecs[:, 0] / sigma[0]

    sign = 1.0 if _det3(left) * _det3(vecs) >= 0.0 else -1.0
    d = np.array([sign, 1.0, 1.0])
    rotation = (vecs * d) @ left.T  # V diag(d) U^T

    trace = float((d * sigma).sum())
    scale = trace / spread_p if with_scale else 1.0
    translation = q_centroid - scale * (rotation @ p_centroid)
    return rotation, translation, scale
