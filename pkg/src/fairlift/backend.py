"""Numeric kernel backends.

The hot inner loops of the package (the cyclic-Jacobi eigensolver, the
Cholesky factorization and triangular solves, the fixed-point smoothing
iteration, and the Adam parameter update) are compiled with numba when it
is importable.  Every kernel also has a pure-numpy implementation that is
used as a fallback and can be forced with ``FAIRLIFT_BACKEND=numpy``
(``numba`` insists on the compiled path, ``auto`` is the default and is
the only place the environment is consulted; results do not depend on the
choice beyond floating-point round-off).  ``benchmarks/bench_backends.py``
times the two side by side.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

ENV_VAR = "FAIRLIFT_BACKEND"

# ---------------------------------------------------------------------------
# Kernel sources.
#
# The ``*_loops`` variants are written so numba can compile them as-is.
# Where a numpy twin exists it applies the same arithmetic in the same
# order, so the backends agree to the last bit except where a reduction
# is reassociated (dot products in the Cholesky twin).


def _jacobi_eigh_loops(a, rel_tol, max_sweeps):
    # Cyclic Jacobi rotations on a symmetric matrix. Returns the unsorted
    # spectrum, accumulated rotations (columns are eigenvectors), the
    # number of sweeps, and the final off-diagonal Frobenius norm.
    n = a.shape[0]
    w = a.copy()
    v = np.eye(n)
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += w[i, j] * w[i, j]
    scale = np.sqrt(scale)
    sweeps = 0
    off = 0.0
    while sweeps < max_sweeps:
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += w[p, q] * w[p, q]
        off = np.sqrt(2.0 * off)
        if off <= rel_tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = w[p, q]
                if apq == 0.0:
                    continue
                theta = (w[q, q] - w[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (np.sqrt(theta * theta + 1.0) - theta)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                app = w[p, p]
                aqq = w[q, q]
                for i in range(n):
                    wip = w[i, p]
                    wiq = w[i, q]
                    w[i, p] = c * wip - s * wiq
                    w[i, q] = s * wip + c * wiq
                for i in range(n):
                    w[p, i] = w[i, p]
                    w[q, i] = w[i, q]
                w[p, p] = app - t * apq
                w[q, q] = aqq + t * apq
                w[p, q] = 0.0
                w[q, p] = 0.0
                for i in range(n):
                    vip = v[i, p]
                    viq = v[i, q]
                    v[i, p] = c * vip - s * viq
                    v[i, q] = s * vip + c * viq
        sweeps += 1
    d = np.empty(n)
    for i in range(n):
        d[i] = w[i, i]
    return d, v, sweeps, off


def _jacobi_eigh_numpy(a, rel_tol, max_sweeps):
    # Same rotation sequence as the loop variant, with each rotation
    # applied as vectorized row/column updates.
    n = a.shape[0]
    w = a.copy()
    v = np.eye(n)
    scale = np.sqrt(float((w * w).sum()))
    sweeps = 0
    off = 0.0
    while sweeps < max_sweeps:
        off = np.sqrt(2.0 * float((np.triu(w, 1) ** 2).sum()))
        if off <= rel_tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = w[p, q]
                if apq == 0.0:
                    continue
                theta = (w[q, q] - w[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (np.sqrt(theta * theta + 1.0) - theta)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                app = w[p, p]
                aqq = w[q, q]
                col_p = w[:, p].copy()
                col_q = w[:, q].copy()
                new_p = c * col_p - s * col_q
                new_q = s * col_p + c * col_q
                w[:, p] = new_p
                w[:, q] = new_q
                w[p, :] = new_p
                w[q, :] = new_q
                w[p, p] = app - t * apq
                w[q, q] = aqq + t * apq
                w[p, q] = 0.0
                w[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        sweeps += 1
    return np.diag(w).copy(), v, sweeps, off


def _cholesky_loops(a, pivot_tol):
    # Lower-triangular Cholesky factor; reads only the lower triangle.
    # Returns (L, fail_index, fail_value); fail_index is -1 on success.
    n = a.shape[0]
    lower = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            acc = a[i, j]
            for k in range(j):
                acc -= lower[i, k] * lower[j, k]
            if i == j:
                if not (np.isfinite(acc) and acc > pivot_tol):
                    return lower, i, acc
                lower[i, i] = np.sqrt(acc)
            else:
                lower[i, j] = acc / lower[j, j]
    return lower, -1, 0.0


def _cholesky_numpy(a, pivot_tol):
    n = a.shape[0]
    lower = np.zeros((n, n))
    for j in range(n):
        d = a[j, j] - lower[j, :j] @ lower[j, :j]
        if not (np.isfinite(d) and d > pivot_tol):
            return lower, j, float(d)
        lower[j, j] = np.sqrt(d)
        if j + 1 < n:
            lower[j + 1 :, j] = (a[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / lower[j, j]
    return lower, -1, 0.0


def _chol_solve_loops(lower, b):
    # Solves (L L^T) x = b column by column.
    n, m = b.shape
    x = np.empty((n, m))
    for col in range(m):
        for i in range(n):
            acc = b[i, col]
            for k in range(i):
                acc -= lower[i, k] * x[k, col]
            x[i, col] = acc / lower[i, i]
        for i in range(n - 1, -1, -1):
            acc = x[i, col]
            for k in range(i + 1, n):
                acc -= lower[k, i] * x[k, col]
            x[i, col] = acc / lower[i, i]
    return x


def _chol_solve_numpy(lower, b):
    n = lower.shape[0]
    x = np.empty_like(b)
    for i in range(n):
        x[i] = (b[i] - lower[i, :i] @ x[:i]) / lower[i, i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lower[i + 1 :, i] @ x[i + 1 :]) / lower[i, i]
    return x


def _fair_jacobi_core(s_norm, x, alpha, tol, max_iter):
    # Fixed-point iteration h <- (1-alpha) S h + alpha x starting from x.
    # Stops when the max-norm difference of successive iterates drops
    # below tol. numba compiles the matmul through the same BLAS numpy
    # uses, so both backends produce identical iterates.
    h = x.copy()
    iterations = 0
    residual = np.inf
    while iterations < max_iter:
        h_next = (1.0 - alpha) * (s_norm @ h) + alpha * x
        residual = np.abs(h_next - h).max()
        h = h_next
        iterations += 1
        if residual < tol:
            break
    return h, iterations, residual


def _adam_update_core(param, grad, m, v, lr, beta1, beta2, eps, bias1, bias2):
    # In-place bias-corrected Adam step on flat float64 views.
    m[:] = beta1 * m + (1.0 - beta1) * grad
    v[:] = beta2 * v + (1.0 - beta2) * grad * grad
    param[:] = param - lr * (m / bias1) / (np.sqrt(v / bias2) + eps)


# ---------------------------------------------------------------------------
# Backend selection.

_NUMPY_KERNELS = {
    "jacobi_eigh": _jacobi_eigh_numpy,
    "cholesky": _cholesky_numpy,
    "chol_solve": _chol_solve_numpy,
    "fair_jacobi": _fair_jacobi_core,
    "adam_update": _adam_update_core,
}


def _numba_kernels():
    from numba import njit

    wrap = njit(cache=True)
    return {
        "jacobi_eigh": wrap(_jacobi_eigh_loops),
        "cholesky": wrap(_cholesky_loops),
        "chol_solve": wrap(_chol_solve_loops),
        "fair_jacobi": wrap(_fair_jacobi_core),
        "adam_update": wrap(_adam_update_core),
    }


def kernels_for(name: str) -> dict:
    """Kernel table for an explicit backend name ("numba" or "numpy")."""
    if name == "numpy":
        return dict(_NUMPY_KERNELS)
    if name == "numba":
        return _numba_kernels()
    raise ValueError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")


def _select_backend() -> str:
    choice = os.environ.get(ENV_VAR, "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise RuntimeError(f"{ENV_VAR} must be 'auto', 'numba' or 'numpy', got {choice!r}")
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            warnings.warn(
                f"{ENV_VAR}=numba requested but numba is not importable; using numpy",
                RuntimeWarning,
            )
        return "numpy"
    return "numba"


ACTIVE_BACKEND = _select_backend()
KERNELS = kernels_for(ACTIVE_BACKEND)


def jacobi_eigh(a, rel_tol=1e-14, max_sweeps=64):
    return KERNELS["jacobi_eigh"](a, rel_tol, max_sweeps)


def cholesky(a, pivot_tol):
    return KERNELS["cholesky"](a, pivot_tol)


def chol_solve(lower, b):
    return KERNELS["chol_solve"](lower, b)


def fair_jacobi(s_norm, x, alpha, tol, max_iter):
    return KERNELS["fair_jacobi"](s_norm, x, alpha, tol, max_iter)


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, bias1, bias2):
    KERNELS["adam_update"](param, grad, m, v, lr, beta1, beta2, eps, bias1, bias2)


def warmup() -> None:
    """Trigger JIT compilation of every kernel on tiny inputs."""
    a = np.array([[2.0, 0.5], [0.5, 1.0]])
    jacobi_eigh(a)
    lower, _, _ = cholesky(a, 1e-12)
    chol_solve(lower, np.eye(2))
    fair_jacobi(np.full((2, 2), 0.5), np.array([[1.0], [0.0]]), 0.5, 1e-10, 100)
    p = np.zeros(2)
    adam_update(p, np.ones(2), np.zeros(2), np.zeros(2), 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001)
