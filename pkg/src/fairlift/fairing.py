"""Low-pass graph filtering by implicit diffusion, computed three ways.

The filter attenuates the graph signal per Laplacian eigenvalue by
``1 / (1 + s * lambda)``, which is equivalent to solving the linear
system ``(I + s L) H = X``.  The three routes below — spectral synthesis,
a direct SPD solve, and a diagonally-split fixed-point iteration — are
mathematically identical and serve as mutual oracles for one another.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .graph import GraphOperators
from .linalg import solve_spd, sym_eigen


class FairingConvergenceError(RuntimeError):
    """The fixed-point iteration stopped before reaching its tolerance."""

    def __init__(self, iterations: int, final_residual: float, tol: float):
        self.iterations = iterations
        self.final_residual = final_residual
        super().__init__(
            f"fixed-point iteration did not reach tol={tol:g} after "
            f"{iterations} iterations (final residual {final_residual:.3e})"
        )


@dataclass
class FairingConfig:
    """Smoothing strength given as ``s >= 0`` or as ``alpha = 1/(1+s)``.

    Either field may be supplied; the other is derived.  ``tol`` bounds
    the max-norm difference of successive iterates and ``max_iter`` caps
    the iteration count.
    """

    s: float | None = None
    alpha: float | None = None
    tol: float = 1e-10
    max_iter: int = 10_000

    def __post_init__(self):
        if self.s is None and self.alpha is None:
            raise ValueError("FairingConfig needs s or alpha")
        if self.s is not None and self.alpha is not None:
            if abs(self.alpha * (1.0 + self.s) - 1.0) > 1e-9:
                raise ValueError(
                    f"inconsistent smoothing strength: alpha={self.alpha} but "
                    f"1/(1+s)={1.0 / (1.0 + self.s)}"
                )
        if self.alpha is None:
            if self.s < 0.0:
                raise ValueError(f"s must be >= 0, got {self.s}")
            self.alpha = 1.0 / (1.0 + self.s)
        elif self.s is None:
            if not 0.0 < self.alpha <= 1.0:
                raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
            self.s = (1.0 - self.alpha) / self.alpha
        if self.tol <= 0.0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


def _as_signal(ops: GraphOperators, x) -> tuple[np.ndarray, bool]:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    was_1d = arr.ndim == 1
    if was_1d:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != ops.num_nodes:
        raise ValueError(
            f"signal shape {np.shape(x)} does not match graph with {ops.num_nodes} nodes"
        )
    if not np.isfinite(arr).all():
        raise ValueError("signal contains non-finite entries")
    return arr, was_1d


def fair_spectral(ops: GraphOperators, s: float, x) -> np.ndarray:
    """Filter by eigendecomposition: ``U diag(1/(1+s*lambda)) U^T X``."""
    if s < 0.0:
        raise ValueError(f"s must be >= 0, got {s}")
    sig, was_1d = _as_signal(ops, x)
    evals, evecs = sym_eigen(ops.laplacian)
    gains = 1.0 / (1.0 + s * evals)
    out = evecs @ (gains[:, None] * (evecs.T @ sig))
    return out[:, 0] if was_1d else out


def fair_direct(ops: GraphOperators, s: float, x) -> np.ndarray:
    """Filter by solving the SPD system ``(I + s L) H = X`` directly."""
    if s < 0.0:
        raise ValueError(f"s must be >= 0, got {s}")
    sig, was_1d = _as_signal(ops, x)
    system = np.eye(ops.num_nodes) + s * ops.laplacian
    out = solve_spd(system, sig)
    return out[:, 0] if was_1d else out


def fair_jacobi(ops: GraphOperators, cfg: FairingConfig, x) -> tuple[np.ndarray, int, float]:
    """Filter by the fixed-point iteration ``H <- (1-alpha) S H + alpha X``.

    Starts from ``H = X`` and stops once the max-norm difference between
    successive iterates drops below ``cfg.tol``.  Returns the filtered
    signal, the iteration count, and the final residual; raises
    :class:`FairingConvergenceError` if ``cfg.max_iter`` is exhausted
    first (impossible for alpha in (0, 1] short of a bug, since the
    update contracts with factor at most ``1 - alpha``).
    """
    sig, was_1d = _as_signal(ops, x)
    h, iterations, residual = backend.fair_jacobi(
        np.ascontiguousarray(ops.s_norm), sig, cfg.alpha, cfg.tol, cfg.max_iter
    )
    if residual >= cfg.tol:
        raise FairingConvergenceError(iterations, float(residual), cfg.tol)
    out = h[:, 0] if was_1d else h
    return out, int(iterations), float(residual)


def fair_jacobi_residuals(ops: GraphOperators, cfg: FairingConfig, x) -> list[float]:
    """Max-norm iterate differences of the fixed-point run, for diagnostics.

    Replays the same iteration as :func:`fair_jacobi` and records every
    successive residual until convergence (or ``cfg.max_iter``).
    """
    sig, _ = _as_signal(ops, x)
    h = sig.copy()
    residuals: list[float] = []
    for _ in range(cfg.max_iter):
        h_next = (1.0 - cfg.alpha) * (ops.s_norm @ h) + cfg.alpha * sig
        diff = float(np.abs(h_next - h).max())
        residuals.append(diff)
        h = h_next
        if diff < cfg.tol:
            break
    return residuals
