"""Symmetric matrix numerics: vectorization, eigendecomposition, square roots.

Symmetric matrices are plain ``(dim, dim)`` float64 arrays. ``ns_sqrt`` is the
descriptor hot path; ``sym_eig`` and ``sqrt_eig`` exist as reference oracles.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    ConfigError,
    DegenerateTraceError,
    DimensionMismatchError,
    EigenConvergenceError,
    NotPSDError,
    NSDivergenceError,
)

PSD_TOLERANCE = 1e-10
JACOBI_TOL = 1e-15
JACOBI_MAX_SWEEPS = 100


@dataclass(frozen=True)
class NsConfig:
    iterations: int = 5
    trace_epsilon: float = 1e-12

    def __post_init__(self):
        if not 1 <= int(self.iterations) <= 100:
            raise ConfigError(f"NS iterations must be in [1, 100], got {self.iterations}")
        if not self.trace_epsilon > 0:
            raise ConfigError(f"trace_epsilon must be positive, got {self.trace_epsilon}")


def as_symmetric(m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionMismatchError(f"expected a non-empty square matrix, got shape {m.shape}")
    return m


def tri_len(dim):
    return dim * (dim + 1) // 2


def upper_tri_vec(m):
    """Upper-triangular entries (diagonal included) in row-major (i, j) order."""
    m = as_symmetric(m)
    return m[np.triu_indices(m.shape[0])]


def unflatten_upper(v):
    v = np.asarray(v, dtype=np.float64)
    dim = int((np.sqrt(8 * v.size + 1) - 1) // 2)
    if tri_len(dim) != v.size:
        raise DimensionMismatchError(f"length {v.size} is not a triangular number")
    m = np.empty((dim, dim))
    iu = np.triu_indices(dim)
    m[iu] = v
    m[(iu[1], iu[0])] = v
    return m


def sym_eig(m, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Cyclic Jacobi eigendecomposition.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues descending and
    eigenvectors as columns, so ``U @ diag(w) @ U.T`` reconstructs ``m``.
    """
    m = as_symmetric(m)
    w, v, sweeps, converged = kernels.jacobi_eigh(np.ascontiguousarray(m), tol, max_sweeps)
    if not converged:
        raise EigenConvergenceError(sweeps)
    order = np.argsort(-w, kind="stable")
    return w[order], np.ascontiguousarray(v[:, order])


def sqrt_eig(m):
    """Principal square root through the eigenvalues."""
    w, u = sym_eig(m)
    if w[-1] < -PSD_TOLERANCE:
        raise NotPSDError(float(w[-1]))
    r = (u * np.sqrt(np.clip(w, 0.0, None))) @ u.T
    return (r + r.T) * 0.5


def ns_sqrt(m, cfg=None):
    """Approximate square root by coupled Newton-Schulz iteration.

    The input is scaled by its trace (plus ``trace_epsilon``) so the spectrum
    lies in (0, 1], iterated ``cfg.iterations`` times, then scaled back by the
    square root of the same trace.
    """
    cfg = cfg or NsConfig()
    m = as_symmetric(m)
    dim = m.shape[0]
    tr = float(np.trace(m)) + cfg.trace_epsilon
    if not tr > 0:
        raise DegenerateTraceError(f"degenerate trace: tr + eps = {tr!r} <= 0")
    eye = np.eye(dim)
    y = m / tr
    z = eye
    for step in range(cfg.iterations):
        p = 0.5 * (3.0 * eye - z @ y)
        y = y @ p
        z = p @ z
        if not (np.isfinite(y).all() and np.isfinite(z).all()):
            raise NSDivergenceError(step)
    r = np.sqrt(tr) * y
    return (r + r.T) * 0.5


def is_psd(m, tol=1e-8):
    w, _ = sym_eig(m)
    return bool(w[-1] >= -tol)


def relative_frobenius(a, b):
    """``||a - b||_F / ||b||_F`` (absolute error when ``b`` is zero)."""
    den = np.linalg.norm(b)
    num = np.linalg.norm(np.asarray(a) - np.asarray(b))
    return float(num / den) if den > 0 else float(num)
