"""Small dense linear algebra and Gaussian utilities shared by all modules.

Everything here is a pure function of immutable inputs; dimensions are small
(2 or 3 in practice) and the routines are written for general n without any
further tuning.  Covariance inverses go through a single eigendecomposition
code path so that conditioning problems surface in one place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Relative tolerance for accepting a matrix as symmetric.
SYM_RTOL = 1e-12
# Eigenvalues in [EIG_CLAMP, 0) are treated as roundoff and clamped to zero;
# anything below EIG_CLAMP is a genuine modeling error.
EIG_CLAMP = -1e-10


def as_vector(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Coerce to a finite 1-D float array, optionally of fixed dimension."""
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.size == 0:
        raise ValueError(f"{name}: empty vector")
    if dim is not None and v.size != dim:
        raise ValueError(f"{name}: expected dimension {dim}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name}: non-finite entries")
    return v


def as_sym_matrix(M, name: str = "M") -> np.ndarray:
    """Coerce to a square symmetric float matrix (within SYM_RTOL relative)."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name}: expected square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name}: non-finite entries")
    scale = max(1.0, float(np.abs(A).max()))
    if np.abs(A - A.T).max() > SYM_RTOL * scale:
        raise ValueError(f"{name}: matrix is not symmetric")
    return 0.5 * (A + A.T)


def sym_eig(M) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns (eigenvalues ascending, orthogonal eigenvector matrix P) with
    M = P diag(w) P^T.  Non-symmetric input is rejected rather than
    symmetrized silently.
    """
    A = as_sym_matrix(M)
    w, P = np.linalg.eigh(A)
    return w, P


def sym_sqrt(M) -> np.ndarray:
    """Symmetric PSD square root: returns R with R @ R = M.

    Eigenvalues in [EIG_CLAMP, 0) are clamped to zero; smaller ones raise.
    """
    w, P = sym_eig(M)
    scale = max(1.0, float(np.abs(w).max()))
    if w.min() < EIG_CLAMP * scale:
        raise ValueError(f"sym_sqrt: matrix has negative eigenvalue {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    return (P * np.sqrt(w)) @ P.T


def sym_inv(M, name: str = "M") -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via eigendecomposition."""
    w, P = sym_eig(M)
    scale = max(1.0, float(np.abs(w).max()))
    if w.min() <= 1e-14 * scale:
        raise ValueError(f"{name}: singular or indefinite (min eigenvalue {w.min():.3e})")
    return (P / w) @ P.T


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class Gaussian:
    """Multivariate Gaussian with mean vector and symmetric PSD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = as_vector(self.mean, name="mean")
        cov = as_sym_matrix(self.cov, name="cov")
        if cov.shape[0] != mean.size:
            raise ValueError(
                f"Gaussian: mean dimension {mean.size} does not match cov {cov.shape}"
            )
        w = np.linalg.eigvalsh(cov)
        scale = max(1.0, float(np.abs(w).max()))
        if w.min() < EIG_CLAMP * scale:
            raise ValueError(f"Gaussian: covariance not PSD (min eigenvalue {w.min():.3e})")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def gaussian_pdf(x, g: Gaussian) -> float:
    """Density of g at x; requires a positive definite covariance."""
    xv = as_vector(x, dim=g.dim, name="x")
    w, P = sym_eig(g.cov)
    scale = max(1.0, float(np.abs(w).max()))
    if w.min() <= 1e-14 * scale:
        raise ValueError("gaussian_pdf: singular covariance")
    d = xv - g.mean
    z = P.T @ d
    quad = float(np.sum(z * z / w))
    log_det = float(np.sum(np.log(2.0 * np.pi * w)))
    return float(np.exp(-0.5 * (log_det + quad)))


def mahalanobis_sq(x, S) -> float:
    """Weighted squared norm x^T S x (S is a weight matrix, not inverted)."""
    xv = as_vector(x, name="x")
    A = as_sym_matrix(S, name="S")
    if A.shape[0] != xv.size:
        raise ValueError("mahalanobis_sq: dimension mismatch")
    return float(xv @ A @ xv)


def gaussian_difference(a: Gaussian, b: Gaussian) -> Gaussian:
    """Distribution of the difference of two independent Gaussians."""
    if a.dim != b.dim:
        raise ValueError(f"gaussian_difference: dimensions {a.dim} vs {b.dim}")
    return Gaussian(a.mean - b.mean, a.cov + b.cov)
