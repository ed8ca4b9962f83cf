"""Dense matrix helpers and the small-side truncated SVD.

A reshaped convolution layer is a short, wide matrix (s rows, N columns with
s in {1, 3, 5, ...}). Every spectral quantity is therefore obtained from the
s x s Gram matrix W W^T, costing O(s^2 N).
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from deepkm.core.exceptions import ContractViolation

Matrix = NDArray[np.float64]
Tensor4 = NDArray[np.float64]

# Singular values below this fraction of sigma_max count as zero
RANK_CUTOFF = 1e-10


@dataclass(frozen=True)
class SvdResult:
    """Top right singular vectors of W, one per column."""

    singular_values: NDArray[np.float64]
    right_vectors: Matrix

    @property
    def rank(self) -> int:
        return int(self.singular_values.shape[0])


def as_matrix(data: ArrayLike) -> Matrix:
    """Validate and convert to a finite 2-D float64 array."""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise ContractViolation(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractViolation("matrix has non-finite entries")
    return m


def as_tensor4(data: ArrayLike) -> Tensor4:
    """Validate and convert to a finite (s1, s2, c, m) float64 array."""
    t = np.asarray(data, dtype=np.float64)
    if t.ndim != 4:
        raise ContractViolation(f"expected a (s1, s2, c, m) tensor, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ContractViolation("tensor has non-finite entries")
    return t


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractViolation(f"cannot multiply {a.shape} by {b.shape}")
    return np.matmul(a, b)


def gram_small_side(w: Matrix) -> Matrix:
    """W W^T for a short, wide W (s <= N)."""
    if w.ndim != 2:
        raise ContractViolation(f"expected a 2-D matrix, got shape {w.shape}")
    s, n = w.shape
    if s > n:
        raise ContractViolation(f"small-side Gram needs s <= N, got {s} x {n}")
    g = w @ w.T
    return (g + g.T) / 2


def frobenius_sq(w: Matrix) -> float:
    return float(np.sum(np.square(w)))


def truncated_svd(w: Matrix, k: int) -> SvdResult:
    """Top-k right singular vectors of W via the eigendecomposition of W W^T.

    Returns r = min(k, numerical rank, s) vectors. Directions whose singular
    value falls below RANK_CUTOFF * sigma_max are dropped rather than
    synthesized: they lie in the null space of W and contribute nothing to
    W F F^T.
    """
    if k < 1:
        raise ContractViolation(f"k must be >= 1, got {k}")
    if w.ndim != 2:
        raise ContractViolation(f"expected a 2-D matrix, got shape {w.shape}")
    s, n = w.shape
    if s > n:
        # Tall input: the N x N side is the small one and yields V directly
        eigvals, eigvecs = scipy.linalg.eigh(w.T @ w)
        order = np.argsort(eigvals, kind="stable")[::-1]
        v = eigvecs[:, order]
        sigma = np.linalg.norm(w @ v, axis=0)
    else:
        _, u = scipy.linalg.eigh(gram_small_side(w))
        u = u[:, ::-1]
        projected = w.T @ u
        # Norms taken on W^T u, not from the squared eigenvalues, keep
        # small singular values accurate
        sigma = np.linalg.norm(projected, axis=0)
        order = np.argsort(sigma, kind="stable")[::-1]
        sigma = sigma[order]
        v = projected[:, order]
        nonzero = sigma > 0
        v[:, nonzero] = v[:, nonzero] / sigma[nonzero]

    sigma_max = float(sigma[0]) if sigma.size else 0.0
    if sigma_max == 0.0:
        return SvdResult(np.zeros(0), np.zeros((n, 0)))
    keep = min(k, int(np.count_nonzero(sigma > RANK_CUTOFF * sigma_max)))
    v = v[:, :keep]
    # Thin QR restores orthonormality lost to rounding in near-degenerate spectra
    q, r = np.linalg.qr(v)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return SvdResult(singular_values=sigma[:keep].copy(), right_vectors=q * signs)
