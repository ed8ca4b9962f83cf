"""Lloyd k-means over the columns of a reshaped weight matrix.

Columns of W (s x N) are the samples. Seeding is k-means++ with an explicit
seed; restarts keep the lowest inertia. The sparsity-promoting variant pins
one center at the origin for the smallest-norm columns.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from sklearn.cluster import kmeans_plusplus

from deepkm.core.exceptions import ContractViolation
from deepkm.linalg import Matrix

logger = logging.getLogger(__name__)

DEFAULT_RESTARTS = 3
DEFAULT_MAX_ITER = 100
DEFAULT_TOL = 1e-6
ZERO_CLUSTER_EPS = 1e-9


@dataclass(frozen=True)
class Codebook:
    """K shared centers (stored as the columns of an s x K matrix) and N assignments."""

    centers: Matrix
    assignments: NDArray[np.int64]
    inertia: float
    zero_cluster: bool = False

    def __post_init__(self) -> None:
        if self.centers.ndim != 2:
            raise ContractViolation(f"centers must be s x K, got {self.centers.shape}")
        if self.assignments.size and (
            self.assignments.min() < 0 or self.assignments.max() >= self.k
        ):
            raise ContractViolation(f"assignment index outside [0, {self.k})")

    @property
    def k(self) -> int:
        return int(self.centers.shape[1])

    @property
    def n(self) -> int:
        return int(self.assignments.shape[0])

    @property
    def index_bits(self) -> int:
        """ceil(log2 K) bits per column index."""
        return (self.k - 1).bit_length()


def _assign(points: Matrix, centers: Matrix) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
    # points (N, s), centers (K, s); ties go to the lowest center index
    d2 = np.square(points[:, None, :] - centers[None, :, :]).sum(axis=2)
    labels = d2.argmin(axis=1)
    return labels.astype(np.int64), d2[np.arange(points.shape[0]), labels]


def _update(
    points: Matrix, labels: NDArray[np.int64], centers: Matrix, d2: NDArray[np.float64]
) -> Matrix:
    k = centers.shape[0]
    counts = np.bincount(labels, minlength=k)
    # bincount sums in index order, so the reduction is schedule independent
    sums = np.stack(
        [np.bincount(labels, weights=points[:, j], minlength=k) for j in range(points.shape[1])],
        axis=1,
    )
    new = centers.copy()
    filled = counts > 0
    new[filled] = sums[filled] / counts[filled, None]
    empty = np.flatnonzero(~filled)
    if empty.size:
        # farthest points from their current centers become the new centers
        farthest = np.argsort(-d2, kind="stable")[: empty.size]
        new[empty] = points[farthest]
        logger.debug("re-seeded %d empty clusters", empty.size)
    return new


def _lloyd(
    points: Matrix, init: Matrix, max_iter: int, tol: float
) -> tuple[Matrix, NDArray[np.int64], float]:
    centers = init.copy()
    labels, d2 = _assign(points, centers)
    inertia = float(d2.sum())
    for _ in range(max_iter):
        if inertia == 0.0:
            break
        centers = _update(points, labels, centers, d2)
        labels, d2 = _assign(points, centers)
        new_inertia = float(d2.sum())
        assert new_inertia <= inertia * (1 + 1e-12) + 1e-300, "Lloyd inertia increased"
        improvement = inertia - new_inertia
        inertia = new_inertia
        if improvement <= tol * inertia:
            break
    return centers, labels, inertia


def _seed_centers(points: Matrix, k: int, seed: int, greedy: bool) -> Matrix:
    # restart 0 is greedy k-means++; later restarts take one D^2 sample per center
    n_local_trials = None if greedy else 1
    init, _ = kmeans_plusplus(
        points, n_clusters=k, random_state=seed, n_local_trials=n_local_trials
    )
    return init


def kmeans(
    w: Matrix,
    k: int,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    restarts: int = DEFAULT_RESTARTS,
) -> Codebook:
    """Cluster the N columns of ``w`` into ``k`` groups; best inertia over restarts."""
    if w.ndim != 2:
        raise ContractViolation(f"expected an s x N matrix, got {w.shape}")
    n = w.shape[1]
    if not 1 <= k <= n:
        raise ContractViolation(f"k must be in [1, N={n}], got {k}")
    if restarts < 1:
        raise ContractViolation(f"restarts must be >= 1, got {restarts}")

    points = np.ascontiguousarray(w.T)
    rng = np.random.default_rng(seed)
    best: tuple[Matrix, NDArray[np.int64], float] | None = None
    for restart in range(restarts):
        init = _seed_centers(points, k, int(rng.integers(2**31 - 1)), greedy=restart == 0)
        run = _lloyd(points, init, max_iter, tol)
        if best is None or run[2] < best[2]:
            best = run
    assert best is not None
    centers, labels, inertia = best
    return Codebook(centers=np.ascontiguousarray(centers.T), assignments=labels, inertia=inertia)


def zero_cluster_size(n: int, p: float) -> int:
    """Number of columns pinned to the zero center: ceil(p N)."""
    # absorb float error so 0.07 * 100 gives 7, not 8
    return math.ceil(p * n - ZERO_CLUSTER_EPS)


def kmeans_with_zero_cluster(
    w: Matrix,
    k: int,
    p: float,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    restarts: int = DEFAULT_RESTARTS,
) -> Codebook:
    """k-means where cluster 0 is fixed at the origin.

    The ceil(pN) smallest-norm columns (stable order by index on ties) go to
    cluster 0; the rest are clustered into k-1 groups labelled 1..k-1.
    """
    if not 0 <= p < 1:
        raise ContractViolation(f"p must be in [0, 1), got {p}")
    n = w.shape[1]
    n_zero = zero_cluster_size(n, p)
    if n_zero == 0:
        return kmeans(w, k, seed, max_iter, tol, restarts)
    if k < 2:
        raise ContractViolation("a zero cluster needs k >= 2")
    if n_zero >= n:
        raise ContractViolation(f"ceil(pN)={n_zero} leaves no columns to cluster (N={n})")
    if k - 1 > n - n_zero:
        raise ContractViolation(f"k-1={k - 1} clusters for {n - n_zero} remaining columns")

    norms = np.linalg.norm(w, axis=0)
    order = np.argsort(norms, kind="stable")
    zero_idx, rest_idx = order[:n_zero], order[n_zero:]
    rest = kmeans(w[:, rest_idx], k - 1, seed, max_iter, tol, restarts)

    centers = np.zeros((w.shape[0], k))
    centers[:, 1:] = rest.centers
    assignments = np.zeros(n, dtype=np.int64)
    assignments[rest_idx] = rest.assignments + 1
    inertia = float(np.square(norms[zero_idx]).sum()) + rest.inertia
    return Codebook(centers=centers, assignments=assignments, inertia=inertia, zero_cluster=True)


def quantize(w: Matrix, codebook: Codebook) -> Matrix:
    """Replace every column by its assigned center."""
    if w.ndim != 2 or w.shape[0] != codebook.centers.shape[0] or w.shape[1] != codebook.n:
        raise ContractViolation(
            f"codebook ({codebook.centers.shape[0]} x {codebook.n}) does not match {w.shape}"
        )
    return codebook.centers[:, codebook.assignments].copy()


def inertia_of(w: Matrix, codebook: Codebook) -> float:
    """Within-cluster sum of squares of ``w`` under the codebook."""
    return float(np.square(w - quantize(w, codebook)).sum())
