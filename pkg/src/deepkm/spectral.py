"""Spectrally relaxed k-means regularizer.

For a reshaped layer W (s x N) and an orthonormal F (N x r) the penalty is

    Tr(W^T W) - Tr(F^T W^T W F) = ||W (I - F F^T)||_F^2

and the regularized objective adds (lambda / 2) * penalty to the task loss.
F is refreshed lazily from the top right singular vectors of W and held
fixed in between, so the penalty grows as W drifts out of the captured
row space. No N x N matrix is ever formed.
"""

import logging
from collections.abc import Collection
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from deepkm.cluster import zero_cluster_size
from deepkm.compress.reshape import reshape_rows, unreshape_rows
from deepkm.core.config import RegConfig
from deepkm.core.exceptions import ConfigurationError, ContractViolation
from deepkm.linalg import Matrix, frobenius_sq, truncated_svd
from deepkm.nn.network import Architecture, ModelParams

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-8


@dataclass(frozen=True)
class OrthonormalFactor:
    """Relaxed cluster indicator F (N x r, F^T F = I)."""

    columns: Matrix
    source_epoch: int = 0

    def __post_init__(self) -> None:
        if self.columns.ndim != 2 or self.columns.shape[1] < 1:
            raise ContractViolation(f"factor needs at least one column, got {self.columns.shape}")
        gram = self.columns.T @ self.columns
        if not np.allclose(gram, np.eye(gram.shape[0]), rtol=0, atol=ORTHONORMAL_TOL):
            raise ContractViolation("factor columns are not orthonormal")

    @property
    def width(self) -> int:
        return int(self.columns.shape[1])


def _check_dims(w: Matrix, f: OrthonormalFactor) -> None:
    if w.ndim != 2 or f.columns.shape[0] != w.shape[1]:
        raise ContractViolation(f"factor with {f.columns.shape[0]} rows for W {w.shape}")


def penalty(w: Matrix, f: OrthonormalFactor) -> float:
    """||W||_F^2 - ||W F||_F^2."""
    _check_dims(w, f)
    return frobenius_sq(w) - frobenius_sq(w @ f.columns)


def reg_gradient(w: Matrix, f: OrthonormalFactor, lam: float) -> Matrix:
    """lambda * W (I - F F^T), the gradient of (lambda / 2) * penalty."""
    _check_dims(w, f)
    return lam * (w - (w @ f.columns) @ f.columns.T)


def update_f(w: Matrix, k: int, source_epoch: int = 0) -> OrthonormalFactor:
    """Ky Fan closed form: the top min(k, rank W) right singular vectors."""
    svd = truncated_svd(w, k)
    if svd.rank == 0:
        # W = 0: every orthonormal F gives penalty 0; use the first axis
        columns = np.zeros((w.shape[1], 1))
        columns[0, 0] = 1.0
        return OrthonormalFactor(columns, source_epoch)
    return OrthonormalFactor(svd.right_vectors, source_epoch)


def update_f_with_zero_cluster(
    w: Matrix, k: int, p: float, source_epoch: int = 0
) -> OrthonormalFactor:
    """Lazy update with the ceil(pN) smallest-norm columns pinned to a zero center.

    Their rows of F are zero, so the penalty charges their full squared norm
    and the gradient pulls them toward the origin; the remaining columns get
    the (k-1)-truncated spectral factor.
    """
    if not 0 <= p < 1:
        raise ContractViolation(f"p must be in [0, 1), got {p}")
    n = w.shape[1]
    n_zero = zero_cluster_size(n, p)
    if n_zero == 0:
        return update_f(w, k, source_epoch)
    if k < 2 or n_zero >= n:
        raise ContractViolation(f"zero cluster of {n_zero} columns needs k >= 2 and N > {n_zero}")
    order = np.argsort(np.linalg.norm(w, axis=0), kind="stable")
    rest_idx = order[n_zero:]
    inner = update_f(w[:, rest_idx], k - 1)
    columns = np.zeros((n, inner.width))
    columns[rest_idx] = inner.columns
    return OrthonormalFactor(columns, source_epoch)


def indicator_factor(assignments: NDArray[np.int64], k: int) -> OrthonormalFactor:
    """Normalized hard indicator: F_ij = 1/sqrt(n_j) if column i is in cluster j.

    Empty clusters are dropped, so the factor has one column per used cluster.
    """
    counts = np.bincount(assignments, minlength=k)
    used = np.flatnonzero(counts)
    columns = np.zeros((assignments.shape[0], used.size))
    for col, cluster in enumerate(used):
        members = assignments == cluster
        columns[members, col] = 1.0 / np.sqrt(counts[cluster])
    return OrthonormalFactor(columns)


@dataclass
class SpectralRegularizer:
    """Training hook adding lambda * W (I - F F^T) to every conv layer's gradient."""

    config: RegConfig
    layer_dims: dict[str, tuple[int, int, int, int]]
    factors: dict[str, OrthonormalFactor] = field(default_factory=dict)

    def refresh(self, model: ModelParams, epoch: int) -> None:
        for name in self.layer_dims:
            w = reshape_rows(model.weights[name])
            k = self.config.per_layer_k[name]
            p = self.config.sparsity_p.get(name, 0.0)
            self.factors[name] = update_f_with_zero_cluster(w, k, p, source_epoch=epoch)
            logger.debug(
                "refreshed F for %s at epoch %d (width %d)", name, epoch, self.factors[name].width
            )

    def on_epoch_start(self, model: ModelParams, epoch: int) -> None:
        if epoch % self.config.refresh_every_epochs == 0 or not self.factors:
            self.refresh(model, epoch)

    def extra_gradients(self, model: ModelParams) -> dict[str, Matrix]:
        if self.config.lam == 0:
            return {}
        extra = {}
        for name, dims in self.layer_dims.items():
            w = reshape_rows(model.weights[name])
            extra[name] = unreshape_rows(reg_gradient(w, self.factors[name], self.config.lam), dims)
        return extra

    def penalties(self, model: ModelParams) -> dict[str, float]:
        return {
            name: penalty(reshape_rows(model.weights[name]), self.factors[name])
            for name in self.layer_dims
        }


def make_hook(
    config: RegConfig, layout: Architecture, layers: Collection[str] | None = None
) -> SpectralRegularizer:
    """Build the regularizer for the conv layers of ``layout``.

    Args:
        config: lambda, refresh schedule and the K of every regularized layer.
        layout: architecture the hook will train.
        layers: conv layers to regularize; all of them when omitted.

    Returns:
        The hook to pass as ``regularizer`` to ``train``.
    """
    conv = {layer.name: layer for layer in layout.conv_layers}
    names = list(conv) if layers is None else list(layers)
    dims: dict[str, tuple[int, int, int, int]] = {}
    for name in names:
        if name not in conv:
            raise ConfigurationError(f"{name} is not a conv layer of {layout.name}")
        if name not in config.per_layer_k:
            raise ConfigurationError(f"no K configured for conv layer {name}")
        dims[name] = conv[name].filter_shape
    return SpectralRegularizer(config=config, layer_dims=dims)
