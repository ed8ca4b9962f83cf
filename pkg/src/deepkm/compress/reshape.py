"""Row-wise reshaping of convolution filters.

A (s, s, c, m) layer becomes W (s x N), N = s*c*m; each column is one
horizontal row of one filter. Column order: output channel outermost, then
input channel, then filter row.
"""

from typing import NamedTuple

import numpy as np

from deepkm.core.exceptions import ContractViolation
from deepkm.linalg import Matrix, Tensor4


class LayerDims(NamedTuple):
    s1: int
    s2: int
    c: int
    m: int

    @property
    def n_columns(self) -> int:
        return self.s1 * self.c * self.m


def reshape_rows(layer: Tensor4) -> Matrix:
    if layer.ndim != 4:
        raise ContractViolation(f"expected a (s, s, c, m) layer, got {layer.shape}")
    s1, s2, c, m = layer.shape
    if s1 != s2:
        raise ContractViolation(f"row-wise reshaping needs square filters, got {s1} x {s2}")
    # W[x, (m, c, r)] = layer[r, x, c, m]
    return np.ascontiguousarray(layer.transpose(1, 3, 2, 0).reshape(s2, m * c * s1))


def unreshape_rows(w: Matrix, dims: LayerDims | tuple[int, int, int, int]) -> Tensor4:
    s1, s2, c, m = dims
    if s1 != s2:
        raise ContractViolation(f"row-wise reshaping needs square filters, got {s1} x {s2}")
    if w.shape != (s2, s1 * c * m):
        raise ContractViolation(f"matrix {w.shape} does not match layer dims {tuple(dims)}")
    return np.ascontiguousarray(w.reshape(s2, m, c, s1).transpose(3, 0, 2, 1))
