"""Row-wise k-means parameter sharing for the conv layers of a model."""

import hashlib
import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from deepkm.cluster import Codebook, kmeans, kmeans_with_zero_cluster
from deepkm.compress.reshape import LayerDims, reshape_rows, unreshape_rows
from deepkm.core.config import ShareConfig
from deepkm.core.exceptions import ContractViolation, FormatError
from deepkm.nn.network import Architecture, ModelParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SharedLayer:
    codebook: Codebook
    dims: LayerDims

    @property
    def s(self) -> int:
        return self.dims.s2

    @property
    def n(self) -> int:
        return self.dims.n_columns


@dataclass
class CompressedModel:
    """Codebooks for the shared conv layers plus every other parameter verbatim."""

    arch: Architecture
    layers: dict[str, SharedLayer]
    # biases of every layer, and weights of layers that were not shared
    passthrough_weights: dict[str, np.ndarray]
    passthrough_biases: dict[str, np.ndarray]
    config: ShareConfig
    source_hash: str = ""


def model_hash(model: ModelParams) -> str:
    """SHA-256 over the float32 parameters in layer order."""
    digest = hashlib.sha256()
    for layer in model.arch.layers:
        if layer.has_params:
            digest.update(layer.name.encode())
            digest.update(model.weights[layer.name].astype("<f4").tobytes())
            digest.update(model.biases[layer.name].astype("<f4").tobytes())
    return digest.hexdigest()


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def shared_layer_names(arch: Architecture, config: ShareConfig) -> list[str]:
    names = [layer.name for layer in arch.conv_layers]
    if config.only_layer is None:
        return names
    if config.only_layer not in names:
        raise ContractViolation(f"{config.only_layer} is not a conv layer ({', '.join(names)})")
    return [config.only_layer]


def allocate_k(model: ModelParams | Architecture, config: ShareConfig) -> dict[str, int]:
    """K per shared conv layer from the uniform cluster rate.

    The first conv layer uses ``first_layer_rate``; K = max(1, round(rate N)),
    clamped to N.
    """
    arch = model.arch if isinstance(model, ModelParams) else model
    selected = set(shared_layer_names(arch, config))
    ks: dict[str, int] = {}
    for index, layer in enumerate(arch.conv_layers):
        if layer.name not in selected:
            continue
        assert layer.s and layer.c and layer.m
        n = layer.s * layer.c * layer.m
        rate = config.effective_first_layer_rate if index == 0 else config.cluster_rate
        ks[layer.name] = min(n, max(1, _round_half_up(rate * n)))
    return ks


def _layer_p(arch: Architecture, config: ShareConfig, name: str) -> float:
    if config.sparsity_p is None:
        return 0.0
    conv_names = [layer.name for layer in arch.conv_layers]
    if len(config.sparsity_p) != len(conv_names):
        raise ContractViolation(
            f"sparsity_p has {len(config.sparsity_p)} entries for {len(conv_names)} conv layers"
        )
    return config.sparsity_p[conv_names.index(name)]


def share(model: ModelParams, config: ShareConfig, seed: int = 0) -> CompressedModel:
    """Cluster the rows of every selected conv layer; deterministic given ``seed``."""
    ks = allocate_k(model, config)
    layers: dict[str, SharedLayer] = {}
    for index, (name, k) in enumerate(ks.items()):
        w = reshape_rows(model.weights[name])
        p = _layer_p(model.arch, config, name)
        layer_seed = seed + index
        try:
            if p > 0:
                codebook = kmeans_with_zero_cluster(
                    w, k, p, layer_seed, config.max_iter, config.tol, config.restarts
                )
            else:
                codebook = kmeans(w, k, layer_seed, config.max_iter, config.tol, config.restarts)
        except ContractViolation as e:
            raise ContractViolation(f"layer {name}: {e}") from e
        layers[name] = SharedLayer(codebook=codebook, dims=LayerDims(*model.weights[name].shape))
        logger.info("shared %s: N=%d K=%d inertia=%.6g", name, w.shape[1], k, codebook.inertia)

    return CompressedModel(
        arch=model.arch,
        layers=layers,
        passthrough_weights={k: v.copy() for k, v in model.weights.items() if k not in layers},
        passthrough_biases={k: v.copy() for k, v in model.biases.items()},
        config=config,
        source_hash=model_hash(model),
    )


def reconstruct(cm: CompressedModel) -> ModelParams:
    """Dense model with every shared layer replaced by its quantized weights."""
    weights = {k: v.copy() for k, v in cm.passthrough_weights.items()}
    for name, layer in cm.layers.items():
        cb = layer.codebook
        if cb.n != layer.n or cb.centers.shape[0] != layer.s:
            raise FormatError(f"layer {name}: codebook does not match dims {tuple(layer.dims)}")
        if cb.assignments.size and (cb.assignments.min() < 0 or cb.assignments.max() >= cb.k):
            raise FormatError(f"layer {name}: corrupt cluster index")
        w = cb.centers[:, cb.assignments]
        weights[name] = unreshape_rows(w, layer.dims)
    return ModelParams(
        arch=cm.arch,
        weights=weights,
        biases={k: v.copy() for k, v in cm.passthrough_biases.items()},
    )


def compression_ratio_for(layers: Iterable[tuple[int, int, int]], weight_bits: int = 32) -> float:
    """CR from (s, N, K) triples: sum N s b / sum (K s b + N ceil(log2 K))."""
    original = 0
    compressed = 0
    for s, n, k in layers:
        original += n * s * weight_bits
        compressed += k * s * weight_bits + n * (k - 1).bit_length()
    if compressed == 0:
        raise ContractViolation("no compressed layers")
    return original / compressed


def compression_ratio(model: ModelParams, cm: CompressedModel) -> float:
    """Ratio over the shared conv layers only; other layers are excluded from both sums."""
    triples = []
    for name, layer in cm.layers.items():
        if model.weights[name].shape != tuple(layer.dims):
            raise ContractViolation(f"layer {name}: model and compressed model differ")
        triples.append((layer.s, layer.n, layer.codebook.k))
    return compression_ratio_for(triples, cm.config.weight_bits)
