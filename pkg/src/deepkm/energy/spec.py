"""Network descriptions for the energy metrics.

A NetworkSpec lists the conv and fully-connected layers of a network with
their input sizes and fixed-point precisions. Pooling and activations carry
no weights and are not part of the spec. Specs are read from YAML:

    name: lenet5
    b_w: 16
    b_x: 16
    layers:
      - {name: conv1, kind: conv, s: 5, c: 1, m: 6, h_in: 28, w_in: 28}
      - {name: fc1, kind: fullyconnected, in_dim: 256, out_dim: 120, b_w: 16}
"""

import math
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator

from deepkm.core.exceptions import ConfigurationError, ContractViolation
from deepkm.nn.network import Architecture


class EnergyLayer(BaseModel):
    """One weighted layer with the counts the cost model needs."""

    name: str
    kind: Literal["conv", "fullyconnected"]
    s: int | None = Field(None, ge=1)
    c: int | None = Field(None, ge=1)
    m: int | None = Field(None, ge=1)
    h_in: int | None = Field(None, ge=1)
    w_in: int | None = Field(None, ge=1)
    stride: int = Field(1, ge=1)
    padding: Literal["valid", "same"] = "valid"
    in_dim: int | None = Field(None, ge=1)
    out_dim: int | None = Field(None, ge=1)
    # per-layer precision overrides (e.g. 16-bit fc next to 8-bit conv)
    b_w: int | None = Field(None, ge=1, le=64)
    b_x: int | None = Field(None, ge=1, le=64)
    shared_k: int | None = Field(None, ge=1, description="K when the layer is weight shared")
    pruned_fraction: float = Field(0.0, ge=0, lt=1, description="Fraction of filters pruned away")

    @model_validator(mode="after")
    def _dims_present(self) -> "EnergyLayer":
        needed = ("s", "c", "m", "h_in", "w_in") if self.kind == "conv" else ("in_dim", "out_dim")
        missing = [f for f in needed if getattr(self, f) is None]
        if missing:
            raise ValueError(f"{self.kind} layer {self.name} needs {', '.join(missing)}")
        if self.kind == "conv" and (self.h_out < 1 or self.w_out < 1):
            raise ValueError(
                f"layer {self.name}: filter {self.s} larger than input {self.h_in}x{self.w_in}"
            )
        if self.shared_k is not None and self.shared_k > self.n_columns:
            raise ValueError(f"layer {self.name}: K={self.shared_k} exceeds N={self.n_columns}")
        return self

    def _out(self, size: int) -> int:
        assert self.s
        if self.padding == "same":
            return math.ceil(size / self.stride)
        return (size - self.s) // self.stride + 1

    @property
    def h_out(self) -> int:
        return self._out(self.h_in or 0) if self.kind == "conv" else 1

    @property
    def w_out(self) -> int:
        return self._out(self.w_in or 0) if self.kind == "conv" else 1

    @property
    def dot_length(self) -> int:
        """D: multiplications per output value."""
        if self.kind == "conv":
            assert self.s and self.c
            return self.s * self.s * self.c
        assert self.in_dim
        return self.in_dim

    @property
    def outputs(self) -> int:
        """Output channels (conv) or units (fc) before pruning."""
        return (self.m if self.kind == "conv" else self.out_dim) or 0

    @property
    def n_columns(self) -> int:
        """Columns of the row-wise reshaped weights; fc layers count one per weight."""
        if self.kind == "conv":
            assert self.s and self.c and self.m
            return self.s * self.c * self.m
        assert self.in_dim and self.out_dim
        return self.in_dim * self.out_dim


class NetworkSpec(BaseModel):
    """Weighted layers of a network plus the default precisions."""

    name: str = "network"
    b_w: int = Field(16, ge=1, le=64, description="Default weight precision in bits")
    b_x: int = Field(16, ge=1, le=64, description="Default activation precision in bits")
    layers: list[EnergyLayer] = Field(default_factory=list)

    @model_validator(mode="after")
    def _unique_names(self) -> "NetworkSpec":
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ValueError("layer names must be unique")
        return self

    def precision(self, layer: EnergyLayer) -> tuple[int, int]:
        return layer.b_w or self.b_w, layer.b_x or self.b_x

    def layer(self, name: str) -> EnergyLayer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise ContractViolation(f"no layer {name!r} in spec {self.name}")

    def _replace(self, name: str, **update: object) -> "NetworkSpec":
        target = self.layer(name)
        layers = [
            EnergyLayer.model_validate({**layer.model_dump(), **update})
            if layer is target
            else layer
            for layer in self.layers
        ]
        return self.model_copy(update={"layers": layers})


def load_network_spec(path: Path) -> NetworkSpec:
    """Load a NetworkSpec from a YAML file."""
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
        return NetworkSpec.model_validate(data)
    except (OSError, yaml.YAMLError, ValidationError) as e:
        raise ConfigurationError(f"Failed to load network spec {path}: {e}") from e


def save_network_spec(path: Path, spec: NetworkSpec) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(spec.model_dump(exclude_defaults=True), f, sort_keys=False)


def network_spec_from_architecture(
    arch: Architecture,
    b_w: int = 16,
    b_x: int = 16,
    fc_b_w: int | None = None,
    fc_b_x: int | None = None,
    shared_k: dict[str, int] | None = None,
    pruned: dict[str, float] | None = None,
) -> NetworkSpec:
    """Derive the weighted layers of ``arch`` with their resolved input sizes."""
    shared_k = shared_k or {}
    pruned = pruned or {}
    layers: list[EnergyLayer] = []
    for layer, (in_shape, _out_shape) in zip(arch.layers, arch.resolve_shapes()):
        if layer.kind == "conv":
            layers.append(
                EnergyLayer(
                    name=layer.name,
                    kind="conv",
                    s=layer.s,
                    c=layer.c,
                    m=layer.m,
                    h_in=in_shape[1],
                    w_in=in_shape[2],
                    stride=layer.stride,
                    padding=layer.padding,
                    shared_k=shared_k.get(layer.name),
                    pruned_fraction=pruned.get(layer.name, 0.0),
                )
            )
        elif layer.kind == "fullyconnected":
            layers.append(
                EnergyLayer(
                    name=layer.name,
                    kind="fullyconnected",
                    in_dim=layer.in_dim,
                    out_dim=layer.out_dim,
                    b_w=fc_b_w,
                    b_x=fc_b_x,
                    shared_k=shared_k.get(layer.name),
                    pruned_fraction=pruned.get(layer.name, 0.0),
                )
            )
    return NetworkSpec(name=arch.name, b_w=b_w, b_x=b_x, layers=layers)


def prune_filters(spec: NetworkSpec, layer: str, fraction: float) -> NetworkSpec:
    """Copy of ``spec`` with ``fraction`` of the layer's filters removed."""
    if not 0 <= fraction < 1:
        raise ContractViolation(f"pruned fraction must be in [0, 1), got {fraction}")
    return spec._replace(layer, pruned_fraction=fraction)


def share_weights(spec: NetworkSpec, ks: dict[str, int]) -> NetworkSpec:
    """Copy of ``spec`` with the given layers weight shared at K clusters."""
    out = spec
    for name, k in ks.items():
        try:
            out = out._replace(name, shared_k=k)
        except ValidationError as e:
            raise ContractViolation(f"cannot share layer {name} at K={k}: {e}") from e
    return out


def with_fc_precision(
    spec: NetworkSpec, b_w: int | None = None, b_x: int | None = None
) -> NetworkSpec:
    """Copy of ``spec`` with the given precisions set on every fully-connected layer."""
    update = {key: value for key, value in (("b_w", b_w), ("b_x", b_x)) if value is not None}
    out = spec
    if update:
        for layer in spec.layers:
            if layer.kind == "fullyconnected":
                out = out._replace(layer.name, **update)
    return out
