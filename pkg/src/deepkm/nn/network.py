"""Layer graph, parameters, forward and backward passes."""

from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field, model_validator

from deepkm.core.exceptions import ContractViolation
from deepkm.nn import layers as L

Array = NDArray[np.float64]
LayerKind = Literal["conv", "maxpool", "relu", "fullyconnected", "softmax-xent"]


class LayerSpec(BaseModel):
    """One node of the layer chain."""

    name: str
    kind: LayerKind
    # conv
    s: int | None = Field(None, ge=1, description="Square filter size")
    c: int | None = Field(None, ge=1, description="Input channels")
    m: int | None = Field(None, ge=1, description="Output channels")
    stride: int = Field(1, ge=1)
    padding: Literal["valid", "same"] = "valid"
    # maxpool
    window: int | None = Field(None, ge=1)
    # fullyconnected
    in_dim: int | None = Field(None, ge=1)
    out_dim: int | None = Field(None, ge=1)

    @model_validator(mode="after")
    def _required_fields(self) -> "LayerSpec":
        needed = {
            "conv": ("s", "c", "m"),
            "maxpool": ("window",),
            "fullyconnected": ("in_dim", "out_dim"),
        }.get(self.kind, ())
        missing = [f for f in needed if getattr(self, f) is None]
        if missing:
            raise ValueError(f"{self.kind} layer {self.name} needs {', '.join(missing)}")
        return self

    @property
    def has_params(self) -> bool:
        return self.kind in ("conv", "fullyconnected")

    @property
    def filter_shape(self) -> tuple[int, int, int, int]:
        """(s, s, c, m) of a conv layer."""
        if self.kind != "conv":
            raise ContractViolation(f"{self.name} is a {self.kind} layer, not conv")
        assert self.s and self.c and self.m
        return (self.s, self.s, self.c, self.m)

    @property
    def weight_shape(self) -> tuple[int, ...]:
        if self.kind == "conv":
            return self.filter_shape
        assert self.in_dim and self.out_dim
        return (self.in_dim, self.out_dim)

    @property
    def fan_in(self) -> int:
        if self.kind == "conv":
            assert self.s and self.c
            return self.s * self.s * self.c
        assert self.in_dim
        return self.in_dim


class Architecture(BaseModel):
    """A shape-consistent layer chain ending in softmax cross-entropy."""

    name: str = "custom"
    input_shape: tuple[int, int, int] = Field(description="(channels, height, width)")
    num_classes: int = Field(ge=2)
    layers: list[LayerSpec]

    @model_validator(mode="after")
    def _shape_consistent(self) -> "Architecture":
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ValueError("layer names must be unique")
        if not self.layers or self.layers[-1].kind != "softmax-xent":
            raise ValueError("the chain must end with a softmax-xent layer")
        shapes = self.resolve_shapes()
        if int(np.prod(shapes[-1][1])) != self.num_classes:
            raise ValueError(
                f"final output {shapes[-1][1]} does not match {self.num_classes} classes"
            )
        return self

    def resolve_shapes(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        """(input shape, output shape) per layer, excluding the batch axis."""
        shape: tuple[int, ...] = self.input_shape
        out: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
        for layer in self.layers:
            in_shape = shape
            if layer.kind == "conv":
                assert layer.s and layer.m
                if len(shape) != 3 or shape[0] != layer.c:
                    raise ValueError(f"{layer.name}: expects {layer.c} input channels, got {shape}")
                h = L.conv_output_size(shape[1], layer.s, layer.stride, layer.padding)
                w = L.conv_output_size(shape[2], layer.s, layer.stride, layer.padding)
                if h < 1 or w < 1:
                    raise ValueError(f"{layer.name}: filter larger than input {shape}")
                shape = (layer.m, h, w)
            elif layer.kind == "maxpool":
                assert layer.window
                if len(shape) != 3:
                    raise ValueError(f"{layer.name}: pooling needs a feature map, got {shape}")
                h = (shape[1] - layer.window) // layer.stride + 1
                w = (shape[2] - layer.window) // layer.stride + 1
                if h < 1 or w < 1:
                    raise ValueError(f"{layer.name}: window larger than input {shape}")
                shape = (shape[0], h, w)
            elif layer.kind == "fullyconnected":
                flat = int(np.prod(shape))
                if flat != layer.in_dim:
                    raise ValueError(
                        f"{layer.name}: in_dim {layer.in_dim} != flattened input {flat}"
                    )
                assert layer.out_dim
                shape = (layer.out_dim,)
            out.append((in_shape, shape))
        return out

    def layer(self, name: str) -> LayerSpec:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    @property
    def conv_layers(self) -> list[LayerSpec]:
        return [layer for layer in self.layers if layer.kind == "conv"]


def lenet5(input_shape: tuple[int, int, int] = (1, 28, 28), num_classes: int = 10) -> Architecture:
    """LeNet-5: conv 5x5x1x6 -> pool -> conv 5x5x6x16 -> pool -> fc 120 -> fc 84 -> fc."""
    c, h, w = input_shape
    h2, w2 = (h // 2 - 4) // 2, (w // 2 - 4) // 2
    flat = 16 * h2 * w2
    return Architecture(
        name="lenet5",
        input_shape=input_shape,
        num_classes=num_classes,
        layers=[
            LayerSpec(name="conv1", kind="conv", s=5, c=c, m=6, padding="same"),
            LayerSpec(name="relu1", kind="relu"),
            LayerSpec(name="pool1", kind="maxpool", window=2, stride=2),
            LayerSpec(name="conv2", kind="conv", s=5, c=6, m=16),
            LayerSpec(name="relu2", kind="relu"),
            LayerSpec(name="pool2", kind="maxpool", window=2, stride=2),
            LayerSpec(name="fc1", kind="fullyconnected", in_dim=flat, out_dim=120),
            LayerSpec(name="relu3", kind="relu"),
            LayerSpec(name="fc2", kind="fullyconnected", in_dim=120, out_dim=84),
            LayerSpec(name="relu4", kind="relu"),
            LayerSpec(name="fc3", kind="fullyconnected", in_dim=84, out_dim=num_classes),
            LayerSpec(name="loss", kind="softmax-xent"),
        ],
    )


def toy_convnet(
    input_shape: tuple[int, int, int] = (1, 6, 6), num_classes: int = 3
) -> Architecture:
    """Two-layer net (conv 3x3 -> relu -> fc), small enough for finite differences."""
    c, h, w = input_shape
    return Architecture(
        name="toy",
        input_shape=input_shape,
        num_classes=num_classes,
        layers=[
            LayerSpec(name="conv1", kind="conv", s=3, c=c, m=2),
            LayerSpec(name="relu1", kind="relu"),
            LayerSpec(
                name="fc1", kind="fullyconnected", in_dim=2 * (h - 2) * (w - 2), out_dim=num_classes
            ),
            LayerSpec(name="loss", kind="softmax-xent"),
        ],
    )


ARCHITECTURES = {"lenet5": lenet5, "toy": toy_convnet}


def build_architecture(
    name: str, input_shape: tuple[int, int, int], num_classes: int
) -> Architecture:
    try:
        factory = ARCHITECTURES[name]
    except KeyError:
        raise ContractViolation(
            f"unknown architecture {name!r}; choose from {', '.join(ARCHITECTURES)}"
        ) from None
    return factory(input_shape, num_classes)


@dataclass
class ModelParams:
    """Weights and biases of every conv / fully-connected layer."""

    arch: Architecture
    weights: dict[str, Array]
    biases: dict[str, Array]
    # bumped on every in-place update; forward caches record it
    version: int = 0

    def __post_init__(self) -> None:
        for layer in self.arch.layers:
            if not layer.has_params:
                continue
            w = self.weights.get(layer.name)
            b = self.biases.get(layer.name)
            if w is None or b is None:
                raise ContractViolation(f"missing parameters for layer {layer.name}")
            if w.shape != layer.weight_shape or b.shape != (layer.weight_shape[-1],):
                raise ContractViolation(
                    f"{layer.name}: weight {w.shape} / bias {b.shape}"
                    f" do not match {layer.weight_shape}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ContractViolation(f"{layer.name}: non-finite parameters")

    @property
    def conv_names(self) -> list[str]:
        return [layer.name for layer in self.arch.conv_layers]

    def copy(self) -> "ModelParams":
        return ModelParams(
            arch=self.arch,
            weights={k: v.copy() for k, v in self.weights.items()},
            biases={k: v.copy() for k, v in self.biases.items()},
        )


@dataclass
class Gradients:
    """Gradients shaped exactly like ModelParams, plus the batch loss."""

    weights: dict[str, Array]
    biases: dict[str, Array]
    loss: float = 0.0


@dataclass
class ForwardCache:
    model: ModelParams
    version: int
    inputs: list[Any] = field(default_factory=list)
    logits: Array | None = None
    consumed: bool = False


def init_params(arch: Architecture, seed: int) -> ModelParams:
    """He-style fan-in scaled Gaussian weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights: dict[str, Array] = {}
    biases: dict[str, Array] = {}
    for layer in arch.layers:
        if not layer.has_params:
            continue
        std = np.sqrt(2.0 / layer.fan_in)
        weights[layer.name] = rng.normal(0.0, std, size=layer.weight_shape)
        biases[layer.name] = np.zeros(layer.weight_shape[-1])
    return ModelParams(arch=arch, weights=weights, biases=biases)


def forward(model: ModelParams, batch: Array) -> tuple[Array, ForwardCache]:
    """Logits for a (B, C, H, W) batch and the activations needed by backward."""
    expected = model.arch.input_shape
    if batch.ndim != 4 or tuple(batch.shape[1:]) != expected:
        raise ContractViolation(f"batch shape {batch.shape} does not match input {expected}")
    cache = ForwardCache(model=model, version=model.version)
    x = batch
    for layer in model.arch.layers:
        if layer.kind == "softmax-xent":
            break
        if layer.kind == "conv":
            out, xp = L.conv2d_forward(
                x, model.weights[layer.name], model.biases[layer.name], layer.stride, layer.padding
            )
            cache.inputs.append((x.shape, xp))
        elif layer.kind == "maxpool":
            assert layer.window
            out, argmax = L.maxpool_forward(x, layer.window, layer.stride)
            cache.inputs.append((x.shape, argmax))
        elif layer.kind == "relu":
            out = L.relu_forward(x)
            cache.inputs.append(x)
        else:
            out = L.dense_forward(x, model.weights[layer.name], model.biases[layer.name])
            cache.inputs.append(x)
        x = out
    cache.logits = x
    return x, cache


def backward(cache: ForwardCache, labels: NDArray[np.int64]) -> Gradients:
    """Gradients of the mean softmax cross-entropy of the cached batch."""
    model = cache.model
    if cache.consumed or cache.version != model.version or cache.logits is None:
        raise ContractViolation("stale forward cache: run forward again on the current parameters")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (cache.logits.shape[0],):
        raise ContractViolation(f"{labels.shape[0]} labels for a batch of {cache.logits.shape[0]}")
    cache.consumed = True

    loss, grad = L.softmax_cross_entropy(cache.logits, labels)
    weights: dict[str, Array] = {}
    biases: dict[str, Array] = {}
    param_layers = [layer for layer in model.arch.layers if layer.kind != "softmax-xent"]
    for layer, saved in zip(reversed(param_layers), reversed(cache.inputs)):
        if layer.kind == "conv":
            x_shape, xp = saved
            grad, dw, db = L.conv2d_backward(
                grad, xp, x_shape, model.weights[layer.name], layer.stride, layer.padding
            )
            weights[layer.name], biases[layer.name] = dw, db
        elif layer.kind == "maxpool":
            assert layer.window
            x_shape, argmax = saved
            grad = L.maxpool_backward(grad, argmax, x_shape, layer.window, layer.stride)
        elif layer.kind == "relu":
            grad = L.relu_backward(grad, saved)
        else:
            grad, dw, db = L.dense_backward(grad, saved, model.weights[layer.name])
            weights[layer.name], biases[layer.name] = dw, db
    return Gradients(weights=weights, biases=biases, loss=loss)


def loss_and_gradients(model: ModelParams, batch: Array, labels: NDArray[np.int64]) -> Gradients:
    _, cache = forward(model, batch)
    return backward(cache, labels)
