"""deepkm configuration models."""

from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from deepkm.core.exceptions import ConfigurationError

LAMBDA_MIN = 1e-6
LAMBDA_MAX = 1e-1


def check_lambda(value: float) -> float:
    """Accept 0 (regularizer disabled) or a value inside the sanity bounds."""
    if value != 0 and not LAMBDA_MIN <= value <= LAMBDA_MAX:
        raise ValueError(f"lambda must be 0 or within [{LAMBDA_MIN}, {LAMBDA_MAX}], got {value}")
    return value


class TrainConfig(BaseModel):
    """Momentum SGD settings for training and retraining."""

    learning_rate: float = Field(0.01, gt=0, description="Initial learning rate")
    momentum: float = Field(0.9, ge=0, lt=1)
    batch_size: int = Field(64, ge=1)
    epochs: int = Field(60, ge=0)
    seed: int = Field(0, ge=0, lt=2**64)
    lr_decay_factor: float = Field(0.5, gt=0, le=1, description="Step decay multiplier")
    lr_decay_every: int = Field(10, ge=1, description="Epochs between decay steps")

    def learning_rate_at(self, epoch: int) -> float:
        """Step-decayed learning rate for a zero-based epoch."""
        return self.learning_rate * self.lr_decay_factor ** (epoch // self.lr_decay_every)


class RegConfig(BaseModel):
    """Spectrally relaxed k-means regularizer settings."""

    model_config = ConfigDict(populate_by_name=True)

    lam: float = Field(1e-4, alias="lambda", ge=0)
    refresh_every_epochs: int = Field(5, ge=1)
    per_layer_k: dict[str, int] = Field(default_factory=dict)
    # Layer name -> fraction of smallest-norm columns pinned to a zero center
    sparsity_p: dict[str, float] = Field(default_factory=dict)

    @field_validator("lam")
    @classmethod
    def _lambda_in_sane_range(cls, value: float) -> float:
        return check_lambda(value)

    @field_validator("per_layer_k")
    @classmethod
    def _positive_k(cls, value: dict[str, int]) -> dict[str, int]:
        for name, k in value.items():
            if k < 1:
                raise ValueError(f"K for layer {name} must be >= 1, got {k}")
        return value

    @field_validator("sparsity_p")
    @classmethod
    def _p_in_range(cls, value: dict[str, float]) -> dict[str, float]:
        for name, p in value.items():
            if not 0 <= p < 1:
                raise ValueError(f"sparsity p for layer {name} must be in [0, 1), got {p}")
        return value


class ShareConfig(BaseModel):
    """Row-wise k-means parameter sharing settings."""

    cluster_rate: float = Field(gt=0, le=1, description="K/N for every conv layer but the first")
    first_layer_rate: float | None = Field(
        None, gt=0, le=1, description="K/N for the first conv layer (default 4x cluster_rate)"
    )
    sparsity_p: list[float] | None = Field(None, description="Per conv layer zero-cluster fraction")
    weight_bits: int = Field(32, ge=1, le=64)
    only_layer: str | None = Field(
        None, description="Compress this conv layer only (layer-wise CR)"
    )
    restarts: int = Field(3, ge=1)
    max_iter: int = Field(100, ge=1)
    tol: float = Field(1e-6, ge=0)

    @field_validator("sparsity_p")
    @classmethod
    def _p_in_range(cls, value: list[float] | None) -> list[float] | None:
        if value is not None:
            for p in value:
                if not 0 <= p < 1:
                    raise ValueError(f"sparsity p must be in [0, 1), got {p}")
        return value

    @property
    def effective_first_layer_rate(self) -> float:
        if self.first_layer_rate is not None:
            return self.first_layer_rate
        return min(1.0, 4 * self.cluster_rate)


class PipelineConfig(BaseModel):
    """End-to-end train -> retrain -> share -> evaluate settings."""

    train: TrainConfig = Field(default_factory=TrainConfig)
    retrain_epochs: int = Field(30, ge=0)
    lam: float = Field(1e-4, alias="lambda", ge=0)
    refresh_every_epochs: int = Field(5, ge=1)
    cluster_rates: list[float] = Field(default_factory=lambda: [0.25])
    first_layer_rate: float | None = Field(None, gt=0, le=1)
    sparsity_p: list[float] | None = None
    weight_bits: int = Field(32, ge=1, le=64)
    only_layer: str | None = Field(None, description="Compress and regularize one conv layer only")
    b_w: int = Field(16, ge=1, le=64, description="Weight precision for energy metrics")
    b_x: int = Field(16, ge=1, le=64, description="Activation precision for energy metrics")
    seed: int = Field(0, ge=0)

    model_config = ConfigDict(populate_by_name=True)

    @model_validator(mode="after")
    def _check_rates(self) -> "PipelineConfig":
        if not self.cluster_rates:
            raise ValueError("at least one cluster rate is required")
        for rate in self.cluster_rates:
            if not 0 < rate <= 1:
                raise ValueError(f"cluster rate must be in (0, 1], got {rate}")
        check_lambda(self.lam)
        return self

    def share_config(self, cluster_rate: float) -> ShareConfig:
        return ShareConfig(
            cluster_rate=cluster_rate,
            first_layer_rate=self.first_layer_rate,
            sparsity_p=self.sparsity_p,
            weight_bits=self.weight_bits,
            only_layer=self.only_layer,
        )

    def retrain_config(self) -> TrainConfig:
        return self.train.model_copy(update={"epochs": self.retrain_epochs})


def load_pipeline_config(path: Path) -> PipelineConfig:
    """Load a PipelineConfig from a YAML file."""
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
        return PipelineConfig.model_validate(data)
    except (OSError, yaml.YAMLError, ValidationError) as e:
        raise ConfigurationError(f"Failed to load config {path}: {e}") from e
