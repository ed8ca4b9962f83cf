"""Core module - configuration, errors, pipeline state."""

from deepkm.core.config import PipelineConfig, RegConfig, ShareConfig, TrainConfig
from deepkm.core.exceptions import ConfigurationError, ContractViolation, DeepKMError, FormatError
from deepkm.core.phases import PipelinePhase, PipelineState
from deepkm.core.state import RunStore

__all__ = [
    "ConfigurationError",
    "ContractViolation",
    "DeepKMError",
    "FormatError",
    "PipelineConfig",
    "PipelinePhase",
    "PipelineState",
    "RegConfig",
    "RunStore",
    "ShareConfig",
    "TrainConfig",
]
