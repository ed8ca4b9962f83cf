"""Pipeline stages and the state record saved as ``pipeline.state``."""

import sys
from datetime import datetime
from typing import Literal

from pydantic import BaseModel, Field

if sys.version_info >= (3, 11):
    from enum import StrEnum
else:  # Python 3.10 compatibility: equivalent of enum.StrEnum
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__

StageStatus = Literal["in_progress", "success", "failed"]

_DISPLAY_NAMES = {
    "load_data": "Loading data",
    "baseline_train": "Baseline training",
    "baseline_eval": "Baseline evaluation",
    "retrain": "Regularized retraining",
    "share": "Parameter sharing",
    "reconstruct": "Reconstruction",
    "evaluate": "Evaluation",
    "energy": "Energy metrics",
}


class PipelinePhase(StrEnum):
    """Stages of the train -> retrain -> share -> evaluate workflow."""

    LOAD_DATA = "load_data"
    BASELINE_TRAIN = "baseline_train"
    BASELINE_EVAL = "baseline_eval"
    RETRAIN = "retrain"
    SHARE = "share"
    RECONSTRUCT = "reconstruct"
    EVALUATE = "evaluate"
    ENERGY = "energy"
    COMPLETE = "complete"
    FAILED = "failed"

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES.get(self.value, self.value.title())


class StageRecord(BaseModel):
    """One entry per stage run; a stage repeats once per cluster rate."""

    phase: PipelinePhase
    status: StageStatus = "in_progress"
    message: str = ""
    started_at: datetime = Field(default_factory=datetime.now)
    completed_at: datetime | None = None
    error: str | None = None


class PipelineState(BaseModel):
    """Progress of one pipeline run.

    Timestamps live here and not in the report, so the report stays
    byte-identical between runs with the same config and seed.
    """

    arch: str
    dataset: str
    current_phase: PipelinePhase = PipelinePhase.LOAD_DATA
    stages: list[StageRecord] = Field(default_factory=list)
    started_at: datetime = Field(default_factory=datetime.now)
    completed_at: datetime | None = None
    last_error: str | None = None

    def start_phase(self, phase: PipelinePhase, message: str = "") -> StageRecord:
        self.current_phase = phase
        record = StageRecord(phase=phase, message=message)
        self.stages.append(record)
        return record

    def complete_phase(self, status: StageStatus = "success", error: str | None = None) -> None:
        if not self.stages:
            return
        record = self.stages[-1]
        record.status = status
        record.completed_at = datetime.now()
        record.error = error

    def fail(self, error: str) -> None:
        failed_in = self.current_phase
        self.complete_phase("failed", error=error)
        self.current_phase = PipelinePhase.FAILED
        self.last_error = f"{failed_in}: {error}"

    def complete(self) -> None:
        self.current_phase = PipelinePhase.COMPLETE
        self.completed_at = datetime.now()

    @property
    def is_complete(self) -> bool:
        return self.current_phase == PipelinePhase.COMPLETE

    @property
    def is_failed(self) -> bool:
        return self.current_phase == PipelinePhase.FAILED

    @property
    def completed_phases(self) -> list[PipelinePhase]:
        return [record.phase for record in self.stages if record.status == "success"]
