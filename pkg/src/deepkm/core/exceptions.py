"""deepkm custom exceptions."""


class DeepKMError(Exception):
    """Base exception for all deepkm errors."""

    pass


class ContractViolation(DeepKMError):
    """A precondition of an operation does not hold (shapes, ranges, counts)."""

    pass


class ConfigurationError(DeepKMError):
    """Error in configuration."""

    pass


class FormatError(DeepKMError):
    """Malformed IDX, model or compressed-model file."""

    pass


class CorruptionError(FormatError):
    """Stored checksum does not match the file contents."""

    pass


class UnsupportedVersionError(FormatError):
    """File was written by a newer major format version."""

    pass


class UndefinedFitError(DeepKMError):
    """Least-squares fit is undefined (constant regressor)."""

    pass


class TrainingDivergedError(DeepKMError):
    """Training loss became NaN or infinite."""

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"Training diverged in epoch {epoch} (loss={loss})")


class PipelineStageError(DeepKMError):
    """A pipeline stage failed; carries the stage identity."""

    def __init__(self, phase: str, cause: Exception):
        self.phase = phase
        self.cause = cause
        super().__init__(f"Pipeline stage '{phase}' failed: {cause}")
