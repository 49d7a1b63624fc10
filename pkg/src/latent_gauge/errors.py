"""Exception types shared across the package."""


class LatentGaugeError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(LatentGaugeError):
    """Input data violates a documented invariant (bad row, bad range, duplicate key)."""


class DegenerateDataError(LatentGaugeError):
    """A statistic is undefined on this input (constant series, zero variance, too few points)."""


class EstimationError(LatentGaugeError):
    """A regression or estimator could not be computed (rank deficiency, noise-dominated data)."""


class ResponseParseError(LatentGaugeError):
    """A provider response could not be parsed into valid scores."""


class PipelineStageError(LatentGaugeError):
    """A pipeline stage failed; carries the stage name for the CLI."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
