"""Validity toolkit for machine-generated scores.

Treats model-produced scores as noisy measurements of latent variables:
weighted aggregation, inter-rater reliability, dimensionality analysis,
prompt-sensitivity decomposition, attenuation estimation, and
mutual-instrument (ORIV) regression, with a simulation oracle for every
estimator and a FastAPI service plus CLI on top.
"""

from .errors import (
    DegenerateDataError,
    EstimationError,
    LatentGaugeError,
    PipelineStageError,
    ResponseParseError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateDataError",
    "EstimationError",
    "LatentGaugeError",
    "PipelineStageError",
    "ResponseParseError",
    "ValidationError",
    "__version__",
]
