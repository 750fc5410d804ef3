"""Spatio-temporal traffic datasets and travel-duration forecasting.

Workflow: ingest the sensor/distance/matrix file trio (or run the trip
pipeline on raw GPS logs), fill gaps with the two-stage synthesis, analyse
intervals statistically, train the graph models, evaluate and report.
"""

from .core import (
    DurationMatrix,
    FeatureMatrix,
    SensorGraph,
    SensorId,
    TimeBucket,
    Unit,
    bucket_from_interval_index,
    bucket_timestamp,
    completeness,
    slice_interval,
)
from .errors import (
    DegenerateInputError,
    NumericalError,
    ProviderError,
    SynthesisError,
    TempographError,
    UnknownSensorError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "DurationMatrix",
    "FeatureMatrix",
    "SensorGraph",
    "SensorId",
    "TimeBucket",
    "Unit",
    "bucket_from_interval_index",
    "bucket_timestamp",
    "completeness",
    "slice_interval",
    "DegenerateInputError",
    "NumericalError",
    "ProviderError",
    "SynthesisError",
    "TempographError",
    "UnknownSensorError",
    "ValidationError",
    "__version__",
]
