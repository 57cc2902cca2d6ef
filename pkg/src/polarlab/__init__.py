"""Self-supervised neural decoding of short polar codes, with classical baselines."""

from .codebook import CodeSpec, encode, min_distance, bounded_distance_decode
from .errors import (CheckpointError, ConfigurationError, PolarLabError,
                     TrainingDivergedError, ValidationError)

__version__ = "0.1.0"
