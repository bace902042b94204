"""Differential morphing-attack detection from Lambertian face decompositions."""

from .core import DatasetManifest, FloatMap, NormalMap, Record, SHLighting, ScoreSet
from .errors import DmadError, FormatError, MissingFileError, NumericError, StageError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "DatasetManifest",
    "DmadError",
    "FloatMap",
    "FormatError",
    "MissingFileError",
    "NormalMap",
    "NumericError",
    "Record",
    "SHLighting",
    "ScoreSet",
    "StageError",
    "ValidationError",
]
