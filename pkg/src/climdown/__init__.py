"""Conditional diffusion downscaling of climate-like grids.

Public surface: the Field data type and its file format, the synthetic
data pipeline, sklearn-style downscaler estimators, and the evaluation
helpers. The command-line interface lives in climdown.cli.
"""

from .fields import Field, FieldFileError, center_crop, field_stats, read_fields, write_fields
from .schedule import NoiseSchedule, linear_schedule
from .datagen import (
    DatasetBundle,
    SyntheticSpec,
    degrade,
    generate_dataset,
    generate_fields,
    load_bundle,
    normalize_field,
    denormalize_field,
    upsample_condition,
)
from .resample import bicubic_resize, bicubic_upscale, bilinear_upscale
from .metrics import highfreq_energy, percent_improvement, rmse
from .estimators import (
    BicubicUpscaler,
    BilinearUpscaler,
    DiffusionDownscaler,
    SRResNetDownscaler,
    UNetDownscaler,
)

__version__ = "0.1.0"

__all__ = [
    "Field",
    "FieldFileError",
    "center_crop",
    "field_stats",
    "read_fields",
    "write_fields",
    "NoiseSchedule",
    "linear_schedule",
    "DatasetBundle",
    "SyntheticSpec",
    "degrade",
    "generate_dataset",
    "generate_fields",
    "load_bundle",
    "normalize_field",
    "denormalize_field",
    "upsample_condition",
    "bicubic_resize",
    "bicubic_upscale",
    "bilinear_upscale",
    "highfreq_energy",
    "percent_improvement",
    "rmse",
    "BicubicUpscaler",
    "BilinearUpscaler",
    "DiffusionDownscaler",
    "SRResNetDownscaler",
    "UNetDownscaler",
]
