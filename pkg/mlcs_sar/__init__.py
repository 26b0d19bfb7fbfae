"""Multilook compressed-sensing SAR imaging"""

__version__ = "0.1.0"

from .core import ComplexGrid, LookStack, RadarParams, SamplingMask, Seed
from .mlrda import LookPlan, build_filters, look_form, look_inverse
from .solver import multilook_sum, reconstruct
from .runner import ExperimentRunner

__all__ = [
    "ComplexGrid",
    "ExperimentRunner",
    "LookPlan",
    "LookStack",
    "RadarParams",
    "SamplingMask",
    "Seed",
    "build_filters",
    "look_form",
    "look_inverse",
    "multilook_sum",
    "reconstruct",
]
