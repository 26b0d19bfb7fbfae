"""Image quality measures: equivalent number of looks, relative error, peak/ISLR."""

import math
from dataclasses import dataclass
from typing import Literal, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .core import ComplexGrid, LookStack
from .errors import DegenerateRegionError, ShapeError

# Replaces -inf in every dB output
DB_FLOOR = -300.0

MIN_REGION_PIXELS = 16

EnlMode = Literal["intensity", "amplitude"]


class RegionSpec(BaseModel):
    """Half-open pixel rectangle [az_start, az_end) x [rg_start, rg_end)"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    az_start: int = Field(..., ge=0, description="First azimuth row")
    az_end: int = Field(..., gt=0, description="One past the last azimuth row")
    rg_start: int = Field(..., ge=0, description="First range column")
    rg_end: int = Field(..., gt=0, description="One past the last range column")

    @model_validator(mode="after")
    def _check_nonempty(self):
        if self.az_end <= self.az_start or self.rg_end <= self.rg_start:
            raise ValueError(f"empty region {self.bounds}")
        return self

    @classmethod
    def centred(cls, shape: Tuple[int, int], size: Tuple[int, int]) -> "RegionSpec":
        az0 = (shape[0] - size[0]) // 2
        rg0 = (shape[1] - size[1]) // 2
        return cls(az_start=az0, az_end=az0 + size[0], rg_start=rg0, rg_end=rg0 + size[1])

    @property
    def bounds(self) -> Tuple[int, int, int, int]:
        return self.az_start, self.az_end, self.rg_start, self.rg_end

    @property
    def pixel_count(self) -> int:
        return (self.az_end - self.az_start) * (self.rg_end - self.rg_start)

    def inset(self, margin: int) -> "RegionSpec":
        """Shrink by `margin` pixels on every side"""
        return RegionSpec(
            az_start=self.az_start + margin, az_end=self.az_end - margin,
            rg_start=self.rg_start + margin, rg_end=self.rg_end - margin,
        )

    def for_looks(self, look_count: int) -> "RegionSpec":
        """Map full-resolution rows to look-image rows (azimuth decimated by L)"""
        if look_count == 1:
            return self
        return RegionSpec(
            az_start=-(-self.az_start // look_count),
            az_end=self.az_end // look_count,
            rg_start=self.rg_start,
            rg_end=self.rg_end,
        )

    def check_fits(self, shape: Tuple[int, int]) -> None:
        if self.az_end > shape[0] or self.rg_end > shape[1]:
            raise ShapeError(f"region {self.bounds} exceeds image shape {tuple(shape)}")

    def slices(self) -> Tuple[slice, slice]:
        return slice(self.az_start, self.az_end), slice(self.rg_start, self.rg_end)


@dataclass(frozen=True)
class PeakReport:
    position: Tuple[int, int]
    value: float
    islr_db: float


def _values(image) -> np.ndarray:
    if isinstance(image, (ComplexGrid, LookStack)):
        return image.data
    if isinstance(image, np.ndarray):
        return image
    return np.asarray(getattr(image, "values", image))


def _magnitudes(image) -> np.ndarray:
    return np.abs(_values(image))


def enl(image, region: RegionSpec, mode: EnlMode = "intensity") -> float:
    """Equivalent number of looks (mean / std)^2 over `region`.

    Intensity mode uses z^2 as the speckle statistics are defined on
    intensity; amplitude mode uses z itself.
    """
    values = _magnitudes(image)
    region.check_fits(values.shape)
    if region.pixel_count < MIN_REGION_PIXELS:
        raise DegenerateRegionError(
            f"region {region.bounds} has {region.pixel_count} pixels, "
            f"need at least {MIN_REGION_PIXELS}"
        )
    patch = values[region.slices()]
    samples = patch ** 2 if mode == "intensity" else patch
    variance = float(np.var(samples))
    if variance == 0.0:
        raise DegenerateRegionError(f"degenerate region {region.bounds}: zero variance")
    return float(np.mean(samples)) ** 2 / variance


def _to_db(ratio: float, scale: float) -> float:
    if ratio <= 0.0:
        return DB_FLOOR
    return max(DB_FLOOR, scale * math.log10(ratio))


def relative_error(estimate, truth) -> float:
    """20 log10(||estimate - truth|| / ||truth||), floored at DB_FLOOR"""
    est = _values(estimate)
    ref = _values(truth)
    if est.shape != ref.shape:
        raise ShapeError(f"estimate {est.shape} and truth {ref.shape} differ in shape")
    reference = float(np.linalg.norm(ref))
    if reference == 0.0:
        raise ValueError("relative error undefined for an all-zero truth")
    return _to_db(float(np.linalg.norm(est - ref)) / reference, 20.0)


def peak_report(
    image: Union[ComplexGrid, LookStack, np.ndarray],
    window: Union[int, Tuple[int, int]] = 5,
) -> PeakReport:
    """Peak cell, peak magnitude and integrated sidelobe ratio.

    The mainlobe is a `window` box centred on the peak, clipped at the
    image edges; ISLR is the energy outside it over the energy inside.
    """
    magnitude = _magnitudes(image)
    if magnitude.ndim != 2:
        raise ShapeError(f"peak report needs a 2D image, got shape {magnitude.shape}")
    energy = magnitude ** 2
    total = float(energy.sum())
    if total == 0.0:
        raise ValueError("peak report undefined for an all-zero image")
    win_az, win_rg = (window, window) if isinstance(window, int) else window
    az, rg = np.unravel_index(int(np.argmax(magnitude)), magnitude.shape)
    box = (
        slice(max(0, az - win_az // 2), az + win_az // 2 + 1),
        slice(max(0, rg - win_rg // 2), rg + win_rg // 2 + 1),
    )
    inside = float(energy[box].sum())
    return PeakReport(
        position=(int(az), int(rg)),
        value=float(magnitude[az, rg]),
        islr_db=_to_db((total - inside) / inside, 10.0),
    )
