"""Domain types, unitary FFT conventions and seeded randomness.

All grids are laid out azimuth-major: shape ``(n_azimuth, n_range)``.
FFTs are unitary in both directions, so the adjoint of every FFT stage is
its inverse.
"""

import hashlib
import math
import os
from dataclasses import dataclass
from typing import Literal, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.fft
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ShapeError

Window = Literal["rect", "hamming"]

SPEED_OF_LIGHT = 299_792_458.0

# Minimum oversampling accepted by RadarParams validation
MIN_OVERSAMPLING = 1.1


def fft_workers() -> int:
    """Worker count for batched FFTs (MLCS_FFT_WORKERS, default 1)"""
    return max(1, int(os.getenv("MLCS_FFT_WORKERS", "1")))


class RadarParams(BaseModel):
    """Physical and sampling constants of a zero-squint stripmap geometry"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    carrier_freq_hz: float = Field(5.0e9, gt=0, description="Carrier frequency f0")
    slant_range_m: float = Field(20.0e3, gt=0, description="Closest-approach range R0")
    platform_velocity_mps: float = Field(350.0, gt=0, description="Platform velocity v")
    range_bandwidth_hz: float = Field(75.0e6, gt=0, description="Chirp bandwidth Br")
    pulse_duration_s: float = Field(2.0e-6, gt=0, description="Chirp duration Tr")
    range_fm_rate_hzps: Optional[float] = Field(
        None, gt=0,
        description="Chirp FM rate Kr; derived as Br / Tr when omitted"
    )
    prf_hz: float = Field(..., gt=0, description="Pulse repetition frequency")
    range_sample_rate_hz: float = Field(..., gt=0, description="Range sampling rate fs")
    synthetic_aperture_time_s: float = Field(..., gt=0, description="Illumination time Ta")
    light_speed_mps: float = Field(SPEED_OF_LIGHT, gt=0, description="Propagation speed c")
    azimuth_window: Window = Field("rect", description="Azimuth envelope w_a")
    range_window: Window = Field("rect", description="Range envelope w_r")

    @model_validator(mode="before")
    @classmethod
    def _derive_fm_rate(cls, values):
        if isinstance(values, dict) and values.get("range_fm_rate_hzps") is None:
            values = dict(values)
            bandwidth = values.get("range_bandwidth_hz", 75.0e6)
            duration = values.get("pulse_duration_s", 2.0e-6)
            if bandwidth and duration and duration > 0:
                values["range_fm_rate_hzps"] = bandwidth / duration
        return values

    @model_validator(mode="after")
    def _check_consistency(self):
        expected = self.range_bandwidth_hz / self.pulse_duration_s
        if not math.isclose(self.range_fm_rate_hzps, expected, rel_tol=1e-9):
            raise ValueError(
                f"range_fm_rate_hzps={self.range_fm_rate_hzps:g} must equal "
                f"range_bandwidth_hz / pulse_duration_s = {expected:g}"
            )
        if self.range_sample_rate_hz < MIN_OVERSAMPLING * self.range_bandwidth_hz:
            raise ValueError(
                f"range_sample_rate_hz={self.range_sample_rate_hz:g} is below "
                f"{MIN_OVERSAMPLING} x range bandwidth ({self.range_bandwidth_hz:g} Hz)"
            )
        if self.prf_hz < MIN_OVERSAMPLING * self.doppler_bandwidth_hz:
            raise ValueError(
                f"prf_hz={self.prf_hz:g} is below {MIN_OVERSAMPLING} x Doppler "
                f"bandwidth ({self.doppler_bandwidth_hz:g} Hz)"
            )
        return self

    @classmethod
    def desk_scale(
        cls,
        n_azimuth: int,
        range_oversampling: float = 1.2,
        azimuth_oversampling: float = 1.2,
        aperture_fill: float = 0.9,
        **overrides,
    ) -> "RadarParams":
        """Derive PRF, range sampling rate and aperture time for a grid.

        The aperture time is chosen so that one target's azimuth history
        covers `aperture_fill` of the `n_azimuth` pulses.
        """
        base = {
            name: field.default
            for name, field in cls.model_fields.items()
            if field.default is not None and not field.is_required()
        }
        base.pop("range_fm_rate_hzps", None)
        base.update({k: v for k, v in overrides.items() if k not in (
            "prf_hz", "range_sample_rate_hz", "synthetic_aperture_time_s"
        )})
        wavelength = base["light_speed_mps"] / base["carrier_freq_hz"]
        velocity = base["platform_velocity_mps"]
        slant_range = base["slant_range_m"]
        azimuth_fm_rate = 2.0 * velocity ** 2 / (wavelength * slant_range)
        aperture_time = overrides.get(
            "synthetic_aperture_time_s",
            math.sqrt(aperture_fill * n_azimuth / (azimuth_oversampling * azimuth_fm_rate)),
        )
        doppler_bw = _doppler_bandwidth(wavelength, velocity, slant_range, aperture_time)
        base["synthetic_aperture_time_s"] = aperture_time
        base["prf_hz"] = overrides.get("prf_hz", azimuth_oversampling * doppler_bw)
        base["range_sample_rate_hz"] = overrides.get(
            "range_sample_rate_hz", range_oversampling * base["range_bandwidth_hz"]
        )
        return cls(**base)

    @property
    def wavelength_m(self) -> float:
        return self.light_speed_mps / self.carrier_freq_hz

    @property
    def doppler_bandwidth_hz(self) -> float:
        return _doppler_bandwidth(
            self.wavelength_m,
            self.platform_velocity_mps,
            self.slant_range_m,
            self.synthetic_aperture_time_s,
        )

    @property
    def azimuth_fm_rate_hzps(self) -> float:
        return 2.0 * self.platform_velocity_mps ** 2 / (self.wavelength_m * self.slant_range_m)

    @property
    def range_cell_m(self) -> float:
        """Slant-range spacing of adjacent range samples"""
        return self.light_speed_mps / (2.0 * self.range_sample_rate_hz)

    @property
    def azimuth_cell_m(self) -> float:
        return self.platform_velocity_mps / self.prf_hz

    def digest(self) -> str:
        """Stable hash of the parameter set, recorded in manifests"""
        return hashlib.sha256(self.model_dump_json().encode()).hexdigest()[:16]


def _doppler_bandwidth(wavelength, velocity, slant_range, aperture_time) -> float:
    half_track = velocity * aperture_time / 2.0
    sin_edge = half_track / math.hypot(slant_range, half_track)
    return 2.0 * (2.0 * velocity * sin_edge / wavelength)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ComplexGrid:
    """Immutable 2D complex array, azimuth × range"""
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.complex128, copy=True)
        if data.ndim != 2:
            raise ShapeError(f"ComplexGrid needs a 2D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("ComplexGrid values must be finite")
        object.__setattr__(self, "data", _frozen(data))

    @classmethod
    def zeros(cls, shape: Tuple[int, int]) -> "ComplexGrid":
        return cls(np.zeros(shape, dtype=np.complex128))

    @property
    def n_azimuth(self) -> int:
        return self.data.shape[0]

    @property
    def n_range(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def flat(self) -> np.ndarray:
        """Azimuth-major vectorization"""
        return self.data.ravel()

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def __add__(self, other: "ComplexGrid") -> "ComplexGrid":
        _check_same_shape(self, other)
        return ComplexGrid(self.data + other.data)

    def __sub__(self, other: "ComplexGrid") -> "ComplexGrid":
        _check_same_shape(self, other)
        return ComplexGrid(self.data - other.data)

    def __mul__(self, scalar: complex) -> "ComplexGrid":
        return ComplexGrid(self.data * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class LookStack:
    """L complex subimages of equal shape, stored as an (L, n_az/L, n_rg) array"""
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.complex128, copy=True)
        if data.ndim != 3 or data.shape[0] < 1:
            raise ShapeError(f"LookStack needs an (L, azimuth, range) array, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("LookStack values must be finite")
        object.__setattr__(self, "data", _frozen(data))

    @classmethod
    def from_grids(cls, looks: Sequence[ComplexGrid]) -> "LookStack":
        shapes = {look.shape for look in looks}
        if len(shapes) != 1:
            raise ShapeError(f"looks must share one shape, got {sorted(shapes)}")
        return cls(np.stack([look.data for look in looks]))

    @classmethod
    def zeros(cls, look_count: int, look_shape: Tuple[int, int]) -> "LookStack":
        return cls(np.zeros((look_count,) + tuple(look_shape), dtype=np.complex128))

    @classmethod
    def from_rows(cls, rows: np.ndarray, look_shape: Tuple[int, int]) -> "LookStack":
        """Inverse of `as_rows`"""
        return cls(np.asarray(rows).T.reshape((rows.shape[1],) + tuple(look_shape)))

    @property
    def look_count(self) -> int:
        return self.data.shape[0]

    @property
    def look_shape(self) -> Tuple[int, int]:
        return self.data.shape[1:]

    @property
    def looks(self) -> Tuple[ComplexGrid, ...]:
        return tuple(ComplexGrid(look) for look in self.data)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.data.shape

    def as_rows(self) -> np.ndarray:
        """Pixel-major matrix (pixels × L): row j gathers pixel j across looks"""
        return self.data.reshape(self.look_count, -1).T

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def __add__(self, other: "LookStack") -> "LookStack":
        _check_same_shape(self, other)
        return LookStack(self.data + other.data)

    def __sub__(self, other: "LookStack") -> "LookStack":
        _check_same_shape(self, other)
        return LookStack(self.data - other.data)

    def __mul__(self, scalar: complex) -> "LookStack":
        return LookStack(self.data * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class SamplingMask:
    """Sorted flat indices of retained raw samples"""
    retained: np.ndarray
    shape: Tuple[int, int]

    def __post_init__(self):
        retained = np.array(self.retained, dtype=np.int64, copy=True).ravel()
        shape = tuple(int(n) for n in self.shape)
        total = shape[0] * shape[1]
        if retained.size and (np.any(np.diff(retained) <= 0)):
            raise ValueError("mask indices must be unique and strictly increasing")
        if retained.size and (retained[0] < 0 or retained[-1] >= total):
            raise ValueError(f"mask indices must lie in [0, {total})")
        object.__setattr__(self, "retained", _frozen(retained))
        object.__setattr__(self, "shape", shape)

    @property
    def total_samples(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def rate(self) -> float:
        return self.retained.size / self.total_samples

    def __len__(self) -> int:
        return self.retained.size


@dataclass(frozen=True)
class Seed:
    """64-bit seed; every random stream is derived from it by name"""
    value: int

    def __post_init__(self):
        if not 0 <= int(self.value) < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.value}")
        object.__setattr__(self, "value", int(self.value))

    def generator(self, stream: str) -> np.random.Generator:
        """Counter-based (Philox) generator keyed by (seed, stream name)"""
        tag = int.from_bytes(hashlib.blake2b(stream.encode(), digest_size=8).digest(), "little")
        sequence = np.random.SeedSequence([self.value, tag])
        return np.random.Generator(np.random.Philox(sequence))

    def derive(self, *indices: int) -> "Seed":
        """Child seed for a repetition, e.g. derive(rate_index, look_index, rep)"""
        payload = b"".join(int(i).to_bytes(8, "little", signed=False) for i in (self.value,) + indices)
        digest = hashlib.blake2b(payload, digest_size=8).digest()
        return Seed(int.from_bytes(digest, "little"))


GridLike = Union[ComplexGrid, LookStack]


def _check_same_shape(a, b) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def _fft(array: np.ndarray, axis: int, inverse: bool) -> np.ndarray:
    transform = scipy.fft.ifft if inverse else scipy.fft.fft
    return transform(array, axis=axis, norm="ortho", workers=fft_workers())


def fft_azimuth(grid: ComplexGrid, inverse: bool = False) -> ComplexGrid:
    """Unitary DFT along azimuth for every range column"""
    return ComplexGrid(_fft(grid.data, axis=0, inverse=inverse))


def fft_range(grid: ComplexGrid, inverse: bool = False) -> ComplexGrid:
    """Unitary DFT along range for every azimuth line"""
    return ComplexGrid(_fft(grid.data, axis=1, inverse=inverse))


def inner_product(a: GridLike, b: GridLike) -> complex:
    """<a, b> = sum(conj(a) * b)"""
    _check_same_shape(a, b)
    return complex(np.vdot(a.data, b.data))
