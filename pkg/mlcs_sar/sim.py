"""Raw echo simulation, noise injection and compressive subsampling.

The raw grid shares the scene grid: pulse m is sent at azimuth time
``(m - Na/2) / PRF`` and range sample k is taken at
``2 R0 / c + (k - Nr/2) / fs``. Echo offsets are periodic over the raw
window in both axes, the same circular support the FFT-domain operators
assume, so the simulator and the look-formation chain describe one model.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Optional, Sequence, Tuple

import numpy as np

from .core import ComplexGrid, RadarParams, SamplingMask, Seed
from .errors import ConfigError, OperatorSizeError, ShapeError, SwathError

logger = logging.getLogger(__name__)

MaskPattern = Literal["sample", "pulse"]

DEFAULT_MATRIX_CAP = 2 ** 24

# Targets simulated per vectorized chunk
_CHUNK = 32


@dataclass(frozen=True)
class PointTarget:
    """Off-grid scatterer; positions are offsets from the scene centre"""
    azimuth_pos_m: float
    range_pos_m: float
    amplitude: complex


@dataclass(frozen=True, eq=False)
class Scene:
    reflectivity: ComplexGrid
    cell_spacing_azimuth_m: float
    cell_spacing_range_m: float
    targets: Tuple[PointTarget, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        for target in self.targets:
            if not np.isfinite(complex(target.amplitude)):
                raise ValueError(f"target amplitude must be finite: {target}")

    @classmethod
    def empty(cls, shape: Tuple[int, int], params: RadarParams) -> "Scene":
        return cls(ComplexGrid.zeros(shape), params.azimuth_cell_m, params.range_cell_m)

    @classmethod
    def from_cells(
        cls,
        shape: Tuple[int, int],
        params: RadarParams,
        cells: Sequence[Tuple[int, int]],
        amplitudes: Optional[Sequence[complex]] = None,
    ) -> "Scene":
        """On-grid point targets at the given (azimuth, range) cells"""
        reflectivity = np.zeros(shape, dtype=np.complex128)
        amplitudes = [1.0] * len(cells) if amplitudes is None else amplitudes
        for (az, rg), amp in zip(cells, amplitudes):
            reflectivity[az, rg] += amp
        return cls(ComplexGrid(reflectivity), params.azimuth_cell_m, params.range_cell_m)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.reflectivity.shape

    def extent_m(self) -> Tuple[float, float]:
        """Half extents (azimuth, range) of the illuminated swath"""
        n_az, n_rg = self.shape
        return n_az * self.cell_spacing_azimuth_m / 2.0, n_rg * self.cell_spacing_range_m / 2.0


def rayleigh_scene(
    shape: Tuple[int, int],
    params: RadarParams,
    region: Tuple[int, int, int, int],
    seed: Seed,
    scatterers_per_cell: int = 400,
    exact_scatterers: bool = False,
    power: float = 1.0,
) -> Scene:
    """Fully developed speckle inside `region` = (az_start, az_end, rg_start, rg_end).

    Each cell holds the coherent sum of unit scatterers with uniform phase,
    normalised to mean power `power`. By default the sum is drawn directly as
    its circular Gaussian limit; `exact_scatterers` sums the phasors.
    """
    az0, az1, rg0, rg1 = region
    if not (0 <= az0 < az1 <= shape[0] and 0 <= rg0 < rg1 <= shape[1]):
        raise SwathError(f"Rayleigh region {region} does not fit scene shape {shape}")
    rng = seed.generator("scene")
    cells = (az1 - az0, rg1 - rg0)
    if exact_scatterers:
        phases = rng.uniform(0.0, 2.0 * np.pi, size=cells + (scatterers_per_cell,))
        values = np.exp(1j * phases).sum(axis=-1) / math.sqrt(scatterers_per_cell)
    else:
        values = (rng.standard_normal(cells) + 1j * rng.standard_normal(cells)) / math.sqrt(2.0)
    reflectivity = np.zeros(shape, dtype=np.complex128)
    reflectivity[az0:az1, rg0:rg1] = math.sqrt(power) * values
    return Scene(ComplexGrid(reflectivity), params.azimuth_cell_m, params.range_cell_m)


@dataclass(frozen=True, eq=False)
class CompressedData:
    values: np.ndarray
    mask: SamplingMask

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128, copy=True).ravel()
        if values.size != len(self.mask):
            raise ShapeError(
                f"{values.size} values do not match {len(self.mask)} retained samples"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def full_shape(self) -> Tuple[int, int]:
        return self.mask.shape

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def with_values(self, values: np.ndarray) -> "CompressedData":
        return CompressedData(values, self.mask)


def _envelope(kind: str, x: np.ndarray) -> np.ndarray:
    """Envelope over normalised time x (support |x| <= 1/2)"""
    inside = np.abs(x) <= 0.5
    if kind == "rect":
        return inside.astype(float)
    if kind == "hamming":
        return np.where(inside, 0.54 + 0.46 * np.cos(2.0 * np.pi * x), 0.0)
    raise ConfigError(f"unknown envelope window '{kind}'")


def impulse_response(
    params: RadarParams,
    eta,
    tau,
    slant_range_m: Optional[float] = None,
):
    """Point response h(eta, tau) of a scatterer at closest range `slant_range_m`.

    `eta` is azimuth time relative to closest approach and `tau` absolute
    fast time; both broadcast. Zero outside the envelope supports.
    """
    r_min = params.slant_range_m if slant_range_m is None else slant_range_m
    eta = np.asarray(eta, dtype=float)
    tau = np.asarray(tau, dtype=float)
    slant = np.sqrt(r_min ** 2 + (params.platform_velocity_mps * eta) ** 2)
    delay = 2.0 * slant / params.light_speed_mps
    offset = tau - delay
    envelope = (
        _envelope(params.azimuth_window, eta / params.synthetic_aperture_time_s)
        * _envelope(params.range_window, offset / params.pulse_duration_s)
    )
    phase = (
        -4.0 * np.pi * params.carrier_freq_hz * slant / params.light_speed_mps
        + np.pi * params.range_fm_rate_hzps * offset ** 2
    )
    response = envelope * np.exp(1j * phase)
    return response if response.ndim else complex(response)


def _sample_axes(params: RadarParams, shape: Tuple[int, int]):
    n_az, n_rg = shape
    eta = (np.arange(n_az) - n_az / 2.0) / params.prf_hz
    fast = (np.arange(n_rg) - n_rg / 2.0) / params.range_sample_rate_hz
    return eta, fast


def _wrap(x: np.ndarray, period: float) -> np.ndarray:
    return (x + period / 2.0) % period - period / 2.0


def _echoes(
    params: RadarParams,
    shape: Tuple[int, int],
    eta_targets: np.ndarray,
    range_targets: np.ndarray,
) -> np.ndarray:
    """Periodic echoes of unit targets, shape (targets, n_az, n_rg).

    `eta_targets` are closest-approach times relative to the scene centre and
    `range_targets` closest-approach slant ranges.
    """
    eta_axis, fast_axis = _sample_axes(params, shape)
    az_period = shape[0] / params.prf_hz
    rg_period = shape[1] / params.range_sample_rate_hz
    az_wraps = math.ceil(params.synthetic_aperture_time_s / (2.0 * az_period))
    rg_wraps = math.ceil(params.pulse_duration_s / (2.0 * rg_period))
    tau_ref = 2.0 * params.slant_range_m / params.light_speed_mps

    base_eta = _wrap(eta_axis[None, :] - eta_targets[:, None], az_period)
    out = np.zeros((eta_targets.size,) + tuple(shape), dtype=np.complex128)
    for ka in range(-az_wraps, az_wraps + 1):
        eta = base_eta + ka * az_period
        if not np.any(np.abs(eta) <= params.synthetic_aperture_time_s / 2.0):
            continue
        slant = np.sqrt(range_targets[:, None] ** 2 + (params.platform_velocity_mps * eta) ** 2)
        delay = 2.0 * slant / params.light_speed_mps - tau_ref
        base_off = _wrap(fast_axis[None, None, :] - delay[:, :, None], rg_period)
        for kr in range(-rg_wraps, rg_wraps + 1):
            # tau relative to the delay, periodic in the range window
            tau = base_off + kr * rg_period + delay[:, :, None] + tau_ref
            out += impulse_response(
                params,
                eta[:, :, None],
                tau,
                slant_range_m=range_targets[:, None, None],
            )
    return out


def unit_echo_energy(params: RadarParams, shape: Tuple[int, int]) -> float:
    """Raw-domain energy of one unit scatterer at the scene centre.

    Dividing raw data by its square root puts reflectivities in focused-image
    units, the scale the default regularization weight assumes.
    """
    echo = _echoes(params, shape, np.zeros(1), np.array([params.slant_range_m]))
    return float(np.sum(np.abs(echo) ** 2))


def _target_coordinates(scene: Scene, params: RadarParams):
    """Closest-approach times and ranges plus amplitudes of every scatterer"""
    n_az, n_rg = scene.shape
    cells = np.flatnonzero(scene.reflectivity.flat())
    az_idx, rg_idx = np.unravel_index(cells, scene.shape)
    eta = (az_idx - n_az / 2.0) / params.prf_hz
    ranges = params.slant_range_m + (rg_idx - n_rg / 2.0) * params.range_cell_m
    amps = scene.reflectivity.flat()[cells]

    if scene.targets:
        half_az, half_rg = scene.extent_m()
        extra = np.array([[t.azimuth_pos_m, t.range_pos_m] for t in scene.targets])
        outside = (
            (extra[:, 0] < -half_az) | (extra[:, 0] >= half_az)
            | (extra[:, 1] < -half_rg) | (extra[:, 1] >= half_rg)
        )
        if np.any(outside):
            raise SwathError(
                f"{int(outside.sum())} target(s) outside the illuminated swath "
                f"(±{half_az:.1f} m azimuth, ±{half_rg:.1f} m range)"
            )
        eta = np.concatenate([eta, extra[:, 0] / params.platform_velocity_mps])
        ranges = np.concatenate([ranges, params.slant_range_m + extra[:, 1]])
        amps = np.concatenate([amps, [complex(t.amplitude) for t in scene.targets]])
    return eta, ranges, amps


def _check_scene_grid(scene: Scene, params: RadarParams) -> None:
    if not (
        math.isclose(scene.cell_spacing_azimuth_m, params.azimuth_cell_m, rel_tol=1e-9)
        and math.isclose(scene.cell_spacing_range_m, params.range_cell_m, rel_tol=1e-9)
    ):
        raise SwathError(
            "scene cell spacing "
            f"({scene.cell_spacing_azimuth_m:.4g} m, {scene.cell_spacing_range_m:.4g} m) "
            f"does not match the radar sampling ({params.azimuth_cell_m:.4g} m, "
            f"{params.range_cell_m:.4g} m)"
        )


def simulate_raw(
    scene: Scene,
    params: RadarParams,
    seed: Seed,
    noise_snr_db: Optional[float] = None,
) -> ComplexGrid:
    """Superpose the echoes of every scatterer and add calibrated noise.

    Noise is circular complex Gaussian with power set so that the mean signal
    power over the signal support divided by the noise power equals
    `noise_snr_db`. A silent scene yields a zero grid.
    """
    _check_scene_grid(scene, params)
    eta, ranges, amps = _target_coordinates(scene, params)
    raw = np.zeros(scene.shape, dtype=np.complex128)
    for start in range(0, amps.size, _CHUNK):
        chunk = slice(start, start + _CHUNK)
        echoes = _echoes(params, scene.shape, eta[chunk], ranges[chunk])
        raw += np.tensordot(amps[chunk], echoes, axes=1)
    logger.debug("simulated %d scatterers on a %s grid", amps.size, scene.shape)

    if noise_snr_db is not None:
        support = np.abs(raw) > 0
        if np.any(support):
            signal_power = float(np.mean(np.abs(raw[support]) ** 2))
            noise_power = signal_power / 10.0 ** (noise_snr_db / 10.0)
            draws = seed.generator("noise").standard_normal(scene.shape + (2,))
            raw = raw + math.sqrt(noise_power / 2.0) * (draws[..., 0] + 1j * draws[..., 1])
    return ComplexGrid(raw)


def observation_matrix(
    scene_shape: Tuple[int, int],
    params: RadarParams,
    max_entries: int = DEFAULT_MATRIX_CAP,
) -> np.ndarray:
    """Dense H with simulate_raw(scene) = H @ vec(scene) for on-grid scenes"""
    n_cells = scene_shape[0] * scene_shape[1]
    if n_cells * n_cells > max_entries:
        raise OperatorSizeError(
            f"observation matrix {n_cells}x{n_cells} exceeds the cap of {max_entries} entries"
        )
    cells = np.arange(n_cells)
    az_idx, rg_idx = np.unravel_index(cells, scene_shape)
    eta = (az_idx - scene_shape[0] / 2.0) / params.prf_hz
    ranges = params.slant_range_m + (rg_idx - scene_shape[1] / 2.0) * params.range_cell_m
    columns = np.empty((n_cells, n_cells), dtype=np.complex128)
    for start in range(0, n_cells, _CHUNK):
        chunk = slice(start, start + _CHUNK)
        columns[chunk] = _echoes(params, scene_shape, eta[chunk], ranges[chunk]).reshape(-1, n_cells)
    return columns.T


def generate_mask(
    shape: Tuple[int, int],
    rate: float,
    seed: Seed,
    pattern: MaskPattern = "sample",
) -> SamplingMask:
    """Random subsampling: single samples or whole azimuth pulses.

    Sample-wise masks keep max(1, round(rate * N)) samples. Pulse-wise masks
    keep max(1, round(rate * n_azimuth)) pulses with all their range samples,
    so the achieved rate is quantised to whole pulses.
    """
    if not 0.0 < rate <= 1.0:
        raise ConfigError(f"sampling rate must lie in (0, 1], got {rate}")
    n_az, n_rg = shape
    rng = seed.generator("mask")
    if pattern == "sample":
        total = n_az * n_rg
        count = max(1, int(round(rate * total)))
        retained = np.sort(rng.choice(total, size=count, replace=False))
    elif pattern == "pulse":
        count = max(1, int(round(rate * n_az)))
        pulses = np.sort(rng.choice(n_az, size=count, replace=False))
        retained = (pulses[:, None] * n_rg + np.arange(n_rg)[None, :]).ravel()
    else:
        raise ConfigError(f"unknown sampling pattern '{pattern}'")
    return SamplingMask(retained, shape)


def subsample(raw: ComplexGrid, mask: SamplingMask) -> CompressedData:
    if raw.shape != mask.shape:
        raise ShapeError(f"raw grid {raw.shape} does not match mask grid {mask.shape}")
    return CompressedData(raw.flat()[mask.retained], mask)


def subsample_adjoint(data: CompressedData) -> ComplexGrid:
    """Zero-filled raw grid holding the retained values"""
    grid = np.zeros(data.full_shape[0] * data.full_shape[1], dtype=np.complex128)
    grid[data.mask.retained] = data.values
    return ComplexGrid(grid.reshape(data.full_shape))


def measured_snr_db(noisy: ComplexGrid, clean: ComplexGrid) -> float:
    """Sample SNR over the signal support of `clean`"""
    support = np.abs(clean.data) > 0
    noise = noisy.data[support] - clean.data[support]
    return 10.0 * math.log10(
        np.mean(np.abs(clean.data[support]) ** 2) / np.mean(np.abs(noise) ** 2)
    )


def point_targets_to_scene(
    shape: Tuple[int, int],
    params: RadarParams,
    targets: Iterable[PointTarget],
) -> Scene:
    return Scene(
        ComplexGrid.zeros(shape), params.azimuth_cell_m, params.range_cell_m, tuple(targets)
    )
