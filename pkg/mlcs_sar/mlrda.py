"""Multilook range-Doppler look formation (M) and its inverse (G).

M: range compression -> azimuth FFT -> RCMC -> azimuth matched filter ->
   per-look Doppler band extraction at baseband -> short inverse azimuth FFT.
G: the same chain walked backwards with conjugate filters.

Every stage is a square linear map on the raw grid. FFTs are unitary and
the matched filters are phase-only, so with the RCMC adjoint taken as the
transpose of its interpolation stencil, G is exactly the adjoint of M.
The array helpers accept leading batch axes so dense materialization can
push many unit vectors through one call.
"""

import logging
import math
from dataclasses import dataclass
from typing import Literal, Sequence, Tuple

import numpy as np

from .core import ComplexGrid, LookStack, RadarParams, Seed, _fft
from .errors import AliasingError, OperatorSizeError, ShapeError
from .sim import CompressedData, Scene, simulate_raw, subsample, subsample_adjoint, unit_echo_energy

logger = logging.getLogger(__name__)

AdjointMode = Literal["transpose", "reverse"]

# Interpolation stencil: 8 taps at offsets -3..4 around the integer shift
STENCIL_OFFSETS = np.arange(-3, 5)
STENCIL_HALF_WIDTH = 4.0

MATERIALIZE_MAX_AZIMUTH = 16
MATERIALIZE_MAX_RANGE = 16
MATERIALIZE_MAX_LOOKS = 4


def interpolation_stencil(shifts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Hamming-weighted truncated sinc taps for fractional shifts.

    Returns (integer part, taps) where output sample k reads
    sum_j taps[j] * input[k + integer + STENCIL_OFFSETS[j]].
    Taps are normalised to unit DC gain; an integral shift gives a pure delta.
    """
    shifts = np.asarray(shifts, dtype=float)
    whole = np.floor(shifts).astype(np.int64)
    frac = shifts - whole
    x = STENCIL_OFFSETS[None, :] - frac[:, None]
    weights = np.sinc(x) * (0.54 + 0.46 * np.cos(np.pi * x / STENCIL_HALF_WIDTH))
    weights /= weights.sum(axis=1, keepdims=True)
    return whole, weights


@dataclass(frozen=True, eq=False)
class RdaFilters:
    """Frequency-domain factors of the look-formation chain for one grid shape"""
    shape: Tuple[int, int]
    range_matched_filter_spectrum: np.ndarray   # (n_range,), P
    azimuth_matched_filter_spectrum: np.ndarray  # (n_azimuth, n_range), Q
    rcmc_shift_table: np.ndarray  # (n_azimuth,), range samples, D
    adjoint_mode: AdjointMode = "transpose"
    params_digest: str = ""

    def __post_init__(self):
        for name in ("range_matched_filter_spectrum", "azimuth_matched_filter_spectrum",
                     "rcmc_shift_table"):
            getattr(self, name).setflags(write=False)
        whole, taps = interpolation_stencil(self.rcmc_shift_table)
        back_whole, back_taps = interpolation_stencil(-self.rcmc_shift_table)
        object.__setattr__(self, "_stencil", (whole, taps))
        object.__setattr__(self, "_reverse_stencil", (back_whole, back_taps))

    def with_adjoint_mode(self, mode: AdjointMode) -> "RdaFilters":
        return RdaFilters(
            self.shape,
            self.range_matched_filter_spectrum.copy(),
            self.azimuth_matched_filter_spectrum.copy(),
            self.rcmc_shift_table.copy(),
            adjoint_mode=mode,
            params_digest=self.params_digest,
        )

    def operator_norm(self) -> float:
        """Spectral norm of G (equal to that of M in transpose mode).

        All stages but RCMC are unitary and RCMC is a circular convolution per
        Doppler row, so the norm is the peak magnitude of any stencil's DFT.
        """
        whole, taps = self._stencil if self.adjoint_mode == "transpose" else self._reverse_stencil
        n_az, n_rg = self.shape
        kernels = np.zeros((n_az, n_rg))
        rows = np.arange(n_az)[:, None]
        cols = (whole[:, None] + STENCIL_OFFSETS[None, :]) % n_rg
        np.add.at(kernels, (np.broadcast_to(rows, cols.shape), cols), taps)
        return float(np.abs(np.fft.fft(kernels, axis=1)).max())


@dataclass(frozen=True, eq=False)
class LookPlan:
    """Disjoint contiguous Doppler bands, numbered from the most negative Doppler.

    Within a band the bins are rotated so the band centre sits at short-FFT
    bin 0; each look is then the baseband image of its band and one look
    reduces to the plain azimuth FFT.
    """
    n_azimuth: int
    band_assignments: Tuple[np.ndarray, ...]

    @classmethod
    def build(cls, n_azimuth: int, look_count: int) -> "LookPlan":
        if look_count < 1 or n_azimuth % look_count:
            raise ShapeError(
                f"look count {look_count} must divide the azimuth length {n_azimuth}"
            )
        centred = np.fft.fftshift(np.arange(n_azimuth))
        width = n_azimuth // look_count
        bands = []
        for i in range(look_count):
            band = np.fft.ifftshift(centred[i * width:(i + 1) * width])
            band.setflags(write=False)
            bands.append(band)
        return cls(n_azimuth, tuple(bands))

    @property
    def look_count(self) -> int:
        return len(self.band_assignments)

    @property
    def band_width(self) -> int:
        return self.n_azimuth // self.look_count

    def look_shape(self, n_range: int) -> Tuple[int, int]:
        return self.band_width, n_range


def build_filters(
    params: RadarParams,
    shape: Tuple[int, int],
    migration: bool = True,
    adjoint_mode: AdjointMode = "transpose",
) -> RdaFilters:
    """Matched filters and RCMC shifts for a zero-squint geometry.

    With `migration=False` the shift table is all zero and the chain is unitary.
    """
    n_az, n_rg = shape
    if params.doppler_bandwidth_hz > params.prf_hz:
        raise AliasingError(
            f"Doppler bandwidth {params.doppler_bandwidth_hz:.3g} Hz exceeds "
            f"PRF {params.prf_hz:.3g} Hz"
        )
    wavelength = params.wavelength_m
    doppler = np.fft.fftfreq(n_az, d=1.0 / params.prf_hz)
    squint_sine = wavelength * doppler / (2.0 * params.platform_velocity_mps)
    if np.any(np.abs(squint_sine) >= 1.0):
        raise AliasingError("Doppler frequencies beyond the visible region")
    migration_factor = np.sqrt(1.0 - squint_sine ** 2)

    range_freq = np.fft.fftfreq(n_rg, d=1.0 / params.range_sample_rate_hz)
    range_filter = np.exp(1j * np.pi * range_freq ** 2 / params.range_fm_rate_hzps)

    ranges = params.slant_range_m + (np.arange(n_rg) - n_rg / 2.0) * params.range_cell_m
    azimuth_filter = np.exp(
        4j * np.pi * ranges[None, :] * migration_factor[:, None] / wavelength
    )

    if migration:
        shifts = params.slant_range_m * (1.0 / migration_factor - 1.0) / params.range_cell_m
    else:
        shifts = np.zeros(n_az)
    logger.debug("RCMC shift peaks at %.3f range samples", float(np.max(np.abs(shifts))))
    return RdaFilters(
        (n_az, n_rg), range_filter, azimuth_filter, shifts,
        adjoint_mode=adjoint_mode, params_digest=params.digest(),
    )


# -- array-level chain; leading axes are batch axes ---------------------------

def _stencil_apply(data: np.ndarray, whole: np.ndarray, taps: np.ndarray) -> np.ndarray:
    n_az, n_rg = data.shape[-2:]
    rows = np.arange(n_az)[:, None]
    cols = np.arange(n_rg)[None, :]
    out = np.zeros_like(data)
    for j, offset in enumerate(STENCIL_OFFSETS):
        index = (cols + whole[:, None] + offset) % n_rg
        out += taps[:, j][:, None] * data[..., rows, index]
    return out


def _stencil_transpose(data: np.ndarray, whole: np.ndarray, taps: np.ndarray) -> np.ndarray:
    n_az, n_rg = data.shape[-2:]
    rows = np.arange(n_az)[:, None]
    cols = np.arange(n_rg)[None, :]
    out = np.zeros_like(data)
    for j, offset in enumerate(STENCIL_OFFSETS):
        index = (cols - whole[:, None] - offset) % n_rg
        out += taps[:, j][:, None] * data[..., rows, index]
    return out


def _range_compress(data: np.ndarray, spectrum: np.ndarray) -> np.ndarray:
    return _fft(_fft(data, axis=-1, inverse=False) * spectrum, axis=-1, inverse=True)


def _look_form_array(raw: np.ndarray, filters: RdaFilters, plan: LookPlan) -> np.ndarray:
    spectrum = _fft(_range_compress(raw, filters.range_matched_filter_spectrum), axis=-2, inverse=False)
    spectrum = _stencil_apply(spectrum, *filters._stencil)
    spectrum = spectrum * filters.azimuth_matched_filter_spectrum
    looks = [
        _fft(spectrum[..., band, :], axis=-2, inverse=True)
        for band in plan.band_assignments
    ]
    return np.stack(looks, axis=-3)


def _spectrum_stack_array(looks: np.ndarray, plan: LookPlan) -> np.ndarray:
    batch = looks.shape[:-3]
    n_rg = looks.shape[-1]
    spectrum = np.zeros(batch + (plan.n_azimuth, n_rg), dtype=np.complex128)
    for i, band in enumerate(plan.band_assignments):
        spectrum[..., band, :] = _fft(looks[..., i, :, :], axis=-2, inverse=False)
    return spectrum


def _look_inverse_array(looks: np.ndarray, filters: RdaFilters, plan: LookPlan) -> np.ndarray:
    spectrum = _spectrum_stack_array(looks, plan)
    spectrum = spectrum * np.conj(filters.azimuth_matched_filter_spectrum)
    if filters.adjoint_mode == "transpose":
        spectrum = _stencil_transpose(spectrum, *filters._stencil)
    else:
        spectrum = _stencil_apply(spectrum, *filters._reverse_stencil)
    data = _fft(spectrum, axis=-2, inverse=True)
    return _range_compress(data, np.conj(filters.range_matched_filter_spectrum))


def _check_plan(shape: Tuple[int, int], filters: RdaFilters, plan: LookPlan) -> None:
    if tuple(shape) != tuple(filters.shape):
        raise ShapeError(f"grid {shape} does not match filters built for {filters.shape}")
    if plan.n_azimuth != shape[0]:
        raise ShapeError(
            f"look plan covers {plan.n_azimuth} Doppler bins, grid has {shape[0]}"
        )


# -- public operators -----------------------------------------------------------

def look_form(raw: ComplexGrid, filters: RdaFilters, plan: LookPlan) -> LookStack:
    """The operator M: raw data to L subimages"""
    _check_plan(raw.shape, filters, plan)
    return LookStack(_look_form_array(raw.data, filters, plan))


def spectrum_stack(looks: LookStack, plan: LookPlan) -> ComplexGrid:
    """The operator S: each look's azimuth spectrum placed in its Doppler band"""
    if looks.look_count != plan.look_count or looks.look_shape[0] != plan.band_width:
        raise ShapeError(
            f"look stack {looks.shape} does not fit a {plan.look_count}-look plan "
            f"over {plan.n_azimuth} bins"
        )
    return ComplexGrid(_spectrum_stack_array(looks.data, plan))


def look_inverse(looks: LookStack, filters: RdaFilters, plan: LookPlan) -> ComplexGrid:
    """The operator G: L subimages back to a raw-data grid"""
    _check_plan((plan.n_azimuth, looks.look_shape[1]), filters, plan)
    if looks.look_count != plan.look_count or looks.look_shape[0] != plan.band_width:
        raise ShapeError(f"look stack {looks.shape} does not fit the look plan")
    return ComplexGrid(_look_inverse_array(looks.data, filters, plan))


def adjoint_of_sensing(residual: CompressedData, filters: RdaFilters, plan: LookPlan) -> LookStack:
    """Adjoint of the composite Theta*G: zero-fill then form looks"""
    return look_form(subsample_adjoint(residual), filters, plan)


def unit_target_gain(filters: RdaFilters, params: RadarParams) -> float:
    """Single-look focused peak of one unit scatterer at the grid centre.

    The raw echo is scaled to unit energy first, so the gain falls below 1 by
    the energy the oversampled point response spreads into its sidelobes.
    Dividing energy-normalized data by it calibrates a unit scatterer to a
    unit image peak.
    """
    n_az, n_rg = filters.shape
    centre = (n_az // 2, n_rg // 2)
    raw = simulate_raw(Scene.from_cells(filters.shape, params, [centre]), params, Seed(0))
    raw = raw * (1.0 / math.sqrt(unit_echo_energy(params, filters.shape)))
    image = look_form(raw, filters, LookPlan.build(n_az, 1)).data[0]
    return float(np.abs(image[centre]))


class SensingOperator:
    """The composite Theta*G acting on look stacks"""

    def __init__(self, filters: RdaFilters, plan: LookPlan, mask):
        if tuple(mask.shape) != tuple(filters.shape):
            raise ShapeError(f"mask grid {mask.shape} does not match filters {filters.shape}")
        _check_plan(filters.shape, filters, plan)
        self.filters = filters
        self.plan = plan
        self.mask = mask

    @property
    def look_shape(self) -> Tuple[int, int]:
        return self.plan.look_shape(self.filters.shape[1])

    @property
    def look_count(self) -> int:
        return self.plan.look_count

    def forward(self, looks: LookStack) -> CompressedData:
        return subsample(look_inverse(looks, self.filters, self.plan), self.mask)

    def adjoint(self, data: CompressedData) -> LookStack:
        return adjoint_of_sensing(data, self.filters, self.plan)

    def norm_bound(self) -> float:
        """Upper bound on ||Theta*G||; selection only contracts"""
        return self.filters.operator_norm()


def materialize_operator(
    filters: RdaFilters,
    plan: LookPlan,
    shape: Tuple[int, int],
    operator: Literal["inverse", "forward"] = "inverse",
) -> np.ndarray:
    """Dense matrix of G (default) or M, built column by column from unit inputs.

    G maps vec(X) (looks stacked in order, each azimuth-major) to vec(raw);
    M maps vec(raw) to vec(X).
    """
    n_az, n_rg = shape
    if (n_az > MATERIALIZE_MAX_AZIMUTH or n_rg > MATERIALIZE_MAX_RANGE
            or plan.look_count > MATERIALIZE_MAX_LOOKS):
        raise OperatorSizeError(
            f"materialization limited to {MATERIALIZE_MAX_AZIMUTH}x{MATERIALIZE_MAX_RANGE} "
            f"grids and {MATERIALIZE_MAX_LOOKS} looks, got {shape} with {plan.look_count} looks"
        )
    _check_plan(shape, filters, plan)
    size = n_az * n_rg
    units = np.eye(size, dtype=np.complex128)
    if operator == "inverse":
        looks = units.reshape((size, plan.look_count) + plan.look_shape(n_rg))
        columns = _look_inverse_array(looks, filters, plan).reshape(size, size)
    elif operator == "forward":
        columns = _look_form_array(units.reshape(size, n_az, n_rg), filters, plan).reshape(size, size)
    else:
        raise ValueError(f"unknown operator '{operator}'")
    return columns.T


def stack_bands(plan: LookPlan) -> Sequence[Sequence[int]]:
    """Band assignments as plain lists, for manifests"""
    return [band.tolist() for band in plan.band_assignments]
