from typing import List, Literal, Optional, Tuple
from pydantic import BaseModel, Field, ConfigDict, ValidationError, model_validator
from pathlib import Path
import hashlib
import os

import yaml
from dotenv import load_dotenv

from .core import RadarParams, Window
from .errors import ConfigError
from .metrics import RegionSpec

DEFAULT_SHAPE = (72, 64)
LARGE_SHAPE = (150, 150)
RAYLEIGH_REGION_SIZE = (24, 24)


class RadarConfig(BaseModel):
    """Geometry, grid size and oversampling; builds RadarParams"""
    model_config = ConfigDict(extra='forbid')

    scale: Literal["desk", "large"] = Field(
        "desk", description="desk: 72x64 grid; large: 150x150 grid (slow)"
    )
    n_azimuth: Optional[int] = Field(None, gt=0, description="Pulses; overrides the scale preset")
    n_range: Optional[int] = Field(None, gt=0, description="Range samples; overrides the scale preset")
    carrier_freq_hz: float = Field(5.0e9, gt=0, description="Carrier frequency")
    slant_range_m: float = Field(20.0e3, gt=0, description="Closest-approach range")
    platform_velocity_mps: float = Field(350.0, gt=0, description="Platform velocity")
    range_bandwidth_hz: float = Field(75.0e6, gt=0, description="Chirp bandwidth")
    pulse_duration_s: float = Field(2.0e-6, gt=0, description="Chirp duration")
    range_oversampling: float = Field(1.2, ge=1.1, description="fs / Br")
    azimuth_oversampling: float = Field(1.2, ge=1.1, description="PRF / Doppler bandwidth")
    aperture_fill: float = Field(
        0.9, gt=0, le=1, description="Fraction of the pulses one target's aperture spans"
    )
    azimuth_window: Window = Field("rect", description="Azimuth envelope")
    range_window: Window = Field("rect", description="Range envelope")
    migration: bool = Field(True, description="Apply range cell migration correction")

    @property
    def shape(self) -> Tuple[int, int]:
        preset = LARGE_SHAPE if self.scale == "large" else DEFAULT_SHAPE
        return (self.n_azimuth or preset[0], self.n_range or preset[1])

    def build(self) -> RadarParams:
        return RadarParams.desk_scale(
            self.shape[0],
            range_oversampling=self.range_oversampling,
            azimuth_oversampling=self.azimuth_oversampling,
            aperture_fill=self.aperture_fill,
            carrier_freq_hz=self.carrier_freq_hz,
            slant_range_m=self.slant_range_m,
            platform_velocity_mps=self.platform_velocity_mps,
            range_bandwidth_hz=self.range_bandwidth_hz,
            pulse_duration_s=self.pulse_duration_s,
            azimuth_window=self.azimuth_window,
            range_window=self.range_window,
        )


class PointCell(BaseModel):
    """On-grid point target"""
    model_config = ConfigDict(extra='forbid')

    azimuth: int = Field(..., ge=0, description="Azimuth cell")
    range: int = Field(..., ge=0, description="Range cell")
    amplitude_re: float = Field(1.0, description="Real part of the reflectivity")
    amplitude_im: float = Field(0.0, description="Imaginary part of the reflectivity")

    @property
    def amplitude(self) -> complex:
        return complex(self.amplitude_re, self.amplitude_im)


class SceneConfig(BaseModel):
    """Which reflectivity to simulate"""
    model_config = ConfigDict(extra='forbid')

    kind: Literal["points", "rayleigh", "targets_file"] = Field(
        "rayleigh", description="Scene generator"
    )
    points: List[PointCell] = Field(default_factory=list, description="On-grid targets")
    targets_file: Optional[Path] = Field(None, description="Plain-text off-grid target list")
    region: Optional[RegionSpec] = Field(
        None, description="Rayleigh region; defaults to a centred 24x24 block"
    )
    scatterers_per_cell: int = Field(400, gt=0, description="K for the exact phasor sum")
    exact_scatterers: bool = Field(False, description="Sum K phasors instead of sampling the Gaussian limit")
    power: float = Field(1.0, gt=0, description="Mean reflectivity power of the Rayleigh region")
    normalize: bool = Field(
        True, description="Scale raw data so one unit scatterer carries unit echo energy"
    )
    calibration: Literal["energy", "peak"] = Field(
        "energy",
        description="energy: unit echo energy per unit scatterer; peak: unit focused peak amplitude"
    )

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == "points" and not self.points:
            raise ValueError("scene kind 'points' needs at least one entry in 'points'")
        if self.kind == "targets_file" and self.targets_file is None:
            raise ValueError("scene kind 'targets_file' needs 'targets_file'")
        return self

    def rayleigh_region(self, shape: Tuple[int, int]) -> RegionSpec:
        return self.region or RegionSpec.centred(shape, RAYLEIGH_REGION_SIZE)


class SamplingConfig(BaseModel):
    """Compressive subsampling of the raw grid"""
    model_config = ConfigDict(extra='forbid')

    rate: float = Field(0.2, gt=0, le=1, description="Fraction of raw samples retained")
    pattern: Literal["sample", "pulse"] = Field("sample", description="Random samples or whole pulses")
    seed: int = Field(0, ge=0, lt=2 ** 64, description="Seed for scene, noise and mask streams")


class SolverConfig(BaseModel):
    """Group-thresholding reconstruction settings"""
    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    lam: Optional[float] = Field(
        None, ge=0, alias="lambda",
        description="Regularization weight; 0.02 * look_count when omitted"
    )
    mu: Optional[float] = Field(None, gt=0, description="Step size; estimated when omitted")
    max_iterations: int = Field(500, ge=1, description="Iteration cap")
    rel_change_tol: float = Field(1e-6, ge=0, description="Stop when the relative iterate change drops below")
    look_count: int = Field(1, ge=1, description="Number of looks L")
    seed: int = Field(0, ge=0, lt=2 ** 64, description="Seed of the power iteration")
    warm_start: Literal["zero", "adjoint"] = Field("zero", description="Initial iterate")
    adjoint_mode: Literal["transpose", "reverse"] = Field(
        "transpose", description="Exact adjoint or interpolated RCMC reversal in G"
    )

    @property
    def regularization(self) -> float:
        return self.lam if self.lam is not None else 0.02 * self.look_count


class EvaluationConfig(BaseModel):
    """Metrics computed after each run"""
    model_config = ConfigDict(extra='forbid')

    regions: List[RegionSpec] = Field(
        default_factory=list,
        description="ENL regions in full-resolution pixels; a Rayleigh scene adds its own"
    )
    region_margin: int = Field(2, ge=0, description="Inset applied to the default Rayleigh region")
    baseline: bool = Field(True, description="Also form the full-sample multilook RDA image")
    peak_window: int = Field(5, ge=1, description="Mainlobe window for the peak report")
    enl_mode: Literal["intensity", "amplitude"] = Field("intensity", description="ENL statistic")


class SweepConfig(BaseModel):
    """Cartesian sweep over sampling rate and look count"""
    model_config = ConfigDict(extra='forbid')

    rates: List[float] = Field(..., description="Sampling rates")
    looks: List[int] = Field(..., description="Look counts")
    repetitions: int = Field(..., ge=1, description="Independent runs per cell")
    workers: int = Field(1, ge=1, description="Parallel worker processes")

    @model_validator(mode="after")
    def _check_axes(self):
        if not self.rates or not self.looks:
            raise ValueError("sweep needs at least one rate and one look count")
        if any(not 0 < rate <= 1 for rate in self.rates):
            raise ValueError(f"sweep rates must lie in (0, 1], got {self.rates}")
        if any(look < 1 for look in self.looks):
            raise ValueError(f"sweep look counts must be positive, got {self.looks}")
        return self


class ExperimentConfig(BaseModel):
    """Main experiment configuration"""
    model_config = ConfigDict(extra='forbid')

    name: str = Field("mlcs", description="Experiment label used in run identifiers")
    radar: RadarConfig = RadarConfig()
    scene: SceneConfig = SceneConfig()
    sampling: SamplingConfig = SamplingConfig()
    solver: SolverConfig = SolverConfig()
    evaluation: EvaluationConfig = EvaluationConfig()
    sweep: Optional[SweepConfig] = None
    noise_snr_db: Optional[float] = Field(
        20.0, description="Per-sample raw SNR over the signal support; null for noiseless"
    )
    output_dir: Path = Field(Path("results"), description="Directory for run outputs")
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = Field(
        "INFO", description="Logging level"
    )

    @model_validator(mode="after")
    def _check_blocks(self):
        try:
            self.radar.build()
        except ValidationError as e:
            raise ValueError(f"radar block: {e}") from e
        n_az, n_rg = self.radar.shape
        looks = [self.solver.look_count] + (self.sweep.looks if self.sweep else [])
        for look_count in looks:
            if n_az % look_count:
                raise ValueError(f"look count {look_count} must divide n_azimuth={n_az}")
        regions = list(self.evaluation.regions)
        if self.scene.kind == "rayleigh":
            regions.append(self.scene.rayleigh_region((n_az, n_rg)))
        for region in regions:
            if region.az_end > n_az or region.rg_end > n_rg:
                raise ValueError(f"region {region.bounds} exceeds the {n_az}x{n_rg} grid")
        for point in self.scene.points:
            if point.azimuth >= n_az or point.range >= n_rg:
                raise ValueError(f"point ({point.azimuth}, {point.range}) is off the grid")
        return self

    def evaluation_regions(self) -> List[RegionSpec]:
        """Configured regions plus the inset Rayleigh region"""
        regions = list(self.evaluation.regions)
        if self.scene.kind == "rayleigh":
            region = self.scene.rayleigh_region(self.radar.shape)
            margin = self.evaluation.region_margin
            if min(region.az_end - region.az_start, region.rg_end - region.rg_start) > 2 * margin:
                region = region.inset(margin)
            regions.append(region)
        return regions

    def with_overrides(
        self,
        rate: Optional[float] = None,
        looks: Optional[int] = None,
        lam: Optional[float] = None,
        iterations: Optional[int] = None,
        seed: Optional[int] = None,
        output_dir: Optional[Path] = None,
    ) -> "ExperimentConfig":
        """Copy with command-line overrides applied and revalidated"""
        data = self.model_dump(by_alias=True)
        if rate is not None:
            data["sampling"]["rate"] = rate
        if looks is not None:
            data["solver"]["look_count"] = looks
        if lam is not None:
            data["solver"]["lambda"] = lam
        if iterations is not None:
            data["solver"]["max_iterations"] = iterations
        if seed is not None:
            data["sampling"]["seed"] = seed
            data["solver"]["seed"] = seed
        if output_dir is not None:
            data["output_dir"] = Path(output_dir)
        return _validate(data)

    def config_hash(self) -> str:
        return hashlib.sha256(self.model_dump_json(by_alias=True).encode()).hexdigest()


def _validate(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def load_config(path: Optional[Path] = None) -> ExperimentConfig:
    """Load configuration from a YAML file, environment variables and defaults"""
    load_dotenv()
    data = {}
    if path is not None:
        try:
            with open(path, "r") as f:
                data = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a mapping at the top level")

    if os.getenv("MLCS_LOG_LEVEL"):
        data["log_level"] = os.getenv("MLCS_LOG_LEVEL").upper()
    if os.getenv("MLCS_OUTPUT_DIR"):
        data["output_dir"] = os.getenv("MLCS_OUTPUT_DIR")
    return _validate(data)
