import json
import math
import shutil
from datetime import datetime, timezone
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .config import ExperimentConfig, load_config
from .core import ComplexGrid, LookStack, RadarParams, Seed
from .errors import ConfigError, DegenerateRegionError, PartialSweepError, StageError
from .io import (
    read_grid, read_lookstack, read_targets, write_compressed, write_frame, write_grid,
    write_lookstack, write_pgm, write_targets,
)
from .logger import detach_file_handler, setup_logger
from .metrics import enl, peak_report, relative_error
from .mlrda import LookPlan, build_filters, look_form, stack_bands, unit_target_gain
from .sim import (
    Scene, generate_mask, point_targets_to_scene, rayleigh_scene, simulate_raw, subsample,
    unit_echo_energy,
)
from .solver import multilook_sum, reconstruct

NOISE_REFERENCE = "per-sample raw SNR over the signal support"

METRIC_COLUMNS = ["run_id", "rate", "looks", "method", "metric", "region", "value"]
AGGREGATE_COLUMNS = [
    "rate", "looks", "method", "region", "runs", "enl_mean", "enl_std", "enl_sem",
]


class RunManifest(BaseModel):
    """What a run produced and how to reproduce it"""
    model_config = ConfigDict(extra='forbid')

    run_id: str = Field(..., description="Run identifier used in metric rows")
    config_hash: str = Field(..., description="SHA-256 of the resolved configuration")
    software_version: str = Field(__version__, description="mlcs_sar version")
    seed: int = Field(..., description="Seed of the scene, noise and mask streams")
    params_digest: str = Field("", description="Digest of the radar parameters")
    noise_reference: str = Field(NOISE_REFERENCE, description="Definition of noise_snr_db")
    started_at: str = Field(..., description="UTC start time")
    finished_at: str = Field("", description="UTC finish time")
    files: List[str] = Field(default_factory=list, description="Outputs relative to the run directory")
    failures: List[str] = Field(default_factory=list, description="Failed sweep runs")

    def missing_files(self, root: Path) -> List[str]:
        return [name for name in self.files if not (Path(root) / name).exists()]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def build_scene(config: ExperimentConfig, params: RadarParams, seed: Seed) -> Scene:
    """Reflectivity described by the scene block"""
    shape = config.radar.shape
    scene = config.scene
    if scene.kind == "points":
        return Scene.from_cells(
            shape, params,
            [(p.azimuth, p.range) for p in scene.points],
            [p.amplitude for p in scene.points],
        )
    if scene.kind == "targets_file":
        return point_targets_to_scene(shape, params, read_targets(scene.targets_file))
    return rayleigh_scene(
        shape, params, scene.rayleigh_region(shape).bounds, seed,
        scatterers_per_cell=scene.scatterers_per_cell,
        exact_scatterers=scene.exact_scatterers,
        power=scene.power,
    )


def simulate_scene(config: ExperimentConfig, params: RadarParams, seed: Seed) -> Tuple[Scene, ComplexGrid]:
    scene = build_scene(config, params, seed)
    raw = simulate_raw(scene, params, seed, noise_snr_db=config.noise_snr_db)
    if config.scene.normalize:
        scale = 1.0 / math.sqrt(unit_echo_energy(params, config.radar.shape))
        if config.scene.calibration == "peak":
            filters = build_filters(params, config.radar.shape, migration=config.radar.migration)
            scale /= unit_target_gain(filters, params)
        raw = raw * scale
    return scene, raw


def export_image(grid, path: Path, fmt: str = "pgm", dynamic_range_db: float = 40.0) -> Path:
    """Write an image as a binary grid or an 8-bit log-scaled graymap"""
    if fmt == "pgm":
        return write_pgm(path, grid, dynamic_range_db)
    if fmt == "binary":
        return write_grid(path, grid)
    raise ConfigError(f"unknown export format '{fmt}'")


def load_image(path: Path):
    """A look-stack directory is summed to its multilook image; grid files load as is"""
    path = Path(path)
    if path.is_dir():
        looks, _ = read_lookstack(path)
        return multilook_sum(looks)
    return read_grid(path)


class ExperimentRunner:
    """
    Runs the simulate -> subsample -> reconstruct -> evaluate pipeline for
    one configuration, and Cartesian sweeps of it over rate and look count.
    """

    def __init__(self, config: Optional[ExperimentConfig] = None):
        """Initialize the runner with configuration"""
        self.config = config or load_config()
        self.logger = setup_logger("mlcs_sar", level=self.config.log_level)

    def _stage(self, name: str, fn, *args, **kwargs):
        self.logger.debug(f"Stage {name} started")
        try:
            return fn(*args, **kwargs)
        except Exception as e:
            self.logger.error(f"Error in stage {name}: {str(e)}", exc_info=True)
            raise StageError(name, e) from e

    def _prepare(self, config: ExperimentConfig):
        params = config.radar.build()
        filters = build_filters(
            params, config.radar.shape,
            migration=config.radar.migration,
            adjoint_mode=config.solver.adjoint_mode,
        )
        plan = LookPlan.build(config.radar.shape[0], config.solver.look_count)
        return params, filters, plan

    def _run_in(self, config: ExperimentConfig, run_dir: Path, work) -> RunManifest:
        """Run `work(run_dir)` with a run log attached; remove its outputs on failure"""
        run_dir = Path(run_dir)
        created = not run_dir.exists()
        run_dir.mkdir(parents=True, exist_ok=True)
        before = set(run_dir.rglob("*"))
        log_file = run_dir / "run.log"
        setup_logger("mlcs_sar", log_file=log_file, level=config.log_level)
        try:
            return work(run_dir)
        except Exception:
            detach_file_handler(self.logger, log_file)
            self._remove_outputs(run_dir, before, created)
            raise
        finally:
            detach_file_handler(self.logger, log_file)

    def _remove_outputs(self, run_dir: Path, before, created: bool) -> None:
        self.logger.info(f"Removing partial outputs in {run_dir}")
        if created:
            shutil.rmtree(run_dir, ignore_errors=True)
            return
        for path in sorted(set(run_dir.rglob("*")) - before, reverse=True):
            if path.is_dir():
                shutil.rmtree(path, ignore_errors=True)
            else:
                path.unlink(missing_ok=True)

    def simulate(self, config: Optional[ExperimentConfig] = None) -> RunManifest:
        """Simulate and subsample only; writes scene, raw data and compressed data"""
        config = config or self.config
        run_id = f"{config.name}-simulate-s{config.sampling.seed}"

        def work(run_dir: Path) -> RunManifest:
            manifest = RunManifest(
                run_id=run_id, config_hash=config.config_hash(),
                seed=config.sampling.seed, started_at=_now(),
            )
            seed = Seed(config.sampling.seed)
            params = self._stage("configure", config.radar.build)
            manifest.params_digest = params.digest()
            scene, raw = self._stage("simulate", simulate_scene, config, params, seed)
            mask = self._stage(
                "sample", generate_mask, config.radar.shape, config.sampling.rate, seed,
                config.sampling.pattern,
            )
            data = self._stage("sample", subsample, raw, mask)
            files = self._stage("persist", self._persist_inputs, run_dir, scene, raw, data)
            return self._stage("persist", self._finish, run_dir, manifest, files + ["run.log"])

        self.logger.info(f"Simulating {run_id}")
        return self._run_in(config, config.output_dir, work)

    def run_single(
        self,
        config: Optional[ExperimentConfig] = None,
        run_id: Optional[str] = None,
    ) -> RunManifest:
        """Full pipeline with the multilook RDA baseline, writing into config.output_dir"""
        config = config or self.config
        run_id = run_id or (
            f"{config.name}-rate{config.sampling.rate:g}-L{config.solver.look_count}"
            f"-s{config.sampling.seed}"
        )
        self.logger.info(f"Starting run {run_id}")

        def work(run_dir: Path) -> RunManifest:
            manifest = RunManifest(
                run_id=run_id, config_hash=config.config_hash(),
                seed=config.sampling.seed, started_at=_now(),
            )
            seed = Seed(config.sampling.seed)
            params, filters, plan = self._stage("configure", self._prepare, config)
            manifest.params_digest = params.digest()
            scene, raw = self._stage("simulate", simulate_scene, config, params, seed)
            mask = self._stage(
                "sample", generate_mask, config.radar.shape, config.sampling.rate, seed,
                config.sampling.pattern,
            )
            data = self._stage("sample", subsample, raw, mask)
            looks, trace = self._stage("reconstruct", reconstruct, data, filters, plan, config.solver)
            image = multilook_sum(looks)
            baseline = None
            if config.evaluation.baseline:
                baseline = self._stage("baseline", look_form, raw, filters, plan)

            metrics = self._stage(
                "evaluate", self.evaluate, config, run_id, looks, baseline, trace, data,
            )
            files = self._stage("persist", self._persist_inputs, run_dir, scene, raw, data)
            files += self._stage(
                "persist", self._persist_outputs, run_dir, looks, baseline, plan,
                params.digest(), trace.to_frame(), metrics,
            )
            self.logger.info(
                f"Run {run_id} finished after {trace.iterations} iterations ({trace.stop_reason})"
            )
            return self._stage("persist", self._finish, run_dir, manifest, files + ["run.log"])

        return self._run_in(config, config.output_dir, work)

    def evaluate(
        self,
        config: ExperimentConfig,
        run_id: str,
        looks: LookStack,
        baseline: Optional[LookStack],
        trace,
        data,
    ) -> pd.DataFrame:
        """Long-format metric rows for the reconstruction and the baseline"""
        rate = config.sampling.rate
        look_count = config.solver.look_count
        rows: List[Dict[str, Any]] = []

        def add(method: str, metric: str, value: float, region: str = ""):
            rows.append({
                "run_id": run_id, "rate": rate, "looks": look_count, "method": method,
                "metric": metric, "region": region, "value": float(value),
            })

        add("mlcs", "achieved_rate", data.mask.rate)
        add("mlcs", "iterations", trace.iterations)
        add("mlcs", "step_size", trace.step_size)
        add("mlcs", "objective", trace.objective[-1])
        add("mlcs", "active_rows", trace.active_rows[-1])

        images = {"mlcs": multilook_sum(looks)}
        if baseline is not None:
            images["rda"] = multilook_sum(baseline)
            if baseline.norm() > 0:
                add("mlcs", "relative_error_db", relative_error(looks, baseline))

        for method, image in images.items():
            for region in config.evaluation_regions():
                look_region = region.for_looks(look_count)
                label = "{}:{}x{}:{}".format(*region.bounds)
                try:
                    value = enl(image, look_region, mode=config.evaluation.enl_mode)
                except DegenerateRegionError as e:
                    self.logger.warning(f"ENL undefined for {method} in {label}: {str(e)}")
                    value = float("nan")
                add(method, "enl", value, label)
            if np.any(image.values > 0):
                report = peak_report(image, config.evaluation.peak_window)
                add(method, "peak_value", report.value)
                add(method, "peak_azimuth", report.position[0])
                add(method, "peak_range", report.position[1])
                add(method, "islr_db", report.islr_db)
        return pd.DataFrame(rows, columns=METRIC_COLUMNS)

    def _persist_inputs(self, run_dir: Path, scene: Scene, raw: ComplexGrid, data) -> List[str]:
        write_grid(run_dir / "scene.mlcs", scene.reflectivity)
        write_grid(run_dir / "raw.mlcs", raw)
        files = ["scene.mlcs", "raw.mlcs"]
        if scene.targets:
            write_targets(run_dir / "targets.txt", scene.targets)
            files.append("targets.txt")
        for path in write_compressed(run_dir / "compressed", data):
            files.append(str(path.relative_to(run_dir)))
        return files

    def _persist_outputs(
        self,
        run_dir: Path,
        looks: LookStack,
        baseline: Optional[LookStack],
        plan: LookPlan,
        params_digest: str,
        trace: pd.DataFrame,
        metrics: pd.DataFrame,
    ) -> List[str]:
        bands = stack_bands(plan)
        outputs = {"looks": looks}
        if baseline is not None:
            outputs["baseline_looks"] = baseline
        files = []
        for name, stack in outputs.items():
            for path in write_lookstack(run_dir / name, stack, bands, params_digest):
                files.append(str(path.relative_to(run_dir)))
            image_name = "image" if name == "looks" else "baseline_image"
            image = multilook_sum(stack)
            write_grid(run_dir / f"{image_name}.mlcs", image)
            export_image(image, run_dir / f"{image_name}.pgm")
            files += [f"{image_name}.mlcs", f"{image_name}.pgm"]
        write_frame(run_dir / "trace.csv", trace)
        write_frame(run_dir / "metrics.csv", metrics)
        with open(run_dir / "report.md", "w") as f:
            f.write(self.generate_report(metrics))
        return files + ["trace.csv", "metrics.csv", "report.md"]

    def _finish(self, run_dir: Path, manifest: RunManifest, files: List[str]) -> RunManifest:
        manifest.files = files + ["manifest.json"]
        manifest.finished_at = _now()
        self.save_manifest(manifest, run_dir / "manifest.json")
        return manifest

    def save_manifest(self, manifest: RunManifest, output_file: Path):
        """Save a manifest to a JSON file"""
        self.logger.info(f"Saving manifest to {output_file}")
        try:
            output_path = Path(output_file)
            output_path.parent.mkdir(parents=True, exist_ok=True)
            with open(output_path, 'w') as f:
                json.dump(manifest.model_dump(), f, indent=2)
        except Exception as e:
            self.logger.error(f"Error saving manifest: {str(e)}", exc_info=True)
            raise

    def generate_report(self, metrics: pd.DataFrame) -> str:
        """Generate a markdown summary of one run's metric rows"""
        if metrics.empty:
            return "# Run Report\n\nNo metrics recorded.\n"
        first = metrics.iloc[0]
        report = f"# Run Report: {first['run_id']}\n\n"
        report += f"- Sampling rate: {first['rate']:g}\n"
        report += f"- Looks: {int(first['looks'])}\n\n"
        report += "| method | metric | region | value |\n|---|---|---|---|\n"
        for row in metrics.itertuples(index=False):
            report += f"| {row.method} | {row.metric} | {row.region} | {row.value:.6g} |\n"
        return report

    def run_sweep(self, config: Optional[ExperimentConfig] = None) -> RunManifest:
        """Every (rate, look count, repetition) cell with derived seeds, then aggregate ENL.

        Failed runs are recorded and the sweep continues; PartialSweepError is
        raised at the end, after the aggregate is written.
        """
        config = config or self.config
        if config.sweep is None:
            raise ConfigError("configuration has no sweep block")
        sweep = config.sweep
        root = Path(config.output_dir)
        root.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(
            run_id=f"{config.name}-sweep", config_hash=config.config_hash(),
            seed=config.sampling.seed, started_at=_now(),
        )
        base = Seed(config.sampling.seed)
        single = config.model_copy(update={"sweep": None})

        cells = []
        for ri, rate in enumerate(sweep.rates):
            for li, look_count in enumerate(sweep.looks):
                for rep in range(sweep.repetitions):
                    run_id = f"rate{ri}-looks{li}-rep{rep:03d}"
                    seed = base.derive(ri, li, rep).value
                    cell_config = single.with_overrides(
                        rate=rate, looks=look_count, seed=seed,
                        output_dir=root / "runs" / run_id,
                    )
                    cells.append({
                        "run_id": run_id, "rate": rate, "looks": look_count, "rep": rep,
                        "seed": seed, "config": cell_config.model_dump(mode="json", by_alias=True),
                    })
        self.logger.info(f"Sweep of {len(cells)} runs on {sweep.workers} worker(s)")

        if sweep.workers > 1:
            with Pool(sweep.workers) as pool:
                outcomes = pool.map(_run_cell, cells)
        else:
            outcomes = [_run_cell(cell) for cell in cells]

        statuses = []
        frames = []
        for cell, error in zip(cells, outcomes):
            statuses.append({
                "run_id": cell["run_id"], "rate": cell["rate"], "looks": cell["looks"],
                "rep": cell["rep"], "seed": str(cell["seed"]),
                "status": "failed" if error else "ok", "error": error or "",
            })
            if error:
                self.logger.error(f"Sweep run {cell['run_id']} failed: {error}")
                manifest.failures.append(cell["run_id"])
            else:
                frames.append(pd.read_csv(root / "runs" / cell["run_id"] / "metrics.csv"))

        write_frame(root / "runs.csv", pd.DataFrame(statuses))
        write_frame(root / "aggregate.csv", aggregate_enl(frames))
        files = ["runs.csv", "aggregate.csv"] + [
            f"runs/{cell['run_id']}/manifest.json"
            for cell, error in zip(cells, outcomes) if not error
        ]
        manifest = self._finish(root, manifest, files)
        if manifest.failures:
            raise PartialSweepError(manifest.failures, manifest)
        return manifest


def aggregate_enl(frames: List[pd.DataFrame]) -> pd.DataFrame:
    """Mean, sample standard deviation and standard error of ENL per sweep cell"""
    if not frames:
        return pd.DataFrame(columns=AGGREGATE_COLUMNS)
    metrics = pd.concat(frames, ignore_index=True)
    enl_rows = metrics[metrics["metric"] == "enl"].dropna(subset=["value"])
    grouped = enl_rows.groupby(["rate", "looks", "method", "region"], sort=True)["value"]
    table = grouped.agg(["count", "mean", "std"]).reset_index()
    table = table.rename(columns={"count": "runs", "mean": "enl_mean", "std": "enl_std"})
    table["enl_sem"] = table["enl_std"] / np.sqrt(table["runs"])
    return table[AGGREGATE_COLUMNS].sort_values(["rate", "looks", "method", "region"]).reset_index(drop=True)


def _run_cell(cell: Dict[str, Any]) -> Optional[str]:
    """Worker entry point: one sweep run, returning an error message or None"""
    try:
        config = ExperimentConfig.model_validate(cell["config"])
        ExperimentRunner(config).run_single(run_id=cell["run_id"])
    except StageError as e:
        return str(e)
    except Exception as e:
        return f"{type(e).__name__}: {e}"
    return None
