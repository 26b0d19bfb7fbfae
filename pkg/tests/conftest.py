import shutil
import pytest
import numpy as np
from pathlib import Path
from mlcs_sar.config import (
    ExperimentConfig, EvaluationConfig, PointCell, RadarConfig, SamplingConfig, SceneConfig,
    SolverConfig,
)
from mlcs_sar.core import RadarParams, Seed

TINY_SHAPE = (16, 16)
DESK_SHAPE = (72, 64)


@pytest.fixture
def rng():
    """Seeded generator for test inputs"""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_params():
    """Geometry for 16x16 grids, small enough for dense oracles"""
    return RadarParams.desk_scale(TINY_SHAPE[0])


@pytest.fixture
def desk_params():
    """Default desk-scale geometry for 72x64 grids"""
    return RadarParams.desk_scale(DESK_SHAPE[0])


@pytest.fixture
def seed():
    return Seed(20240501)


def random_grid(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def test_config(tmp_path):
    """Minimal noiseless 32x32 single-target configuration"""
    return ExperimentConfig(
        name="test",
        radar=RadarConfig(n_azimuth=32, n_range=32),
        scene=SceneConfig(kind="points", points=[PointCell(azimuth=16, range=16)]),
        sampling=SamplingConfig(rate=0.5, seed=3),
        solver=SolverConfig(look_count=1, max_iterations=40, rel_change_tol=1e-5),
        evaluation=EvaluationConfig(baseline=True),
        noise_snr_db=None,
        output_dir=tmp_path / "run",
        log_level="DEBUG",
    )


@pytest.fixture
def test_dirs(tmp_path):
    """Create and clean up output directories"""
    dirs = {"first": tmp_path / "first", "second": tmp_path / "second"}
    for path in dirs.values():
        path.mkdir(parents=True, exist_ok=True)

    yield dirs

    for path in dirs.values():
        if path.exists():
            shutil.rmtree(path)
