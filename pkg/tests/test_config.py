import pytest
import yaml
from pathlib import Path

from mlcs_sar.config import ExperimentConfig, RadarConfig, SolverConfig, load_config
from mlcs_sar.errors import ConfigError

CONFIG_DIR = Path(__file__).parent.parent / "configs"


def _write(tmp_path, data, name="config.yaml"):
    path = tmp_path / name
    with open(path, "w") as f:
        yaml.safe_dump(data, f)
    return path


@pytest.mark.parametrize("name", ["rayleigh_single.yaml", "enl_sweep.yaml", "point_targets.yaml"])
def test_shipped_configs_validate(name):
    config = load_config(CONFIG_DIR / name)
    assert config.radar.shape[0] % config.solver.look_count == 0


def test_yaml_sections_are_loaded(tmp_path):
    path = _write(tmp_path, {
        "name": "loaded",
        "radar": {"n_azimuth": 48, "n_range": 40, "migration": False},
        "scene": {"kind": "points", "points": [{"azimuth": 10, "range": 5}]},
        "sampling": {"rate": 0.4, "pattern": "pulse", "seed": 12},
        "solver": {"lambda": 0.05, "look_count": 2},
        "noise_snr_db": None,
    })
    config = load_config(path)
    assert config.name == "loaded"
    assert config.radar.shape == (48, 40)
    assert not config.radar.migration
    assert config.scene.points[0].amplitude == 1 + 0j
    assert config.sampling.pattern == "pulse"
    assert config.solver.regularization == 0.05
    assert config.noise_snr_db is None


def test_defaults():
    config = ExperimentConfig()
    assert config.radar.shape == (72, 64)
    assert config.sampling.rate == 0.2
    assert config.solver.regularization == pytest.approx(0.02)
    assert SolverConfig(look_count=3).regularization == pytest.approx(0.06)
    assert RadarConfig(scale="large").shape == (150, 150)
    assert [r.bounds for r in config.evaluation_regions()] == [(26, 46, 22, 42)]


def test_unknown_keys_are_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, {"solver": {"lamda": 0.1}}))
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, {"colour": "blue"}))


def test_invalid_values_are_rejected(tmp_path):
    cases = [
        {"solver": {"look_count": 5}},
        {"sampling": {"rate": 0.0}},
        {"sampling": {"rate": 1.5}},
        {"sweep": {"rates": [0.5], "looks": [1], "repetitions": 0}},
        {"sweep": {"rates": [], "looks": [1], "repetitions": 2}},
        {"sweep": {"rates": [0.5], "looks": [7], "repetitions": 2}},
        {"radar": {"range_oversampling": 1.0}},
        {"scene": {"kind": "points"}},
        {"scene": {"kind": "points", "points": [{"azimuth": 80, "range": 0}]}},
        {"evaluation": {"regions": [{"az_start": 0, "az_end": 90, "rg_start": 0, "rg_end": 8}]}},
    ]
    for data in cases:
        with pytest.raises(ConfigError):
            load_config(_write(tmp_path, data))


def test_unreadable_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    broken = tmp_path / "broken.yaml"
    broken.write_text("solver: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(broken)
    listed = tmp_path / "list.yaml"
    listed.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(listed)


def test_environment_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("MLCS_LOG_LEVEL", "DEBUG")
    monkeypatch.setenv("MLCS_OUTPUT_DIR", str(tmp_path / "env_out"))
    config = load_config(_write(tmp_path, {"log_level": "WARNING"}))
    assert config.log_level == "DEBUG"
    assert config.output_dir == tmp_path / "env_out"


def test_command_line_overrides(tmp_path):
    base = ExperimentConfig()
    changed = base.with_overrides(
        rate=0.3, looks=2, lam=0.1, iterations=7, seed=9, output_dir=tmp_path / "o"
    )
    assert changed.sampling.rate == 0.3
    assert changed.solver.look_count == 2
    assert changed.solver.regularization == 0.1
    assert changed.solver.max_iterations == 7
    assert changed.sampling.seed == changed.solver.seed == 9
    assert changed.output_dir == tmp_path / "o"
    assert base.with_overrides() == base
    with pytest.raises(ConfigError):
        base.with_overrides(looks=5)


def test_config_hash_tracks_content():
    base = ExperimentConfig()
    assert base.config_hash() == ExperimentConfig().config_hash()
    assert base.config_hash() != base.with_overrides(rate=0.5).config_hash()
