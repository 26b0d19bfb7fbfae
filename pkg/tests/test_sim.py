import numpy as np
import pytest

from mlcs_sar.core import ComplexGrid, RadarParams, Seed, inner_product
from mlcs_sar.errors import ConfigError, OperatorSizeError, ShapeError, SwathError
from mlcs_sar.sim import (
    CompressedData, PointTarget, Scene, generate_mask, impulse_response, measured_snr_db,
    observation_matrix, point_targets_to_scene, rayleigh_scene, simulate_raw, subsample,
    subsample_adjoint, unit_echo_energy,
)
from tests.conftest import TINY_SHAPE, random_grid


def test_impulse_response_at_closest_approach(desk_params):
    """Zero offsets leave only the carrier phase"""
    p = desk_params
    tau = 2.0 * p.slant_range_m / p.light_speed_mps
    value = impulse_response(p, 0.0, tau)
    expected = np.exp(1j * (-4.0 * np.pi * p.carrier_freq_hz * p.slant_range_m / p.light_speed_mps))
    assert abs(value) == pytest.approx(1.0, abs=1e-12)
    assert value == pytest.approx(expected, abs=1e-6)


def test_impulse_response_envelope(desk_params):
    p = desk_params
    tau0 = 2.0 * p.slant_range_m / p.light_speed_mps
    assert abs(impulse_response(p, 0.0, tau0 + p.pulse_duration_s / 4)) == pytest.approx(1.0)
    assert impulse_response(p, 0.0, tau0 + p.pulse_duration_s) == 0
    assert impulse_response(p, p.synthetic_aperture_time_s, tau0) == 0
    values = impulse_response(p, np.zeros(3), tau0 + np.array([-1.0, 0.0, 1.0]) * p.pulse_duration_s)
    np.testing.assert_array_equal(np.abs(values), [0.0, 1.0, 0.0])


def test_zero_scene_gives_zero_raw(tiny_params, seed):
    scene = Scene.empty(TINY_SHAPE, tiny_params)
    raw = simulate_raw(scene, tiny_params, seed, noise_snr_db=20.0)
    assert raw.norm() == 0.0


def test_simulation_is_linear(tiny_params, seed):
    """Two targets simulate to the sum of their single-target echoes"""
    first = Scene.from_cells(TINY_SHAPE, tiny_params, [(3, 5)], [1.5 - 0.5j])
    second = Scene.from_cells(TINY_SHAPE, tiny_params, [(10, 12)], [0.25j])
    both = Scene.from_cells(TINY_SHAPE, tiny_params, [(3, 5), (10, 12)], [1.5 - 0.5j, 0.25j])
    total = simulate_raw(both, tiny_params, seed)
    parts = simulate_raw(first, tiny_params, seed) + simulate_raw(second, tiny_params, seed)
    assert (total - parts).norm() <= 1e-12 * total.norm()


def test_observation_matrix_oracle(tiny_params, seed, rng):
    """Dense H reproduces the simulator on a random 16x16 scene"""
    H = observation_matrix(TINY_SHAPE, tiny_params)
    assert H.shape == (256, 256)
    reflectivity = random_grid(rng, TINY_SHAPE) * (rng.random(TINY_SHAPE) < 0.3)
    scene = Scene(ComplexGrid(reflectivity), tiny_params.azimuth_cell_m, tiny_params.range_cell_m)
    raw = simulate_raw(scene, tiny_params, seed)
    predicted = H @ reflectivity.ravel()
    assert np.linalg.norm(predicted - raw.flat()) <= 1e-10 * np.linalg.norm(predicted)


def test_observation_column_is_single_target_echo(tiny_params, seed):
    H = observation_matrix(TINY_SHAPE, tiny_params)
    cell = (7, 9)
    raw = simulate_raw(Scene.from_cells(TINY_SHAPE, tiny_params, [cell]), tiny_params, seed)
    column = H[:, cell[0] * TINY_SHAPE[1] + cell[1]]
    np.testing.assert_allclose(column, raw.flat(), atol=1e-10 * np.linalg.norm(column))


def test_observation_matrix_cap(tiny_params):
    with pytest.raises(OperatorSizeError):
        observation_matrix(TINY_SHAPE, tiny_params, max_entries=1000)


def test_noise_calibration():
    """Measured SNR on a 128x128 grid is within 0.5 dB of the request"""
    params = RadarParams.desk_scale(128)
    shape = (128, 128)
    scene = Scene.from_cells(shape, params, [(64, 64)])
    clean = simulate_raw(scene, params, Seed(1))
    noisy = simulate_raw(scene, params, Seed(1), noise_snr_db=20.0)
    assert measured_snr_db(noisy, clean) == pytest.approx(20.0, abs=0.5)


def test_noise_is_seeded(tiny_params):
    scene = Scene.from_cells(TINY_SHAPE, tiny_params, [(8, 8)])
    first = simulate_raw(scene, tiny_params, Seed(5), noise_snr_db=10.0)
    again = simulate_raw(scene, tiny_params, Seed(5), noise_snr_db=10.0)
    other = simulate_raw(scene, tiny_params, Seed(6), noise_snr_db=10.0)
    np.testing.assert_array_equal(first.data, again.data)
    assert not np.array_equal(first.data, other.data)


def test_targets_outside_swath_are_rejected(tiny_params, seed):
    half_az, _ = Scene.empty(TINY_SHAPE, tiny_params).extent_m()
    scene = point_targets_to_scene(
        TINY_SHAPE, tiny_params, [PointTarget(2.0 * half_az, 0.0, 1.0)]
    )
    with pytest.raises(SwathError):
        simulate_raw(scene, tiny_params, seed)


def test_off_grid_target_at_cell_position_matches_on_grid(tiny_params, seed):
    """A listed target placed exactly on a cell centre echoes like that cell"""
    n_az, n_rg = TINY_SHAPE
    cell = (5, 11)
    target = PointTarget(
        (cell[0] - n_az / 2.0) * tiny_params.azimuth_cell_m,
        (cell[1] - n_rg / 2.0) * tiny_params.range_cell_m,
        1.0,
    )
    listed = simulate_raw(point_targets_to_scene(TINY_SHAPE, tiny_params, [target]), tiny_params, seed)
    gridded = simulate_raw(Scene.from_cells(TINY_SHAPE, tiny_params, [cell]), tiny_params, seed)
    assert (listed - gridded).norm() <= 1e-9 * gridded.norm()


def test_scene_spacing_must_match(tiny_params, desk_params, seed):
    scene = Scene.from_cells(TINY_SHAPE, desk_params, [(1, 1)])
    with pytest.raises(SwathError):
        simulate_raw(scene, tiny_params, seed)


def test_rayleigh_scene(desk_params, seed):
    scene = rayleigh_scene((72, 64), desk_params, (24, 48, 20, 44), seed)
    values = scene.reflectivity.data
    assert np.count_nonzero(values[24:48, 20:44]) == 24 * 24
    assert np.count_nonzero(values) == 24 * 24
    assert np.mean(np.abs(values) ** 2) * (72 * 64) / (24 * 24) == pytest.approx(1.0, abs=0.2)
    exact = rayleigh_scene((72, 64), desk_params, (24, 48, 20, 44), seed, exact_scatterers=True)
    assert np.mean(np.abs(exact.reflectivity.data[24:48, 20:44]) ** 2) == pytest.approx(1.0, abs=0.2)
    with pytest.raises(SwathError):
        rayleigh_scene((72, 64), desk_params, (60, 80, 0, 10), seed)


def test_unit_echo_energy_matches_single_target(tiny_params, seed):
    raw = simulate_raw(Scene.from_cells(TINY_SHAPE, tiny_params, [(8, 8)]), tiny_params, seed)
    assert unit_echo_energy(tiny_params, TINY_SHAPE) == pytest.approx(raw.norm() ** 2, rel=1e-12)


def test_generate_mask_cardinality_and_determinism():
    mask = generate_mask((10, 10), 0.2, Seed(3))
    assert len(mask) == 20
    assert len(np.unique(mask.retained)) == 20
    np.testing.assert_array_equal(mask.retained, generate_mask((10, 10), 0.2, Seed(3)).retained)
    assert not np.array_equal(mask.retained, generate_mask((10, 10), 0.2, Seed(4)).retained)


def test_full_rate_mask_keeps_everything():
    for pattern in ("sample", "pulse"):
        mask = generate_mask((6, 5), 1.0, Seed(0), pattern=pattern)
        np.testing.assert_array_equal(mask.retained, np.arange(30))


def test_pulse_mask_keeps_whole_pulses():
    mask = generate_mask((20, 8), 0.25, Seed(9), pattern="pulse")
    rows = mask.retained.reshape(-1, 8) // 8
    assert rows.shape == (5, 8)
    assert np.all(rows == rows[:, :1])


def test_mask_cardinality_rules():
    assert len(generate_mask((72, 64), 0.2, Seed(5), pattern="pulse")) == 14 * 64
    assert len(generate_mask((72, 64), 0.2, Seed(5))) == 922
    assert len(generate_mask((8, 8), 0.001, Seed(5))) == 1
    assert len(generate_mask((8, 8), 0.001, Seed(5), pattern="pulse")) == 8


def test_generate_mask_rejects_bad_rates():
    for rate in (0.0, -0.1, 1.5):
        with pytest.raises(ConfigError):
            generate_mask((4, 4), rate, Seed(0))


def test_subsample_and_adjoint(rng):
    raw = ComplexGrid(random_grid(rng, (6, 7)))
    mask = generate_mask((6, 7), 0.4, Seed(2))
    data = subsample(raw, mask)
    np.testing.assert_array_equal(data.values, raw.flat()[mask.retained])
    assert data.norm() <= raw.norm()

    d = CompressedData(rng.standard_normal(len(mask)) + 1j * rng.standard_normal(len(mask)), mask)
    np.testing.assert_array_equal(subsample(subsample_adjoint(d), mask).values, d.values)
    lhs = np.vdot(data.values, d.values)
    rhs = inner_product(raw, subsample_adjoint(d))
    assert lhs == pytest.approx(rhs, rel=1e-12)

    single = subsample(raw, generate_mask((6, 7), 1 / 42, Seed(1)))
    assert single.values.size == 1
    with pytest.raises(ShapeError):
        subsample(ComplexGrid.zeros((7, 6)), mask)
