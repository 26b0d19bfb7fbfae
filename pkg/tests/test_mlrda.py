import math

import numpy as np
import pytest
from scipy.linalg import svdvals

from mlcs_sar.core import (
    ComplexGrid, LookStack, RadarParams, SamplingMask, Seed, fft_azimuth, inner_product,
)
from mlcs_sar.errors import AliasingError, OperatorSizeError, ShapeError
from mlcs_sar.mlrda import (
    LookPlan, SensingOperator, adjoint_of_sensing, build_filters, interpolation_stencil, look_form,
    look_inverse, materialize_operator, spectrum_stack, unit_target_gain,
)
from mlcs_sar.sim import CompressedData, Scene, generate_mask, simulate_raw, unit_echo_energy
from tests.conftest import DESK_SHAPE, TINY_SHAPE, random_grid


def _random_looks(rng, plan, n_range):
    return LookStack(random_grid(rng, (plan.look_count,) + plan.look_shape(n_range)))


def _energy_fraction(image, centre, half):
    az, rg = centre
    power = np.abs(image) ** 2
    return power[az - half:az + half + 1, rg - half:rg + half + 1].sum() / power.sum()


def test_filters_are_phase_only(desk_params):
    filters = build_filters(desk_params, DESK_SHAPE)
    np.testing.assert_allclose(np.abs(filters.range_matched_filter_spectrum), 1.0, rtol=1e-12)
    np.testing.assert_allclose(np.abs(filters.azimuth_matched_filter_spectrum), 1.0, rtol=1e-12)
    assert filters.rcmc_shift_table[0] == 0.0
    assert np.all(filters.rcmc_shift_table >= 0.0)
    assert not np.any(build_filters(desk_params, DESK_SHAPE, migration=False).rcmc_shift_table)


def test_filters_refuse_aliased_doppler(desk_params):
    aliased = desk_params.model_copy(update={"prf_hz": 0.5 * desk_params.doppler_bandwidth_hz})
    with pytest.raises(AliasingError):
        build_filters(aliased, DESK_SHAPE)


def test_interpolation_stencil():
    whole, taps = interpolation_stencil(np.array([0.0, 2.0, 1.25]))
    np.testing.assert_array_equal(whole, [0, 2, 1])
    np.testing.assert_allclose(taps.sum(axis=1), 1.0, rtol=1e-12)
    np.testing.assert_allclose(taps[0], [0, 0, 0, 1, 0, 0, 0, 0], atol=1e-15)
    assert np.argmax(taps[2]) == 3


def test_look_plan_partitions_doppler_bins():
    plan = LookPlan.build(72, 3)
    assert plan.look_count == 3
    assert plan.band_width == 24
    everything = np.concatenate(plan.band_assignments)
    np.testing.assert_array_equal(np.sort(everything), np.arange(72))
    # first band holds the most negative Doppler bins, centre bin first
    assert set(plan.band_assignments[0].tolist()) == set(range(36, 60))
    assert plan.band_assignments[0][0] == 48
    np.testing.assert_array_equal(LookPlan.build(72, 1).band_assignments[0], np.arange(72))
    assert plan.look_shape(64) == (24, 64)
    with pytest.raises(ShapeError):
        LookPlan.build(64, 3)
    with pytest.raises(ShapeError):
        LookPlan.build(64, 0)


def test_spectrum_stack_preserves_energy(rng):
    plan = LookPlan.build(16, 4)
    looks = _random_looks(rng, plan, 8)
    spectrum = spectrum_stack(looks, plan)
    assert spectrum.shape == (16, 8)
    assert spectrum.norm() == pytest.approx(looks.norm(), rel=1e-12)
    with pytest.raises(ShapeError):
        spectrum_stack(looks, LookPlan.build(16, 2))


def test_single_look_spectrum_is_azimuth_fft(rng):
    image = ComplexGrid(random_grid(rng, (16, 8)))
    spectrum = spectrum_stack(LookStack(image.data[None]), LookPlan.build(16, 1))
    np.testing.assert_allclose(spectrum.data, fft_azimuth(image).data, atol=1e-12)


@pytest.mark.parametrize("look_count", [1, 2, 4])
def test_look_inverse_is_adjoint_of_look_form(tiny_params, rng, look_count):
    """<M y, X> = <y, G X> for random pairs"""
    filters = build_filters(tiny_params, TINY_SHAPE)
    plan = LookPlan.build(TINY_SHAPE[0], look_count)
    for _ in range(20):
        y = ComplexGrid(random_grid(rng, TINY_SHAPE))
        x = _random_looks(rng, plan, TINY_SHAPE[1])
        lhs = inner_product(look_form(y, filters, plan), x)
        rhs = inner_product(y, look_inverse(x, filters, plan))
        assert abs(lhs - rhs) <= 1e-10 * x.norm() * y.norm()


@pytest.mark.parametrize("look_count", [1, 2, 4])
def test_materialized_operators_agree(tiny_params, rng, look_count):
    filters = build_filters(tiny_params, TINY_SHAPE)
    plan = LookPlan.build(TINY_SHAPE[0], look_count)
    g_hat = materialize_operator(filters, plan, TINY_SHAPE)
    m_hat = materialize_operator(filters, plan, TINY_SHAPE, operator="forward")
    assert g_hat.shape == (256, 256)
    np.testing.assert_allclose(g_hat.conj().T, m_hat, atol=1e-10)

    x = _random_looks(rng, plan, TINY_SHAPE[1])
    np.testing.assert_allclose(
        g_hat @ x.data.ravel(), look_inverse(x, filters, plan).flat(), atol=1e-10
    )
    assert svdvals(g_hat).max() == pytest.approx(filters.operator_norm(), rel=1e-8)


def test_chain_without_migration_is_unitary(tiny_params, rng):
    filters = build_filters(tiny_params, TINY_SHAPE, migration=False)
    plan = LookPlan.build(TINY_SHAPE[0], 2)
    g_hat = materialize_operator(filters, plan, TINY_SHAPE)
    np.testing.assert_allclose(g_hat.conj().T @ g_hat, np.eye(256), atol=1e-10)
    assert filters.operator_norm() == pytest.approx(1.0, rel=1e-12)

    y = ComplexGrid(random_grid(rng, TINY_SHAPE))
    back = look_inverse(look_form(y, filters, plan), filters, plan)
    assert (back - y).norm() <= 1e-12 * y.norm()


def test_round_trip_on_simulated_data(desk_params, seed):
    """G(M(y)) returns band-limited echo data up to interpolation error"""
    scene = Scene.from_cells(DESK_SHAPE, desk_params, [(36, 32), (20, 10), (50, 45)])
    raw = simulate_raw(scene, desk_params, seed)
    filters = build_filters(desk_params, DESK_SHAPE)
    for look_count in (1, 3):
        plan = LookPlan.build(DESK_SHAPE[0], look_count)
        back = look_inverse(look_form(raw, filters, plan), filters, plan)
        assert (back - raw).norm() <= 3e-2 * raw.norm()

    reverse = filters.with_adjoint_mode("reverse")
    plan = LookPlan.build(DESK_SHAPE[0], 1)
    back = look_inverse(look_form(raw, reverse, plan), reverse, plan)
    assert (back - raw).norm() <= 0.2 * raw.norm()


def test_single_target_focuses_to_its_cell():
    params = RadarParams.desk_scale(72, azimuth_window="hamming", range_window="hamming")
    raw = simulate_raw(Scene.from_cells(DESK_SHAPE, params, [(36, 32)]), params, Seed(1))
    filters = build_filters(params, DESK_SHAPE)

    image = look_form(raw, filters, LookPlan.build(72, 1)).data[0]
    assert np.unravel_index(np.argmax(np.abs(image)), image.shape) == (36, 32)
    assert 1.0 - _energy_fraction(image, (36, 32), 2) <= 0.10

    looks = look_form(raw, filters, LookPlan.build(72, 3))
    assert looks.look_shape == (24, 64)
    for look in looks.data:
        assert np.unravel_index(np.argmax(np.abs(look)), look.shape) == (12, 32)


@pytest.mark.parametrize("cell", [(36, 32), (37, 32), (35, 31), (7, 20)])
def test_focused_target_keeps_scene_phase(desk_params, cell):
    """Odd and even azimuth rows focus with the reflectivity's own phase"""
    amplitude = 1j
    scene = Scene.from_cells(DESK_SHAPE, desk_params, [cell], [amplitude])
    raw = simulate_raw(scene, desk_params, Seed(1))
    raw = raw * (1.0 / math.sqrt(unit_echo_energy(desk_params, DESK_SHAPE)))
    image = look_form(raw, build_filters(desk_params, DESK_SHAPE), LookPlan.build(72, 1)).data[0]
    ratio = image[cell] / amplitude
    assert ratio.real > 0.7
    assert abs(np.angle(ratio)) < 0.1


def test_unit_target_gain_calibrates_the_peak(desk_params):
    filters = build_filters(desk_params, DESK_SHAPE)
    gain = unit_target_gain(filters, desk_params)
    assert 0.7 < gain < 0.95
    raw = simulate_raw(Scene.from_cells(DESK_SHAPE, desk_params, [(20, 45)]), desk_params, Seed(2))
    raw = raw * (1.0 / (math.sqrt(unit_echo_energy(desk_params, DESK_SHAPE)) * gain))
    image = look_form(raw, filters, LookPlan.build(72, 1)).data[0]
    assert abs(image[20, 45]) == pytest.approx(1.0, abs=0.03)


def test_look_form_rejects_mismatched_grids(desk_params, tiny_params):
    filters = build_filters(desk_params, DESK_SHAPE)
    with pytest.raises(ShapeError):
        look_form(ComplexGrid.zeros(TINY_SHAPE), filters, LookPlan.build(16, 1))
    with pytest.raises(ShapeError):
        look_form(ComplexGrid.zeros(DESK_SHAPE), filters, LookPlan.build(36, 1))


def test_materialize_refuses_large_grids(desk_params):
    filters = build_filters(desk_params, DESK_SHAPE)
    with pytest.raises(OperatorSizeError):
        materialize_operator(filters, LookPlan.build(72, 1), DESK_SHAPE)


def test_sensing_operator_adjoint(tiny_params, rng):
    """Theta*G and its adjoint satisfy the inner product identity"""
    filters = build_filters(tiny_params, TINY_SHAPE)
    plan = LookPlan.build(TINY_SHAPE[0], 2)
    mask = generate_mask(TINY_SHAPE, 0.3, Seed(11))
    operator = SensingOperator(filters, plan, mask)
    assert operator.look_shape == (8, 16)
    assert operator.look_count == 2

    x = _random_looks(rng, plan, TINY_SHAPE[1])
    d = CompressedData(random_grid(rng, (len(mask),)), mask)
    lhs = np.vdot(operator.forward(x).values, d.values)
    rhs = inner_product(x, operator.adjoint(d))
    assert abs(lhs - rhs) <= 1e-10 * x.norm() * d.norm()

    # a full mask reduces the composite adjoint to look formation
    full = SamplingMask(np.arange(256), TINY_SHAPE)
    y = ComplexGrid(random_grid(rng, TINY_SHAPE))
    looks = adjoint_of_sensing(CompressedData(y.flat(), full), filters, plan)
    np.testing.assert_allclose(looks.data, look_form(y, filters, plan).data, atol=1e-12)

    with pytest.raises(ShapeError):
        SensingOperator(filters, plan, generate_mask((8, 8), 0.5, Seed(1)))
