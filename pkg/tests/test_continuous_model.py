import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from utils.continuous_model import (
    PeriodicGrid1D,
    averaging_symbol,
    build_mollifiers,
    decomposition_identity_residual,
    difference_bound,
    jsw_ratio_report,
    jsw_square_function,
    multiplier_apply,
    plateau_symbol,
    psi_symbol_bounds,
    random_band_limited,
    rho_window_sum,
    sparse_paraproduct,
    sparse_reduction_residual,
    square_function_domination,
    support_identity_residuals,
    t_c,
    t_phi_theta_b,
)
from utils.errors import NormalizationError, NyquistError, ParameterRangeError, ResolutionError


@pytest.fixture(scope="module")
def family8():
    return build_mollifiers(8)


def test_grid_frequencies():
    grid = PeriodicGrid1D(3)
    assert list(grid.frequencies) == [0, 1, 2, 3, -4, -3, -2, -1]
    samples = np.arange(8.0)
    assert np.allclose(np.real(grid.inverse(grid.transform(samples))), samples)


def test_plateau_is_exactly_one_then_zero():
    frequencies = PeriodicGrid1D(6).frequencies
    values = plateau_symbol(frequencies, 30)
    magnitude = np.abs(frequencies)
    assert np.all(values[magnitude <= 5] == 1.0)
    assert np.all(values[magnitude >= 7] == 0.0)
    assert np.all((values >= 0.0) & (values <= 1.0))


def test_support_identities_on_lattice():
    residuals = support_identity_residuals(build_mollifiers(10))
    assert residuals["theta_rho"] == 0.0
    assert residuals["rho_sum_on_support"] <= 1e-12
    assert residuals["rho_sum_far"] == 0.0


def test_rho_window_sum_on_bump_support(family8):
    for k in family8.k_range:
        support = family8.psi(k) > 0
        assert np.allclose(rho_window_sum(family8, k)[support], 1.0, atol=1e-12)


def test_decomposition_identity(family8, rng):
    for _ in range(20):
        F = random_band_limited(rng, 8)
        G = random_band_limited(rng, 8)
        assert decomposition_identity_residual(F, G, family8) <= 1e-8


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=-20, max_value=20), st.integers(min_value=0, max_value=9))
def test_sparse_reduction(shift, l):
    family = build_mollifiers(8)
    G = random_band_limited(np.random.default_rng(shift * 10 + l + 1000), 8)
    assert sparse_reduction_residual(G, shift / 10, l, family) <= 1e-10


@pytest.mark.parametrize("b, l", [(0.05, 0), (2.1, 0), (0.0, 10), (0.0, -1)])
def test_shift_and_index_ranges(family8, rng, b, l):
    F = random_band_limited(rng, 8)
    with pytest.raises(ParameterRangeError):
        sparse_paraproduct(F, F, b, l, family8)


def test_nyquist_limit():
    build_mollifiers(8, k_range=range(0, 6))
    with pytest.raises(NyquistError):
        build_mollifiers(8, k_range=range(0, 7))


def test_unknown_averaging_kind():
    with pytest.raises(ParameterRangeError):
        build_mollifiers(6, averaging="box")
    with pytest.raises(ParameterRangeError):
        averaging_symbol(np.zeros(1), 0, "box")


def test_multiplier_identity_and_shape_check(rng):
    f = rng.standard_normal((16, 16))
    assert np.allclose(multiplier_apply(f, np.ones(16), axis=1), f)
    with pytest.raises(ResolutionError):
        multiplier_apply(f, np.ones(8), axis=0)


def test_t_c_vanishes_for_input_constant_in_y(family8, rng):
    F = random_band_limited(rng, 8)
    G = np.repeat(rng.standard_normal((256, 1)), 256, axis=1)
    assert np.allclose(t_c(F, G, family8), 0.0, atol=1e-10)
    with pytest.raises(ResolutionError):
        t_c(F[:128, :128], G[:128, :128], family8)


def test_normalization_checks(rng):
    gaussian = build_mollifiers(7)
    mean_zero = build_mollifiers(7, averaging="mean_zero")
    assert gaussian.averaging_integral == 1.0
    assert mean_zero.averaging_integral == 0.0
    F = random_band_limited(rng, 7)
    with pytest.raises(NormalizationError):
        jsw_square_function(F[:, 0], mean_zero)
    with pytest.raises(NormalizationError):
        square_function_domination(F, F, gaussian)


def test_square_function_domination(rng):
    family = build_mollifiers(7, averaging="mean_zero")
    for _ in range(5):
        F = random_band_limited(rng, 7)
        G = random_band_limited(rng, 7)
        assert square_function_domination(F, G, family).max_violation <= 1e-9


def test_difference_bound(family8, rng):
    for b in (-1.5, 0.0, 0.7):
        F = random_band_limited(rng, 8)
        G = random_band_limited(rng, 8)
        assert difference_bound(F, G, b, family8).max_violation <= 1e-9


def test_theta_paraproduct_is_linear_in_g(family8, rng):
    F, G1, G2 = (random_band_limited(rng, 8) for _ in range(3))
    left = t_phi_theta_b(F, G1 + 2.0 * G2, 0.4, family8)
    right = t_phi_theta_b(F, G1, 0.4, family8) + 2.0 * t_phi_theta_b(F, G2, 0.4, family8)
    assert np.allclose(left, right, atol=1e-9)


def test_psi_symbol_bounds(family8):
    table = psi_symbol_bounds(family8)
    assert list(table.columns) == ["l", "max_symbol", "max_log_derivative"]
    assert len(table) == 10
    assert (table["max_symbol"] <= 1.0).all()
    assert table.loc[table["l"] >= len(family8.k_range), "max_symbol"].eq(0.0).all()


def test_jsw_square_function_scale_range(family8, rng):
    f = rng.standard_normal(256)
    with pytest.raises(ParameterRangeError):
        jsw_square_function(f, family8, k_range=[9])
    assert jsw_square_function(f, family8, k_range=range(0, 9)).shape == (256,)


def test_jsw_ratio_report():
    table = jsw_ratio_report([5, 6], trials=3, seed=1)
    assert list(table["L"]) == [5, 6]
    assert (table["max_ratio"] > 0).all()
    assert table.equals(jsw_ratio_report([5, 6], trials=3, seed=1))
    assert all(math.isfinite(value) for value in table["max_ratio"])


def test_jsw_ratio_report_stops_below_grid_scale():
    child = np.random.SeedSequence(4).spawn(1)[0]
    f = np.random.default_rng(child).standard_normal(32)
    square = jsw_square_function(f, build_mollifiers(5), range(0, 5))
    expected = math.sqrt(np.mean(square ** 2)) / math.sqrt(np.mean(f ** 2))
    table = jsw_ratio_report([5], trials=1, seed=4)
    assert math.isclose(table.loc[0, "max_ratio"], expected, rel_tol=1e-12)
