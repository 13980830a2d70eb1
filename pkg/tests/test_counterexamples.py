import math

import numpy as np
import pytest

from utils.counterexamples import (
    corner_value,
    counterexample_linfty_linfty,
    counterexample_linfty_lq,
    growth_report,
    khintchine_constants,
)
from utils.dyadic_core import lp_norm, martingale_average, rademacher
from utils.errors import ExponentError, ScaleRangeError
from utils.twisted_paraproduct import t_d


@pytest.mark.parametrize("n", range(1, 9))
def test_first_counterexample_output_is_exact(n):
    F, G = counterexample_linfty_lq(n, n)
    expected = np.zeros((2 ** n, 2 ** n))
    expected[0, :] = n
    assert np.array_equal(t_d(F, G).values, expected)


@pytest.mark.parametrize("n, N", [(3, 3), (3, 6), (5, 7)])
def test_averages_reproduce_rademacher_functions(n, N):
    F, _ = counterexample_linfty_lq(n, N)
    rows = 2 ** (N - n)
    for k in range(n):
        averaged = martingale_average(F, 1, k).values[:rows, :]
        assert np.array_equal(averaged, np.broadcast_to(rademacher(k + 1, N).values, averaged.shape))


def test_first_counterexample_norms():
    for n in range(1, 9):
        F, G = counterexample_linfty_lq(n, n)
        assert lp_norm(F, math.inf) <= 3.0
        assert math.isclose(lp_norm(G, 2), 2.0 ** (-n / 2) * math.sqrt(n), rel_tol=1e-12)


def test_ratio_at_q2_is_exact():
    table = growth_report(8, 2.0)
    for row in table.itertuples():
        expected = 1.0 if row.n == 1 else math.sqrt(row.n) / 3.0
        assert math.isclose(row.ratio, expected, rel_tol=1e-12)
    assert table["ratio"].iloc[1:].is_monotonic_increasing
    assert table["ratio"].iloc[1:].diff().dropna().gt(0).all()


@pytest.mark.parametrize("q", [1.0, 4.0])
def test_ratio_over_sqrt_n_stays_in_a_band(q):
    table = growth_report(8, q)
    band = table.loc[table["n"] >= 2, "ratio_over_sqrt_n"]
    assert band.min() > 0
    assert band.max() / band.min() < 3.0
    assert table["ratio"].iloc[1:].is_monotonic_increasing


def test_ratio_grows_without_bound_at_q4():
    table = growth_report(8, 4.0)
    assert table["ratio"].iloc[1:].diff().dropna().gt(0).all()


def test_growth_report_on_a_fixed_grid():
    table = growth_report(4, 2.0, N=6)
    assert list(table["N"]) == [6] * 4
    with pytest.raises(ScaleRangeError):
        growth_report(4, 2.0, N=3)


@pytest.mark.parametrize("q", [math.inf, 0.5])
def test_growth_report_exponent_range(q):
    with pytest.raises(ExponentError):
        growth_report(3, q)


def test_first_counterexample_range():
    with pytest.raises(ScaleRangeError):
        counterexample_linfty_lq(0, 3)
    with pytest.raises(ScaleRangeError):
        counterexample_linfty_lq(4, 3)


def test_second_counterexample_corner_values():
    assert [corner_value(n, 6) for n in (1, 2, 3)] == [-1 / 4, -27 / 64, -563 / 1024]


def test_second_counterexample_grows_affinely():
    values = [corner_value(n, 10) for n in (3, 4, 5)]
    first, second = values[1] - values[0], values[2] - values[1]
    assert first < 0
    assert abs(second - first) <= 0.1 * abs(first)
    assert abs(corner_value(5, 10)) > abs(corner_value(1, 10))


def test_second_counterexample_is_bounded_input():
    F, G = counterexample_linfty_linfty(2, 5)
    assert lp_norm(F, math.inf) == lp_norm(G, math.inf) == 1.0
    assert np.array_equal(G.values, F.values.T)
    with pytest.raises(ScaleRangeError):
        counterexample_linfty_linfty(3, 5)


def test_khintchine_constants():
    table = khintchine_constants(6, 2.0)
    assert np.allclose(table["ratio"], 1.0, rtol=1e-12)
    moments = khintchine_constants(6, 1.0)["moment"].tolist()
    assert moments[:4] == [1.0, 1.0, 1.5, 1.5]
    with pytest.raises(ScaleRangeError):
        khintchine_constants(21, 2.0)
    with pytest.raises(ExponentError):
        khintchine_constants(3, 0.0)
