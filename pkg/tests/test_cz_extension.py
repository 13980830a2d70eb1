import math

import numpy as np
import pytest

from config import TOLERANCES
from utils.cz_extension import fiber_cz, superlevel_inclusion, vanishing_residual, weak_endpoint_experiment
from utils.dyadic_core import StepFunction2D, lp_norm, random_step_function
from utils.errors import ExponentError, NegativeInputError, ParameterRangeError


def _heavy(rng, N):
    return StepFunction2D(rng.exponential(size=(2 ** N, 2 ** N)) ** 3)


def test_bad_part_vanishes_off_exceptional_set(rng):
    for _ in range(100):
        F = random_step_function(rng, 5, nonnegative=False)
        G = _heavy(rng, 5)
        threshold = float(rng.uniform(0.5, 20.0))
        scale = max(1.0, float(np.max(G.values)))
        assert vanishing_residual(F, G, threshold) <= TOLERANCES["vanishing"] * scale


def test_exceptional_set_and_good_part_bounds(rng):
    for _ in range(100):
        G = _heavy(rng, 5)
        fiber_means = G.values.mean(axis=1)
        threshold = float(fiber_means.max()) * float(rng.uniform(1.0, 4.0)) + 1e-9
        decomposition = fiber_cz(G, threshold)
        assert decomposition.capped_fibers == 0
        assert decomposition.exceptional_measure <= lp_norm(G, 1) / threshold
        assert float(np.max(decomposition.good.values)) <= 2.0 * threshold


def test_good_part_keeps_fiber_integrals(rng):
    G = _heavy(rng, 4)
    decomposition = fiber_cz(G, 2.0)
    assert np.allclose(decomposition.good.values.sum(axis=1), G.values.sum(axis=1), rtol=1e-12)
    outside = ~decomposition.exceptional
    assert np.array_equal(decomposition.good.values[outside], G.values[outside])


def test_bad_intervals_are_maximal(rng):
    G = _heavy(rng, 4)
    threshold = 3.0
    decomposition = fiber_cz(G, threshold)
    n = 2 ** G.N
    for row, intervals in enumerate(decomposition.intervals):
        for interval in intervals:
            cells = G.values[row, interval.cell_slice(G.N)]
            assert cells.mean() > threshold
            parent = interval.parent()
            if parent is not None:
                assert G.values[row, parent.cell_slice(G.N)].mean() <= threshold
        covered = sum(interval.length for interval in intervals)
        assert math.isclose(covered * n, decomposition.exceptional[row].sum())


def test_whole_fiber_can_be_bad():
    G = StepFunction2D(np.full((4, 4), 5.0))
    decomposition = fiber_cz(G, 1.0)
    assert decomposition.capped_fibers == 4
    assert decomposition.exceptional.all()


def test_input_checks(rng):
    G = _heavy(rng, 3)
    with pytest.raises(ParameterRangeError):
        fiber_cz(G, 0.0)
    with pytest.raises(NegativeInputError):
        fiber_cz(random_step_function(rng, 3, nonnegative=False), 1.0)


def test_superlevel_inclusion(rng):
    for _ in range(20):
        F = random_step_function(rng, 4)
        G = _heavy(rng, 4)
        audit = superlevel_inclusion(F, G / lp_norm(G, 1), level=0.5)
        assert audit.violations == 0
        assert audit.superlevel_measure <= audit.exceptional_measure + audit.good_superlevel_measure + 1e-12


def test_weak_endpoint_experiment():
    report = weak_endpoint_experiment(3.0, trials=3, N_values=[3, 4], seed=5, max_workers=2)
    assert list(report.table["N"]) == [3, 4]
    assert report.inclusion_violations == 0
    assert math.isfinite(report.trend)
    again = weak_endpoint_experiment(3.0, trials=3, N_values=[3, 4], seed=5, max_workers=1)
    assert report.table.equals(again.table)


@pytest.mark.parametrize("p", [2.0, 1.5, math.inf])
def test_weak_endpoint_exponent_range(p):
    with pytest.raises(ExponentError):
        weak_endpoint_experiment(p, trials=1, N_values=[2])


def test_weak_endpoint_experiment_accepts_single_resolution():
    report = weak_endpoint_experiment(3.0, trials=2, N_values=3, seed=5, max_workers=1)
    assert list(report.table["N"]) == [3]
    assert report.trend == 0.0
    assert report.table.equals(weak_endpoint_experiment(3.0, trials=2, N_values=[3], seed=5, max_workers=1).table)
