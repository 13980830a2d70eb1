import math

import numpy as np
import pytest

from config import SINGLE_TREE_CONSTANT, TOLERANCES
from utils.box_forms import FormTable
from utils.dyadic_core import DyadicSquare, StepFunction2D, random_step_function
from tests.conftest import unit_square_theta_oracle
from utils.errors import ConvexityError, InternalConsistencyError, NegativeInputError, ResolutionError
from utils.trees import (
    closing_bound,
    full_tree,
    global_telescoping_residual,
    is_symmetric,
    lambda_tree,
    leaves,
    make_tree,
    random_convex_tree,
    reduce_arguments,
    reduction_check,
    single_tree_ratio,
    telescoping_residual,
    theta1,
    theta2,
    tree_reduction_chain,
)
from utils.twisted_paraproduct import lambda_d


def _scale(functions):
    return max(1.0, float(np.prod([np.max(np.abs(F.values)) for F in functions])))


def test_make_tree_rejects_gaps():
    root = DyadicSquare(0, 0, 0)
    grandchild = DyadicSquare(2, 0, 0)
    with pytest.raises(ConvexityError):
        make_tree([root, grandchild])
    with pytest.raises(ConvexityError):
        make_tree([DyadicSquare(1, 0, 0), DyadicSquare(1, 1, 1)])
    with pytest.raises(ConvexityError):
        make_tree([])


def test_leaves_partition_the_root(rng):
    for _ in range(20):
        tree = random_convex_tree(rng, 5)
        leaf_list = leaves(tree, 5)
        assert math.isclose(sum(leaf.measure for leaf in leaf_list), tree.root.measure)
        assert all(leaf not in tree and leaf.parent() in tree for leaf in leaf_list)


def test_subtree_root_need_not_be_unit_square(rng):
    tree = random_convex_tree(rng, 5, root=DyadicSquare(1, 1, 0))
    assert tree.root == DyadicSquare(1, 1, 0)
    F1, F2, F3, F4 = (random_step_function(rng, 5) for _ in range(4))
    assert telescoping_residual(tree, F1, F2, F3, F4) <= TOLERANCES["identity"]


def test_telescoping_identity_on_random_trees(rng):
    for _ in range(200):
        tree = random_convex_tree(rng, 5)
        functions = [random_step_function(rng, 5) for _ in range(4)]
        assert telescoping_residual(tree, *functions) <= TOLERANCES["identity"] * _scale(functions)


def test_telescoping_identity_for_signed_functions(rng):
    for _ in range(20):
        tree = random_convex_tree(rng, 4)
        functions = [random_step_function(rng, 4, nonnegative=False) for _ in range(4)]
        assert telescoping_residual(tree, *functions) <= TOLERANCES["identity"] * _scale(functions)


def test_single_square_identity(rng):
    Q = DyadicSquare(1, 0, 1)
    tree = make_tree([Q])
    functions = [random_step_function(rng, 3) for _ in range(4)]
    table = FormTable(functions)
    left = theta1(tree, *functions, table).value + theta2(tree, *functions, table).value
    right = table.sum_over(Q.children(), "xi").value - table.sum_over([Q], "xi").value
    assert math.isclose(left, right, rel_tol=1e-12, abs_tol=1e-14)


def test_global_telescoping_identity(rng):
    for _ in range(20):
        functions = [random_step_function(rng, 4, nonnegative=False) for _ in range(4)]
        assert global_telescoping_residual(*functions) <= TOLERANCES["identity"]


def test_single_tree_estimate(rng):
    worst = 0.0
    for _ in range(500):
        tree = random_convex_tree(rng, 5)
        functions = [random_step_function(rng, 5, coarse_scale=int(rng.integers(2, 6))) for _ in range(4)]
        worst = max(worst, single_tree_ratio(tree, *functions))
    assert worst <= SINGLE_TREE_CONSTANT + 1e-9


def test_single_tree_estimate_requires_nonnegative(rng):
    tree = full_tree(3)
    F = random_step_function(rng, 3, nonnegative=False)
    with pytest.raises(NegativeInputError):
        single_tree_ratio(tree, F, F, F, F)
    with pytest.raises(NegativeInputError):
        lambda_tree(tree, F, F, F)


def test_forms_reject_trees_at_grid_scale(rng):
    functions = [random_step_function(rng, 2) for _ in range(4)]
    with pytest.raises(ResolutionError):
        theta1(full_tree(3), *functions)


def test_lambda_tree_over_full_tree_is_lambda_d(rng):
    F, G, H = (random_step_function(rng, 4) for _ in range(3))
    assert math.isclose(lambda_tree(full_tree(4), F, G, H), lambda_d(F, G, H), rel_tol=1e-10)


def test_reduction_inequalities(rng):
    for _ in range(50):
        tree = random_convex_tree(rng, 4)
        functions = [random_step_function(rng, 4, nonnegative=False) for _ in range(4)]
        check = reduction_check(tree, *functions)
        assert check.theta1_slack >= -1e-12
        assert check.theta2_slack >= -1e-12


def test_reduction_chain_audit(rng):
    for _ in range(20):
        tree = random_convex_tree(rng, 4)
        functions = [random_step_function(rng, 4) for _ in range(4)]
        audit = tree_reduction_chain(tree, functions)
        assert audit.passed
        kinds = {step.kind for step in audit.steps}
        assert {"solid", "broken", "nonnegative"} <= kinds


def test_argument_reduction():
    assert reduce_arguments((0, 1, 2, 3), 1) == ((0, 0, 2, 2), (1, 1, 3, 3))
    assert reduce_arguments((0, 1, 2, 3), 2) == ((0, 1, 0, 1), (2, 3, 2, 3))
    assert is_symmetric((0, 0, 2, 2), 1)
    assert not is_symmetric((0, 0, 2, 2), 2)


def test_closing_bound(rng):
    for _ in range(20):
        F, G, H = (random_step_function(rng, 4) for _ in range(3))
        result = closing_bound(F, G, H)
        assert abs(result.lambda_value) <= result.bound * (1 + 1e-12)
        assert max(result.identity_residuals.values()) <= 1e-10


def test_closing_bound_lambda_matches_twisted_form(rng):
    F, G, H = (random_step_function(rng, 3) for _ in range(3))
    assert math.isclose(closing_bound(F, G, H).lambda_value, lambda_d(F, G, H), rel_tol=1e-10)


def test_constant_functions_give_zero_theta():
    one = StepFunction2D.constant(1.0, 3)
    tree = full_tree(3)
    assert abs(theta1(tree, one, one, one, one).value) < 1e-14
    assert abs(theta2(tree, one, one, one, one).value) < 1e-14


def test_theta2_diagonal_nonnegative(rng):
    for _ in range(200):
        G = random_step_function(rng, 4, nonnegative=False)
        tree = random_convex_tree(rng, 4)
        assert theta2(tree, G, G, G, G).value >= -1e-12


def test_theta1_diagonal_nonnegative(rng):
    for _ in range(200):
        G = random_step_function(rng, 4, nonnegative=False)
        tree = random_convex_tree(rng, 4)
        assert theta1(tree, G, G, G, G).value >= -1e-12


def test_theta_forms_match_unit_square_loop(rng):
    tree = full_tree(1)
    for _ in range(20):
        functions = [random_step_function(rng, 1, nonnegative=False) for _ in range(4)]
        assert theta1(tree, *functions).value == pytest.approx(
            unit_square_theta_oracle(*functions, "theta1"), abs=1e-12)
        assert theta2(tree, *functions).value == pytest.approx(
            unit_square_theta_oracle(*functions, "theta2"), abs=1e-12)


def test_theta_forms_on_corner_indicator():
    G = StepFunction2D(np.array([[1.0, 0.0], [0.0, 0.0]]))
    tree = full_tree(1)
    assert theta2(tree, G, G, G, G).value == pytest.approx(1 / 16, abs=1e-15)
    assert theta1(tree, G, G, G, G).value == pytest.approx(1 / 8, abs=1e-15)
    residual = telescoping_residual(tree, G, G, G, G)
    assert residual <= 1e-14


def test_single_tree_ratio_raises_above_constant(rng, monkeypatch):
    monkeypatch.setattr("utils.trees.SINGLE_TREE_CONSTANT", 0.0)
    monkeypatch.setitem(TOLERANCES, "single_tree", 0.0)
    tree = full_tree(3)
    F = StepFunction2D.constant(1.0, 3)
    G = random_step_function(rng, 3)
    assert single_tree_ratio(tree, F, G, F, G, check=False) > 0.0
    with pytest.raises(InternalConsistencyError):
        single_tree_ratio(tree, F, G, F, G)
