from utils.identity_suite import SUITE_COLUMNS, run_identity_suite


def test_suite_passes_on_random_inputs():
    frame = run_identity_suite(3, seed=7, trials=2, L=7)
    assert list(frame.columns) == SUITE_COLUMNS
    failed = frame.loc[~frame["passed"], "check"].tolist()
    assert failed == []
    expected = {"product_identity", "symmetry_identity", "telescoping", "global_telescoping", "resummation",
                "single_tree_ratio", "reduction_chain", "cz_vanishing", "symbol_decomposition",
                "telescoping_3d", "counterexample_exact"}
    assert expected <= set(frame["check"])
    assert frame.loc[frame["check"] == "counterexample_exact", "trial"].tolist() == [1, 2, 3]


def test_suite_is_deterministic():
    first = run_identity_suite(2, seed=3, trials=1, L=6)
    second = run_identity_suite(2, seed=3, trials=1, L=6)
    assert first.equals(second)


def test_suite_reports_progress():
    fractions = []
    run_identity_suite(2, seed=1, trials=2, L=6, progress_callback=lambda message, fraction: fractions.append(fraction))
    assert fractions == [0.0, 0.5, 1.0]
