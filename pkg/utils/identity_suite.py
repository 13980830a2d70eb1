"""恒等式スイートモジュール

乱数の入力で厳密な恒等式の残差と、定数つきの不等式の余裕をまとめて確認する。
"""
import logging
import math
from typing import Callable, List, Optional

import numpy as np
import pandas as pd

from config import SINGLE_TREE_CONSTANT, TOLERANCES
from utils.continuous_model import build_mollifiers, decomposition_identity_residual, random_band_limited, support_identity_residuals
from utils.counterexamples import counterexample_linfty_lq
from utils.cz_extension import fiber_cz, vanishing_residual
from utils.decomposition import resummation_residual
from utils.dyadic_core import StepFunction2D, lp_norm, random_step_function
from utils.higher_dim import FormTable3D, random_step_function3d, random_tree3d, telescoping3d_residual
from utils.trees import (
    global_telescoping_residual,
    random_convex_tree,
    single_tree_ratio,
    telescoping_residual,
    tree_reduction_chain,
)
from utils.twisted_paraproduct import product_identity_residual, symmetry_residual, t_d

logger = logging.getLogger(__name__)

SUITE_COLUMNS = ["check", "trial", "value", "tolerance", "passed"]


def _scale(*functions) -> float:
    return max(1.0, math.prod(float(np.max(np.abs(F.values))) for F in functions))


def run_identity_suite(N: int, seed: int, trials: int = 3, L: int = 8, N3: int = 2,
                       progress_callback: Optional[Callable[[str, float], None]] = None) -> pd.DataFrame:
    """
    恒等式と不等式のスイートを実行

    Args:
        N: 二次元の解像度
        seed: 乱数シード
        trials: 各検査の試行回数
        L: 連続モデルの格子 2^L
        N3: 三次元の解像度
        progress_callback: 進捗コールバック関数 (message, fraction)

    Returns:
        列 check, trial, value, tolerance, passed の DataFrame
    """
    rng = np.random.default_rng(seed)
    rows: List[dict] = []
    identity = TOLERANCES["identity"]

    def record(check: str, trial: int, value: float, tolerance: float):
        rows.append({"check": check, "trial": trial, "value": float(value), "tolerance": float(tolerance),
                     "passed": bool(value <= tolerance)})

    for trial in range(trials):
        if progress_callback:
            progress_callback(f"恒等式 {trial + 1}/{trials}", trial / trials)
        F, G, H, K = (random_step_function(rng, N) for _ in range(4))
        tree = random_convex_tree(rng, N)
        scale = _scale(F, G, H, K)
        record("product_identity", trial, product_identity_residual(F, G), identity * scale)
        record("symmetry_identity", trial, symmetry_residual(F, G, H), identity * scale)
        record("telescoping", trial, telescoping_residual(tree, F, G, H, K), identity * scale)
        record("global_telescoping", trial, global_telescoping_residual(F, G, H, K), identity * scale)
        record("resummation", trial, resummation_residual(F, G, H), identity * scale)
        record("single_tree_ratio", trial, single_tree_ratio(tree, F, G, H, K, check=False),
               SINGLE_TREE_CONSTANT + TOLERANCES["single_tree"])
        audit = tree_reduction_chain(tree, (F, G, H, K))
        record("reduction_chain", trial, max(0.0, -audit.min_slack), audit.tolerance)

        heavy = StepFunction2D(rng.exponential(size=(2 ** N, 2 ** N)) ** 3)
        heavy = heavy / lp_norm(heavy, 1)
        threshold = 1.0
        decomposition = fiber_cz(heavy, threshold)
        record("cz_vanishing", trial, vanishing_residual(F, heavy, threshold, decomposition),
               TOLERANCES["vanishing"] * _scale(F, heavy))

        family = build_mollifiers(L)
        record("symbol_decomposition", trial,
               decomposition_identity_residual(random_band_limited(rng, L), random_band_limited(rng, L), family),
               TOLERANCES["symbol_identity"])

        functions = [random_step_function3d(rng, N3) for _ in range(8)]
        tree3 = random_tree3d(rng, N3)
        record("telescoping_3d", trial, telescoping3d_residual(tree3, functions, FormTable3D(functions)),
               identity * _scale(*functions))

    for name, value in support_identity_residuals(build_mollifiers(L)).items():
        record(f"support_{name}", 0, value, TOLERANCES["lattice"])

    for n in range(1, N + 1):
        F, G = counterexample_linfty_lq(n, n)
        expected = np.zeros((2 ** n, 2 ** n))
        expected[:1, :] = n
        record("counterexample_exact", n, float(np.max(np.abs(t_d(F, G).values - expected))), 0.0)

    frame = pd.DataFrame(rows, columns=SUITE_COLUMNS)
    failed = int((~frame["passed"]).sum())
    logger.info("[恒等式] %d 件中 %d 件失敗", len(frame), failed)
    if progress_callback:
        progress_callback("恒等式の確認が完了しました", 1.0)
    return frame
