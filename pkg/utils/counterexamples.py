"""端点での反例モジュール

ラーデマッハー関数を使った二つの構成で、T_d が L^∞ × L^q → L^{q,∞} および
L^∞ × L^∞ → L^∞ で有界にならないことを数値で確認する。
"""
import logging
import math
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from utils.dyadic_core import StepFunction2D, lp_norm, rademacher, weak_lp
from utils.errors import ExponentError, ScaleRangeError
from utils.twisted_paraproduct import t_d

logger = logging.getLogger(__name__)


def counterexample_linfty_lq(n: int, N: int) -> Tuple[StepFunction2D, StepFunction2D]:
    """
    第一の反例

    G(x,y) = 1_{[0,2^{-n})}(x) Σ_{k=0}^{n−1} R_{k+1}(y)
    F(x,y) = 2R_j(y) − R_{j+1}(y)（x ∈ [2^{-j}, 2^{-j+1}), j = 1..n−1）
           = R_n(y)（x ∈ [0, 2^{-n+1})）

    x ∈ [0,2^{-n}) では (E_k^{(1)}F)(x,y) = R_{k+1}(y) となり、
    T_d(F,G) = n·1_{[0,2^{-n})×[0,1)} が成り立つ。

    Args:
        n: 1 ≤ n ≤ N
        N: 解像度

    Returns:
        (F, G)

    Raises:
        ScaleRangeError: n が範囲外の場合
    """
    if not 1 <= n <= N:
        raise ScaleRangeError(f"第一の反例には 1 ≤ n ≤ N が必要です: n={n}, N={N}")
    size = 2 ** N
    R = {k: rademacher(k, N).values for k in range(1, n + 1)}
    F = np.zeros((size, size))
    for j in range(1, n):
        rows = slice(size >> j, size >> (j - 1))
        F[rows, :] = 2.0 * R[j] - R[j + 1]
    F[: size >> (n - 1), :] = R[n]
    G = np.zeros((size, size))
    G[: size >> n, :] = sum(R[k + 1] for k in range(n))
    return StepFunction2D(F), StepFunction2D(G)


def counterexample_linfty_linfty(n: int, N: int) -> Tuple[StepFunction2D, StepFunction2D]:
    """
    第二の反例

    F(x,y) = 1（x ∈ ∪_{j=0}^{n−1}[2^{-2j-1}, 2^{-2j})）、G(x,y) = F(y,x)

    Raises:
        ScaleRangeError: 2n > N または n < 1 の場合
    """
    if not (n >= 1 and 2 * n <= N):
        raise ScaleRangeError(f"第二の反例には 1 ≤ 2n ≤ N が必要です: n={n}, N={N}")
    size = 2 ** N
    F = np.zeros((size, size))
    for j in range(n):
        F[size >> (2 * j + 1): size >> (2 * j), :] = 1.0
    F_step = StepFunction2D(F)
    return F_step, F_step.transpose()


def corner_value(n: int, N: int) -> float:
    """第二の反例で [0,2^{-2n})² 上の T_d(F,G) の値（その正方形上で一定）"""
    F, G = counterexample_linfty_linfty(n, N)
    corner = t_d(F, G).values[: 2 ** (N - 2 * n), : 2 ** (N - 2 * n)]
    return float(corner[0, 0])


def growth_report(n_max: int, q: float, N: Optional[int] = None) -> pd.DataFrame:
    """
    第一の反例による比 ‖T_d(F,G)‖_{L^{q,∞}} / (‖F‖_∞ ‖G‖_q) の表

    Args:
        n_max: n = 1..n_max
        q: 1 ≤ q < ∞
        N: 解像度（省略時は各 n で N = n）

    Returns:
        列 n, N, weak_norm, norm_F, norm_G, ratio, ratio_over_sqrt_n の DataFrame

    Raises:
        ExponentError: q が [1, ∞) にない場合
        ScaleRangeError: N < n_max の場合
    """
    if not 1.0 <= q < math.inf:
        raise ExponentError(f"q は 1 ≤ q < ∞ である必要があります: {q}")
    if N is not None and N < n_max:
        raise ScaleRangeError(f"解像度 N={N} が n_max={n_max} より小さいです。")
    rows = []
    for n in range(1, n_max + 1):
        resolution = n if N is None else N
        F, G = counterexample_linfty_lq(n, resolution)
        output = t_d(F, G)
        weak = weak_lp(output, q)
        norm_F = lp_norm(F, math.inf)
        norm_G = lp_norm(G, q)
        ratio = weak / (norm_F * norm_G)
        rows.append({
            "n": n,
            "N": resolution,
            "weak_norm": weak,
            "norm_F": norm_F,
            "norm_G": norm_G,
            "ratio": ratio,
            "ratio_over_sqrt_n": ratio / math.sqrt(n),
        })
    logger.info("[反例] q=%g, n=1..%d の比を計算しました", q, n_max)
    return pd.DataFrame(rows)


def khintchine_constants(n: int, q: float) -> pd.DataFrame:
    """
    ヒンチンの不等式の定数を全符号パターンの列挙で計算

    m = 1..n について (E|Σ_{k=1}^{m} ε_k|^q)^{1/q} と、それを √m で割った値を返す。
    ラーデマッハー関数 R_1..R_m の値の組はすべての符号パターンを等確率でとるので、
    これは ‖Σ R_k‖_q に一致する。

    Raises:
        ExponentError: q ≤ 0 の場合
        ScaleRangeError: n が 1..20 の外の場合
    """
    if not q > 0:
        raise ExponentError(f"q は正である必要があります: {q}")
    if not 1 <= n <= 20:
        raise ScaleRangeError(f"列挙は 1 ≤ n ≤ 20 に限ります: {n}")
    rows = []
    for m in range(1, n + 1):
        patterns = np.arange(2 ** m)[:, None] >> np.arange(m)[None, :]
        signs = 1.0 - 2.0 * (patterns & 1)
        sums = np.abs(signs.sum(axis=1))
        moment = float(np.mean(sums ** q) ** (1.0 / q))
        rows.append({"m": m, "moment": moment, "ratio": moment / math.sqrt(m)})
    return pd.DataFrame(rows, columns=["m", "moment", "ratio"])
