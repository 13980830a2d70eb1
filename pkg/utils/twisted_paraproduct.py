"""ダイアディック・ツイステッド・パラプロダクトモジュール

T_d(F,G) = Σ_{k=0}^{N−1} (E_k^{(1)}F)(Δ_k^{(2)}G)

有限の格子ではスケールは 0..N−1 に限られ、恒等式には E₀ の境界項が明示的に残る。
"""
import logging
from typing import Optional, Sequence

import numpy as np

from utils.dyadic_core import (
    StepFunction2D,
    block_average,
    check_same_resolution,
    integral,
    martingale_average,
)
from utils.errors import ParameterRangeError, ScaleRangeError

logger = logging.getLogger(__name__)


def _average_stack(values: np.ndarray, axis: int, N: int) -> np.ndarray:
    """E_0..E_N を軸 axis について並べた配列（形状 (N+1, n, n)）"""
    return np.stack([block_average(values, axis, k) for k in range(N + 1)])


def _shifted_sum(F: StepFunction2D, G: StepFunction2D, k0: int, coefficients: Optional[Sequence[float]] = None) -> np.ndarray:
    N = check_same_resolution(F, G)
    averages_x = _average_stack(F.values, 0, N)
    averages_y = _average_stack(G.values, 1, N)
    total = np.zeros_like(F.values)
    for k in range(N):
        if not 0 <= k + k0 <= N:
            continue
        weight = 1.0 if coefficients is None else float(coefficients[k])
        if weight == 0.0:
            continue
        total += weight * averages_x[k + k0] * (averages_y[k + 1] - averages_y[k])
    return total


def t_d(F: StepFunction2D, G: StepFunction2D) -> StepFunction2D:
    """
    ツイステッド・パラプロダクト T_d(F,G)

    Args:
        F, G: 同じ解像度のステップ関数

    Returns:
        Σ_{k=0}^{N−1} (E_k^{(1)}F)(Δ_k^{(2)}G)

    Raises:
        ResolutionError: 解像度が一致しない場合
    """
    return StepFunction2D(_shifted_sum(F, G, 0))


def lambda_d(F: StepFunction2D, G: StepFunction2D, H: StepFunction2D) -> float:
    """三線形形式 Λ_d(F,G,H) = ∫ T_d(F,G) H"""
    check_same_resolution(F, G, H)
    return integral(t_d(F, G) * H)


def t_d_shifted(F: StepFunction2D, G: StepFunction2D, k0: int) -> StepFunction2D:
    """
    シフトした作用素 Σ_k (E_{k+k0}^{(1)}F)(Δ_k^{(2)}G)

    E の添字 k+k0 が 0..N の外になる項は和から除く。
    """
    return StepFunction2D(_shifted_sum(F, G, int(k0)))


def t_d_coeff(F: StepFunction2D, G: StepFunction2D, coefficients: Sequence[float]) -> StepFunction2D:
    """
    係数付きの変種 Σ_k c_k (E_k^{(1)}F)(Δ_k^{(2)}G)

    Args:
        F, G: ステップ関数
        coefficients: 長さ N の係数列（|c_k| ≤ 1）

    Raises:
        ParameterRangeError: 係数の個数が N でない、または |c_k| > 1 の場合
    """
    N = check_same_resolution(F, G)
    c = np.asarray(coefficients, dtype=float)
    if c.shape != (N,):
        raise ParameterRangeError(f"係数は {N} 個必要です: {c.shape}")
    if np.any(np.abs(c) > 1.0):
        raise ParameterRangeError(f"係数の絶対値は 1 以下である必要があります: max |c_k| = {float(np.max(np.abs(c)))}")
    return StepFunction2D(_shifted_sum(F, G, 0, c))


def coefficient_transform(G: StepFunction2D, coefficients: Sequence[float]) -> StepFunction2D:
    """
    G̃ = E₀^{(2)}G + Σ_k c_k Δ_k^{(2)}G

    Δ_k^{(2)}G̃ = c_k Δ_k^{(2)}G なので T_d(F, G̃) は係数付きの変種に一致する。
    """
    N = G.N
    c = np.asarray(coefficients, dtype=float)
    if c.shape != (N,):
        raise ParameterRangeError(f"係数は {N} 個必要です: {c.shape}")
    averages = _average_stack(G.values, 1, N)
    values = averages[0] + sum(c[k] * (averages[k + 1] - averages[k]) for k in range(N))
    return StepFunction2D(values)


def t_d_swapped(F: StepFunction2D, G: StepFunction2D) -> StepFunction2D:
    """
    Σ_{k=0}^{N−1} (Δ_k^{(1)}F)(E_{k+1}^{(2)}G)

    変数を入れ替えたシフト作用素 (T_{k0=1}(Gᵀ, Fᵀ))ᵀ として計算する。
    """
    return t_d_shifted(G.transpose(), F.transpose(), 1).transpose()


def lambda_d_dual(F: StepFunction2D, G: StepFunction2D, H: StepFunction2D) -> float:
    """∫ Σ_k (Δ_k^{(1)}F)(E_{k+1}^{(2)}G) H"""
    check_same_resolution(F, G, H)
    return integral(t_d_swapped(F, G) * H)


def _coarse_product(F: StepFunction2D, G: StepFunction2D) -> StepFunction2D:
    return martingale_average(F, 1, 0) * martingale_average(G, 2, 0)


def product_identity_residual(F: StepFunction2D, G: StepFunction2D) -> float:
    """
    積の恒等式の残差

    max |T_d(F,G) + Σ_k (Δ_k^{(1)}F)(E_{k+1}^{(2)}G) + (E₀^{(1)}F)(E₀^{(2)}G) − FG|
    """
    check_same_resolution(F, G)
    residual = t_d(F, G) + t_d_swapped(F, G) + _coarse_product(F, G) - F * G
    return float(np.max(np.abs(residual.values)))


def symmetry_residual(F: StepFunction2D, G: StepFunction2D, H: StepFunction2D) -> float:
    """
    |Λ_d(F,G,H) + Λ_dual(F,G,H) + ∫(E₀^{(1)}F)(E₀^{(2)}G)H − ∫FGH|

    (p,q,F,G) ↔ (q,p,G,F) の入れ替えを結ぶ有限格子上の恒等式。
    """
    check_same_resolution(F, G, H)
    left = lambda_d(F, G, H) + lambda_d_dual(F, G, H) + integral(_coarse_product(F, G) * H)
    return abs(left - integral(F * G * H))


def dilate_x(F: StepFunction2D, k0: int) -> StepFunction2D:
    """
    非等方的なダイアディック拡大 (DF)(x,y) = F(2^{k0}x, y)·1_{[0,2^{-k0})}(x)

    解像度 N+k0 の格子上の関数として返す（y 方向は細分するだけ）。
    """
    if k0 < 0:
        raise ScaleRangeError(f"拡大のシフト量は 0 以上である必要があります: {k0}")
    N = F.N
    size = 2 ** (N + k0)
    values = np.zeros((size, size))
    values[: 2 ** N, :] = np.repeat(F.values, 2 ** k0, axis=1)
    return StepFunction2D(values)
