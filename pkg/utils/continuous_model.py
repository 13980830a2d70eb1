"""連続モデル（周期格子上のフーリエ乗数）モジュール

実数直線を 2^L 点の周期格子 [0,1) で置き換え、周波数 ξ ∈ {−2^{L−1}, …, 2^{L−1}−1} 上の
記号として φ̂_k, ψ̂_k, 台地関数 φ̂_a, ϑ̂_a, ρ̂_a, Ψ̂_l を扱う。
スケールのずれ a は 0.1 刻みに限り、整数の十分位 (tenths) で表すことで
台地の 1 / 0 の値と台の恒等式が格子上で厳密に成り立つ。
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import fft

from config import TOLERANCES
from utils.dyadic_core import block_average, resolution_of
from utils.errors import NormalizationError, NyquistError, ParameterRangeError, ResolutionError

logger = logging.getLogger(__name__)

# 台地関数の境界（10·log2|ξ| の値）: |ξ| ≤ 2^{-0.6} で 1、|ξ| ≥ 2^{-0.4} で 0
PLATEAU_INNER = -6
PLATEAU_OUTER = -4

# ρ̂ の定義に現れるずれ（十分位）
RHO_OUTER_SHIFT = 6
RHO_INNER_SHIFT = 5

# b の範囲（十分位）と l の周期
SHIFT_LIMIT = 20
SPARSE_PERIOD = 10

AVERAGING_KINDS = ("gaussian", "mean_zero")


@dataclass(frozen=True)
class PeriodicGrid1D:
    """[0,1) 上の 2^L 点の周期格子"""
    L: int

    def __post_init__(self):
        if self.L < 1:
            raise ResolutionError(f"L は 1 以上である必要があります: {self.L}")

    @property
    def size(self) -> int:
        return 2 ** self.L

    @property
    def frequencies(self) -> np.ndarray:
        return fft.fftfreq(self.size, 1.0 / self.size)

    def transform(self, samples: np.ndarray, axis: int = -1) -> np.ndarray:
        return fft.fft(samples, axis=axis)

    def inverse(self, coefficients: np.ndarray, axis: int = -1) -> np.ndarray:
        return fft.ifft(coefficients, axis=axis)


def _smootherstep(w: np.ndarray) -> np.ndarray:
    return w * w * w * (w * (6.0 * w - 15.0) + 10.0)


def _log2_abs(frequencies: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log2(np.abs(np.asarray(frequencies, dtype=float)))


def plateau_symbol(frequencies: np.ndarray, tenths: int) -> np.ndarray:
    """
    台地関数 φ̂(2^{-tenths/10} ξ)

    2 の冪の周波数では 10·log2|ξ| が整数になり、境界の判定は丸め誤差なく決まる。
    """
    u = 10.0 * _log2_abs(frequencies) - tenths
    w = np.clip((u - PLATEAU_INNER) / (PLATEAU_OUTER - PLATEAU_INNER), 0.0, 1.0)
    return 1.0 - _smootherstep(w)


def bump_symbol(frequencies: np.ndarray, k: int) -> np.ndarray:
    """ψ̂(2^{-k}ξ)。ψ̂(η) = (1 − t²)³, t = log2|η|（|t| < 1）、それ以外 0"""
    t = _log2_abs(frequencies) - k
    inside = np.abs(t) < 1.0
    values = np.zeros_like(t)
    values[inside] = (1.0 - t[inside] ** 2) ** 3
    return values


def bump_log_derivative(frequencies: np.ndarray, k: int) -> np.ndarray:
    """η·(d/dη)ψ̂(2^{-k}η)"""
    t = _log2_abs(frequencies) - k
    inside = np.abs(t) < 1.0
    values = np.zeros_like(t)
    values[inside] = -6.0 * t[inside] * (1.0 - t[inside] ** 2) ** 2 / math.log(2.0)
    return values


def averaging_symbol(frequencies: np.ndarray, k: int, kind: str = "gaussian") -> np.ndarray:
    """
    φ̂_k(ξ) = φ̂(2^{-k}ξ)

    gaussian: φ̂(s) = exp(−πs²)（∫φ = 1）
    mean_zero: φ̂(s) = eπs² exp(−πs²)（∫φ = 0、最大値 1）
    """
    s = np.asarray(frequencies, dtype=float) * 2.0 ** -k
    if kind == "gaussian":
        return np.exp(-math.pi * s ** 2)
    if kind == "mean_zero":
        return math.pi * s ** 2 * np.exp(-math.pi * s ** 2) * math.e
    raise ParameterRangeError(f"未知の平均化記号です: {kind}")


def _tenths(a: float) -> int:
    scaled = a * 10.0
    rounded = int(round(scaled))
    if abs(scaled - rounded) > 1e-9:
        raise ParameterRangeError(f"スケールのずれは 0.1 刻みである必要があります: {a}")
    return rounded


@dataclass(frozen=True)
class MollifierFamily:
    """格子上で標本化した記号の族"""
    grid: PeriodicGrid1D
    k_range: Tuple[int, ...]
    averaging: str = "gaussian"

    @lru_cache(maxsize=None)
    def _frozen(self, name: str, parameter: int) -> np.ndarray:
        frequencies = self.grid.frequencies
        if name == "averaging":
            values = averaging_symbol(frequencies, parameter, self.averaging)
        elif name == "psi":
            values = bump_symbol(frequencies, parameter)
        elif name == "plateau":
            values = plateau_symbol(frequencies, parameter)
        elif name == "Psi":
            values = np.zeros(self.grid.size)
            for k in self.k_range:
                if k % SPARSE_PERIOD == parameter:
                    values = values + bump_symbol(frequencies, k)
        else:
            raise ParameterRangeError(f"未知の記号です: {name}")
        values = np.asarray(values, dtype=float)
        values.setflags(write=False)
        return values

    def phi(self, k: int) -> np.ndarray:
        """φ̂_k"""
        return self._frozen("averaging", int(k))

    def psi(self, k: int) -> np.ndarray:
        """ψ̂_k"""
        return self._frozen("psi", int(k))

    def plateau(self, a: float) -> np.ndarray:
        """φ̂_a（台地関数）"""
        return self._frozen("plateau", _tenths(a))

    def theta(self, a: float) -> np.ndarray:
        """ϑ̂_a = φ̂_{a+1} − φ̂_a"""
        t = _tenths(a)
        return self._frozen("plateau", t + 10) - self._frozen("plateau", t)

    def rho(self, a: float) -> np.ndarray:
        """ρ̂_a(ξ) = φ̂(2^{-a-0.6}ξ) − φ̂(2^{-a-0.5}ξ)"""
        t = _tenths(a)
        return self._frozen("plateau", t + RHO_OUTER_SHIFT) - self._frozen("plateau", t + RHO_INNER_SHIFT)

    def Psi(self, l: int) -> np.ndarray:
        """Ψ̂_l = Σ_{k∈K, k≡l (mod 10)} ψ̂_k"""
        _check_sparse_index(l)
        return self._frozen("Psi", int(l))

    @property
    def averaging_integral(self) -> float:
        """∫φ = φ̂(0)"""
        return float(averaging_symbol(np.zeros(1), 0, self.averaging)[0])


def build_mollifiers(L: int, k_range: Optional[Sequence[int]] = None, averaging: str = "gaussian") -> MollifierFamily:
    """
    記号の族を作成

    Args:
        L: 格子の大きさ 2^L
        k_range: スケールの範囲（既定 0..L−3）
        averaging: φ の種類（"gaussian" または "mean_zero"）

    Returns:
        MollifierFamily

    Raises:
        NyquistError: ψ̂_k の台 |ξ| ≤ 2^{k+1} がナイキスト周波数 2^{L−1} に届く場合
    """
    grid = PeriodicGrid1D(L)
    ks = tuple(range(0, L - 2)) if k_range is None else tuple(int(k) for k in k_range)
    if not ks:
        raise ParameterRangeError("スケールの範囲が空です。")
    if averaging not in AVERAGING_KINDS:
        raise ParameterRangeError(f"未知の平均化記号です: {averaging}")
    for k in ks:
        if not 2 ** (k + 1) < 2 ** (L - 1):
            raise NyquistError(f"スケール k={k} は格子 L={L} のナイキスト周波数を超えます。")
    logger.debug("[連続モデル] L=%d, k=%s, φ=%s", L, ks, averaging)
    return MollifierFamily(grid, ks, averaging)


def multiplier_apply(f: np.ndarray, symbol: np.ndarray, axis: int = 0) -> np.ndarray:
    """
    フーリエ乗数 P f = ifft(symbol · fft(f))（指定した軸について）

    記号は |ξ| の偶関数なので結果は実数になる。

    Raises:
        ResolutionError: 記号の長さと軸の長さが一致しない場合
    """
    samples = np.asarray(f, dtype=float)
    symbol = np.asarray(symbol, dtype=float)
    if symbol.ndim != 1 or symbol.shape[0] != samples.shape[axis]:
        raise ResolutionError(f"記号の長さ {symbol.shape} が標本の軸の長さ {samples.shape[axis]} と一致しません。")
    shape = [1] * samples.ndim
    shape[axis] = symbol.shape[0]
    coefficients = fft.fft(samples, axis=axis) * symbol.reshape(shape)
    return np.real(fft.ifft(coefficients, axis=axis))


def _check_shift(b: float) -> int:
    t = _tenths(b)
    if abs(t) > SHIFT_LIMIT:
        raise ParameterRangeError(f"b は −2.0..2.0 の範囲である必要があります: {b}")
    return t


def _check_sparse_index(l: int) -> None:
    if not 0 <= int(l) < SPARSE_PERIOD:
        raise ParameterRangeError(f"l は 0..9 である必要があります: {l}")


def _check_samples(family: MollifierFamily, *arrays: np.ndarray) -> None:
    n = family.grid.size
    for array in arrays:
        if np.shape(array) != (n, n):
            raise ResolutionError(f"標本の形状 {np.shape(array)} が格子 ({n}, {n}) と一致しません。")


def t_c(F: np.ndarray, G: np.ndarray, family: MollifierFamily) -> np.ndarray:
    """
    連続ツイステッド・パラプロダクト Σ_{k∈K} (P_{φ_k}^{(1)}F)(P_{ψ_k}^{(2)}G)
    """
    _check_samples(family, F, G)
    total = np.zeros(np.shape(F))
    for k in family.k_range:
        total += multiplier_apply(F, family.phi(k), axis=0) * multiplier_apply(G, family.psi(k), axis=1)
    return total


def t_phi_theta_b(F: np.ndarray, G: np.ndarray, b: float, family: MollifierFamily) -> np.ndarray:
    """T_{φ,ϑ,b}(F,G) = Σ_{k∈K} (P_{φ_k}^{(1)}F)(P_{ϑ_{k+b}}^{(2)}G)"""
    _check_samples(family, F, G)
    t = _check_shift(b)
    total = np.zeros(np.shape(F))
    for k in family.k_range:
        total += multiplier_apply(F, family.phi(k), axis=0) * multiplier_apply(G, family.theta((10 * k + t) / 10), axis=1)
    return total


def _sparse_scales(family: MollifierFamily, l: int):
    return [k for k in family.k_range if k % SPARSE_PERIOD == l]


def sparse_paraproduct(F: np.ndarray, G: np.ndarray, b: float, l: int, family: MollifierFamily) -> np.ndarray:
    """
    間引いたパラプロダクト Σ_{j: 10j+l∈K} (P_{φ_{10j+l}}^{(1)}F)(P_{ρ_{10j+l+b}}^{(2)}G)

    Raises:
        ParameterRangeError: b が 0.1 刻みの −2.0..2.0 にない、または l が 0..9 にない場合
    """
    _check_samples(family, F, G)
    t = _check_shift(b)
    _check_sparse_index(l)
    total = np.zeros(np.shape(F))
    for k in _sparse_scales(family, l):
        total += multiplier_apply(F, family.phi(k), axis=0) * multiplier_apply(G, family.rho((10 * k + t) / 10), axis=1)
    return total


def g_tilde(G: np.ndarray, b: float, l: int, family: MollifierFamily) -> np.ndarray:
    """G̃_{b,l} = Σ_{j: 10j+l∈K} P_{ρ_{10j+l+b}}^{(2)}G"""
    t = _check_shift(b)
    _check_sparse_index(l)
    total = np.zeros(np.shape(G))
    for k in _sparse_scales(family, l):
        total += multiplier_apply(G, family.rho((10 * k + t) / 10), axis=1)
    return total


def sparse_reduction_residual(G: np.ndarray, b: float, l: int, family: MollifierFamily) -> float:
    """
    max_k |P_{ϑ_{k+b}}^{(2)}G̃_{b,l} − (k ≡ l なら P_{ρ_{k+b}}^{(2)}G、それ以外 0)|
    """
    t = _check_shift(b)
    reduced = g_tilde(G, b, l, family)
    worst = 0.0
    for k in family.k_range:
        a = (10 * k + t) / 10
        actual = multiplier_apply(reduced, family.theta(a), axis=1)
        expected = multiplier_apply(G, family.rho(a), axis=1) if k % SPARSE_PERIOD == l else 0.0
        worst = max(worst, float(np.max(np.abs(actual - expected))))
    return worst


def decomposition_identity_residual(F: np.ndarray, G: np.ndarray, family: MollifierFamily) -> float:
    """
    max |T_c(F,G) − Σ_{l=0}^{9} Σ_{i=−20}^{20} T^{10ℤ}_{φ,ρ,0.1i,l}(F, P_{Ψ_l}^{(2)}G)|
    """
    _check_samples(family, F, G)
    smoothed = {k: multiplier_apply(F, family.phi(k), axis=0) for k in family.k_range}
    total = np.zeros(np.shape(F))
    for l in range(SPARSE_PERIOD):
        scales = _sparse_scales(family, l)
        if not scales:
            continue
        projected = multiplier_apply(G, family.Psi(l), axis=1)
        for i in range(-SHIFT_LIMIT, SHIFT_LIMIT + 1):
            for k in scales:
                total += smoothed[k] * multiplier_apply(projected, family.rho((10 * k + i) / 10), axis=1)
    residual = float(np.max(np.abs(t_c(F, G, family) - total)))
    logger.debug("[記号恒等式] 残差 %.3e", residual)
    return residual


def dyadic_average_samples(f: np.ndarray, k: int, axis: int = 0) -> np.ndarray:
    """周期格子の標本に対するダイアディック平均 E_k"""
    return block_average(np.asarray(f, dtype=float), axis, k)


def jsw_square_function(f: np.ndarray, family: MollifierFamily, k_range: Optional[Sequence[int]] = None,
                        axis: int = 0) -> np.ndarray:
    """
    S_{JSW,φ} f = (Σ_k |P_{φ_k}f − E_k f|²)^{1/2}

    Args:
        f: 周期格子の標本（一次元、または二次元で axis を指定）
        family: 記号の族（∫φ = 1 であること）
        k_range: スケール（既定は family.k_range、0..L の範囲）

    Raises:
        NormalizationError: ∫φ ≠ 1 の場合
    """
    if not math.isclose(family.averaging_integral, 1.0, abs_tol=TOLERANCES["oracle"]):
        raise NormalizationError(f"∫φ = {family.averaging_integral} ですが 1 である必要があります。")
    samples = np.asarray(f, dtype=float)
    L = resolution_of(samples.shape[axis])
    ks = family.k_range if k_range is None else tuple(k_range)
    total = np.zeros_like(samples)
    for k in ks:
        if not 0 <= k <= L:
            raise ParameterRangeError(f"スケール k={k} が 0..{L} の外です。")
        total += (multiplier_apply(samples, family.phi(k), axis=axis) - dyadic_average_samples(samples, k, axis)) ** 2
    return np.sqrt(total)


def t_aux(F: np.ndarray, G: np.ndarray, b: float, family: MollifierFamily) -> np.ndarray:
    """T_{aux,b}(F,G) = Σ_{k∈K} (E_k^{(1)}F)(P_{ϑ_{k+b}}^{(2)}G)"""
    _check_samples(family, F, G)
    t = _check_shift(b)
    total = np.zeros(np.shape(F))
    for k in family.k_range:
        total += dyadic_average_samples(F, k, axis=0) * multiplier_apply(G, family.theta((10 * k + t) / 10), axis=1)
    return total


@dataclass(frozen=True)
class PointwiseBound:
    """点ごとの不等式 lhs ≤ rhs"""
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)

    @property
    def max_violation(self) -> float:
        return float(np.max(self.lhs - self.rhs))


def difference_bound(F: np.ndarray, G: np.ndarray, b: float, family: MollifierFamily) -> PointwiseBound:
    """
    |T_{φ,ϑ,b}(F,G) − T_{aux,b}(F,G)| ≤ S^{(1)}_{JSW}F · (Σ_k |P_{ϑ_{k+b}}^{(2)}G|²)^{1/2}
    """
    t = _check_shift(b)
    lhs = np.abs(t_phi_theta_b(F, G, b, family) - t_aux(F, G, b, family))
    square = np.zeros(np.shape(G))
    for k in family.k_range:
        square += multiplier_apply(G, family.theta((10 * k + t) / 10), axis=1) ** 2
    rhs = jsw_square_function(F, family, axis=0) * np.sqrt(square)
    return PointwiseBound(lhs, rhs)


def square_function_domination(F: np.ndarray, G: np.ndarray, family: MollifierFamily) -> PointwiseBound:
    """
    ∫φ = 0 の場合の |T_c(F,G)| ≤ (Σ_k |P_{φ_k}^{(1)}F|²)^{1/2} (Σ_k |P_{ψ_k}^{(2)}G|²)^{1/2}

    Raises:
        NormalizationError: ∫φ ≠ 0 の場合
    """
    if abs(family.averaging_integral) > TOLERANCES["oracle"]:
        raise NormalizationError(f"∫φ = {family.averaging_integral} ですが 0 である必要があります。")
    first = np.zeros(np.shape(F))
    second = np.zeros(np.shape(G))
    for k in family.k_range:
        first += multiplier_apply(F, family.phi(k), axis=0) ** 2
        second += multiplier_apply(G, family.psi(k), axis=1) ** 2
    return PointwiseBound(np.abs(t_c(F, G, family)), np.sqrt(first) * np.sqrt(second))


def psi_symbol_bounds(family: MollifierFamily) -> pd.DataFrame:
    """
    各 l について max |Ψ̂_l(η)| と max |η Ψ̂_l'(η)| を格子上で計算

    Returns:
        列 l, max_symbol, max_log_derivative の DataFrame
    """
    frequencies = family.grid.frequencies
    rows = []
    for l in range(SPARSE_PERIOD):
        derivative = np.zeros(family.grid.size)
        for k in _sparse_scales(family, l):
            derivative += bump_log_derivative(frequencies, k)
        rows.append({
            "l": l,
            "max_symbol": float(np.max(np.abs(family.Psi(l)))),
            "max_log_derivative": float(np.max(np.abs(derivative))),
        })
    return pd.DataFrame(rows, columns=["l", "max_symbol", "max_log_derivative"])


def random_band_limited(rng: np.random.Generator, L: int, band: Optional[int] = None) -> np.ndarray:
    """
    周波数 |ξ| ≤ band の成分だけを持つ乱数の二次元標本

    Args:
        rng: 乱数生成器
        L: 格子の大きさ 2^L
        band: 帯域（既定 2^{L−2}）
    """
    grid = PeriodicGrid1D(L)
    limit = 2 ** (L - 2) if band is None else band
    mask = (np.abs(grid.frequencies) <= limit).astype(float)
    samples = rng.standard_normal((grid.size, grid.size))
    return multiplier_apply(multiplier_apply(samples, mask, axis=0), mask, axis=1)


def jsw_ratio_report(L_values: Sequence[int], trials: int, p: float = 2.0, seed: int = 0) -> pd.DataFrame:
    """
    乱数の一次元標本 f について ‖S_{JSW} f‖_p / ‖f‖_p の最大値を L ごとに記録

    スケールは 0..L−1 に限る。k = L では E_k f = f となり、φ_k の台が
    標本化のナイキスト周波数を越えるので、その項は折り返し誤差しか測らない。
    """
    children = np.random.SeedSequence(seed).spawn(len(L_values))
    rows = []
    for L, child in zip(L_values, children):
        rng = np.random.default_rng(child)
        family = build_mollifiers(L)
        best = 0.0
        for _ in range(trials):
            f = rng.standard_normal(2 ** L)
            square = jsw_square_function(f, family, range(0, L))
            ratio = float(np.mean(square ** p) ** (1 / p) / np.mean(np.abs(f) ** p) ** (1 / p))
            best = max(best, ratio)
        rows.append({"L": L, "max_ratio": best})
    return pd.DataFrame(rows, columns=["L", "max_ratio"])


def rho_window_sum(family: MollifierFamily, k: int) -> np.ndarray:
    """Σ_{i=−20}^{20} ρ̂_{k+0.1i}"""
    total = np.zeros(family.grid.size)
    for i in range(-SHIFT_LIMIT, SHIFT_LIMIT + 1):
        total = total + family.rho((10 * k + i) / 10)
    return total


def support_identity_residuals(family: MollifierFamily) -> Dict[str, float]:
    """
    台の恒等式の格子上での最大誤差

    - ϑ̂_a ρ̂_a = ρ̂_a（a = k + 0.1i）
    - supp ψ̂_k 上で Σ_i ρ̂_{k+0.1i} = 1
    - |k' − k| ≥ 10 のとき supp ψ̂_{k'} 上で Σ_i ρ̂_{k+0.1i} = 0
    """
    L = family.grid.L
    lattice_scales = [k for k in range(0, L - 1) if 2 ** (k + 1) < 2 ** (L - 1)]
    theta_rho = 0.0
    for k in family.k_range:
        for i in range(-SHIFT_LIMIT, SHIFT_LIMIT + 1):
            a = (10 * k + i) / 10
            rho = family.rho(a)
            theta_rho = max(theta_rho, float(np.max(np.abs(family.theta(a) * rho - rho))))
    on_support = 0.0
    for k in family.k_range:
        support = family.psi(k) > 0
        if support.any():
            on_support = max(on_support, float(np.max(np.abs(rho_window_sum(family, k)[support] - 1.0))))
    far = 0.0
    for k in range(-SPARSE_PERIOD - 2, L + SPARSE_PERIOD + 2):
        window = None
        for other in lattice_scales:
            if abs(other - k) < SPARSE_PERIOD:
                continue
            support = bump_symbol(family.grid.frequencies, other) > 0
            if not support.any():
                continue
            window = rho_window_sum(family, k) if window is None else window
            far = max(far, float(np.max(np.abs(window[support]))))
    return {"theta_rho": theta_rho, "rho_sum_on_support": on_support, "rho_sum_far": far}
