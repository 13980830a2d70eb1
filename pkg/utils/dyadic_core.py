"""ダイアディック格子・ステップ関数・ハール系モジュール

単位区間 [0,1) と単位正方形 [0,1)^2 上の解像度 2^-N のステップ関数を扱う。
配列の添字 (i, j) はセル [i·2^-N,(i+1)·2^-N) × [j·2^-N,(j+1)·2^-N) を表し、
配列の第 0 軸が変数 x（第 1 変数）、第 1 軸が変数 y（第 2 変数）に対応する。
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import ResolutionError, ScaleRangeError


def resolution_of(size: int) -> int:
    """
    一辺のセル数から解像度 N を求める

    Args:
        size: 一辺のセル数（2 の冪）

    Returns:
        N（size = 2^N）

    Raises:
        ResolutionError: size が 2 の冪でない場合
    """
    if size < 1 or size & (size - 1):
        raise ResolutionError(f"格子のサイズは 2 の冪である必要があります: {size}")
    return size.bit_length() - 1


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """ダイアディック区間 [l·2^-k, (l+1)·2^-k) ⊂ [0,1)"""
    scale: int
    index: int

    def __post_init__(self):
        if self.scale < 0:
            raise ScaleRangeError(f"スケールは 0 以上である必要があります: {self.scale}")
        if not 0 <= self.index < 2 ** self.scale:
            raise ScaleRangeError(f"添字が範囲外です: scale={self.scale}, index={self.index}")

    @property
    def length(self) -> float:
        return 2.0 ** -self.scale

    @property
    def measure(self) -> float:
        return self.length

    @property
    def left(self) -> "DyadicInterval":
        return DyadicInterval(self.scale + 1, 2 * self.index)

    @property
    def right(self) -> "DyadicInterval":
        return DyadicInterval(self.scale + 1, 2 * self.index + 1)

    def children(self) -> Tuple["DyadicInterval", "DyadicInterval"]:
        return (self.left, self.right)

    def parent(self) -> Optional["DyadicInterval"]:
        if self.scale == 0:
            return None
        return DyadicInterval(self.scale - 1, self.index // 2)

    def contains(self, other: "DyadicInterval") -> bool:
        if other.scale < self.scale:
            return False
        return other.index >> (other.scale - self.scale) == self.index

    def cell_slice(self, N: int) -> slice:
        """解像度 N の格子上でこの区間が占めるセルの範囲"""
        if self.scale > N:
            raise ResolutionError(f"区間のスケール {self.scale} が解像度 N={N} を超えています。")
        width = 2 ** (N - self.scale)
        return slice(self.index * width, (self.index + 1) * width)


@dataclass(frozen=True, order=True)
class DyadicSquare:
    """ダイアディック正方形 I × J（|I| = |J|）"""
    scale: int
    i: int
    j: int

    def __post_init__(self):
        if self.scale < 0:
            raise ScaleRangeError(f"スケールは 0 以上である必要があります: {self.scale}")
        side = 2 ** self.scale
        if not (0 <= self.i < side and 0 <= self.j < side):
            raise ScaleRangeError(f"添字が範囲外です: {self}")

    @classmethod
    def from_intervals(cls, I: DyadicInterval, J: DyadicInterval) -> "DyadicSquare":
        if I.scale != J.scale:
            raise ScaleRangeError(f"正方形の二辺のスケールが異なります: {I.scale} != {J.scale}")
        return cls(I.scale, I.index, J.index)

    @property
    def I(self) -> DyadicInterval:
        return DyadicInterval(self.scale, self.i)

    @property
    def J(self) -> DyadicInterval:
        return DyadicInterval(self.scale, self.j)

    @property
    def measure(self) -> float:
        return 4.0 ** -self.scale

    def children(self) -> Tuple["DyadicSquare", ...]:
        k = self.scale + 1
        return tuple(
            DyadicSquare(k, 2 * self.i + a, 2 * self.j + b)
            for a in (0, 1) for b in (0, 1)
        )

    def parent(self) -> Optional["DyadicSquare"]:
        if self.scale == 0:
            return None
        return DyadicSquare(self.scale - 1, self.i // 2, self.j // 2)

    def contains(self, other: "DyadicSquare") -> bool:
        if other.scale < self.scale:
            return False
        shift = other.scale - self.scale
        return (other.i >> shift) == self.i and (other.j >> shift) == self.j

    def cell_slices(self, N: int) -> Tuple[slice, slice]:
        return (self.I.cell_slice(N), self.J.cell_slice(N))


def squares_at_scale(k: int) -> Iterator[DyadicSquare]:
    """スケール k のすべての正方形（i, j の辞書順）"""
    side = 2 ** k
    for i in range(side):
        for j in range(side):
            yield DyadicSquare(k, i, j)


UNIT_SQUARE = DyadicSquare(0, 0, 0)


class _StepFunction:
    """ステップ関数の共通部分（値は読み取り専用の numpy 配列）"""
    ndim = 0

    __slots__ = ("values",)

    def __init__(self, values):
        array = np.array(values, dtype=float)
        if array.ndim != self.ndim:
            raise ResolutionError(f"{type(self).__name__} には {self.ndim} 次元配列が必要です: shape={array.shape}")
        sizes = set(array.shape)
        if len(sizes) != 1:
            raise ResolutionError(f"格子は各辺が同じ長さである必要があります: shape={array.shape}")
        resolution_of(array.shape[0])
        if not np.all(np.isfinite(array)):
            raise ValueError("ステップ関数の値に有限でない値が含まれています。")
        array.setflags(write=False)
        object.__setattr__(self, "values", array)

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} は不変です。")

    @property
    def N(self) -> int:
        return resolution_of(self.values.shape[0])

    @property
    def cell_measure(self) -> float:
        return 2.0 ** (-self.N * self.ndim)

    @classmethod
    def constant(cls, c: float, N: int):
        return cls(np.full((2 ** N,) * cls.ndim, float(c)))

    @classmethod
    def zeros(cls, N: int):
        return cls.constant(0.0, N)

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0))

    def _coerce(self, other):
        if isinstance(other, _StepFunction):
            if type(other) is not type(self):
                raise ResolutionError("次元の異なるステップ関数は演算できません。")
            if other.values.shape != self.values.shape:
                raise ResolutionError(f"解像度が一致しません: N={self.N}, N={other.N}")
            return other.values
        return other

    def __add__(self, other):
        return type(self)(self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return type(self)(self.values - self._coerce(other))

    def __rsub__(self, other):
        return type(self)(self._coerce(other) - self.values)

    def __mul__(self, other):
        return type(self)(self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return type(self)(self.values / self._coerce(other))

    def __neg__(self):
        return type(self)(-self.values)

    def __abs__(self):
        return type(self)(np.abs(self.values))

    def __repr__(self):
        return f"{type(self).__name__}(N={self.N})"


class StepFunction1D(_StepFunction):
    """[0,1) 上の解像度 2^-N のステップ関数"""
    ndim = 1


class StepFunction2D(_StepFunction):
    """[0,1)^2 上の解像度 2^-N のステップ関数"""
    ndim = 2

    def transpose(self) -> "StepFunction2D":
        """(x, y) ↦ F(y, x)"""
        return StepFunction2D(self.values.T)

    def block(self, Q: DyadicSquare) -> np.ndarray:
        rows, cols = Q.cell_slices(self.N)
        return self.values[rows, cols]

    @classmethod
    def from_product(cls, a: Sequence[float], b: Sequence[float]) -> "StepFunction2D":
        """F(x, y) = a(x) b(y)"""
        return cls(np.outer(np.asarray(a, dtype=float), np.asarray(b, dtype=float)))

    @classmethod
    def indicator(cls, N: int, x_range: Tuple[float, float], y_range: Tuple[float, float]) -> "StepFunction2D":
        """矩形 [x0,x1) × [y0,y1) の特性関数（端点は格子点であること）"""
        n = 2 ** N
        values = np.zeros((n, n))
        rows = slice(int(round(x_range[0] * n)), int(round(x_range[1] * n)))
        cols = slice(int(round(y_range[0] * n)), int(round(y_range[1] * n)))
        values[rows, cols] = 1.0
        return cls(values)


def check_same_resolution(*functions: _StepFunction) -> int:
    """
    すべての関数の解像度が一致することを確認

    Returns:
        共通の解像度 N

    Raises:
        ResolutionError: 解像度または次元が一致しない場合
    """
    if not functions:
        raise ResolutionError("関数が指定されていません。")
    shape = functions[0].values.shape
    for function in functions[1:]:
        if function.values.shape != shape:
            raise ResolutionError(
                f"解像度が一致しません: {functions[0]!r} と {function!r}"
            )
    return functions[0].N


def block_average(values: np.ndarray, axis: int, k: int) -> np.ndarray:
    """
    配列の指定軸に沿って長さ 2^{N-k} のブロックを平均で置き換える

    Args:
        values: 各辺 2^N の配列
        axis: 配列の軸（0 始まり）
        k: スケール（0 ≤ k ≤ N）

    Returns:
        同じ形状の配列
    """
    size = values.shape[axis]
    N = resolution_of(size)
    if not 0 <= k <= N:
        raise ScaleRangeError(f"スケール k={k} が範囲 0..{N} の外です。")
    if k == N:
        return np.array(values, dtype=float)
    width = 2 ** (N - k)
    moved = np.moveaxis(values, axis, 0)
    blocks = moved.reshape((2 ** k, width) + moved.shape[1:])
    means = blocks.mean(axis=1, keepdims=True)
    expanded = np.broadcast_to(means, blocks.shape).reshape(moved.shape)
    return np.moveaxis(expanded, 0, axis).copy()


def _axis_index(F: _StepFunction, axis: int) -> int:
    if not 1 <= axis <= F.ndim:
        raise ScaleRangeError(f"変数の番号は 1..{F.ndim} で指定してください: {axis}")
    return axis - 1


def haar_scaling(I: DyadicInterval, N: int) -> StepFunction1D:
    """
    ハール・スケーリング関数 φ_I = |I|^{-1/2} 1_I

    Raises:
        ResolutionError: I のスケールが N を超える場合
    """
    if I.scale > N:
        raise ResolutionError(f"区間のスケール {I.scale} が解像度 N={N} を超えています。")
    values = np.zeros(2 ** N)
    values[I.cell_slice(N)] = I.length ** -0.5
    return StepFunction1D(values)


def haar_wavelet(I: DyadicInterval, N: int) -> StepFunction1D:
    """
    ハール・ウェーブレット ψ_I = |I|^{-1/2}(1_{I_left} − 1_{I_right})

    Raises:
        ResolutionError: I のスケールが N 以上の場合（左右半分が格子で表せない）
    """
    if I.scale >= N:
        raise ResolutionError(f"ウェーブレットには I のスケール {I.scale} < N={N} が必要です。")
    values = np.zeros(2 ** N)
    values[I.left.cell_slice(N)] = I.length ** -0.5
    values[I.right.cell_slice(N)] = -I.length ** -0.5
    return StepFunction1D(values)


def martingale_average(F: _StepFunction, axis: int, k: int):
    """
    一変数のマルチンゲール平均 E_k^{(axis)}F

    Args:
        F: ステップ関数
        axis: 平均をとる変数（1 = x, 2 = y, 3 = 第三変数）
        k: スケール（0 ≤ k ≤ N）

    Returns:
        F と同じ型のステップ関数

    Raises:
        ScaleRangeError: k が範囲外の場合
    """
    return type(F)(block_average(F.values, _axis_index(F, axis), k))


def martingale_difference(F: _StepFunction, axis: int, k: int):
    """
    マルチンゲール差分 Δ_k^{(axis)}F = E_{k+1}F − E_kF

    Raises:
        ScaleRangeError: k が 0..N−1 の外の場合
    """
    if not 0 <= k <= F.N - 1:
        raise ScaleRangeError(f"差分のスケール k={k} が範囲 0..{F.N - 1} の外です。")
    index = _axis_index(F, axis)
    return type(F)(block_average(F.values, index, k + 1) - block_average(F.values, index, k))


def integral(F: _StepFunction) -> float:
    """∫F（セル和 × セル測度、求積誤差なし）"""
    return float(F.values.sum() * F.cell_measure)


def lp_norm(F: _StepFunction, p: float) -> float:
    """
    L^p ノルム（p = ∞ では最大絶対値）

    Raises:
        ValueError: p ≤ 0 の場合
    """
    if not p > 0:
        raise ValueError(f"p は正である必要があります: {p}")
    magnitude = np.abs(F.values)
    if math.isinf(p):
        return float(magnitude.max())
    return float((np.sum(magnitude ** p) * F.cell_measure) ** (1.0 / p))


def weak_lp(F: _StepFunction, p: float) -> float:
    """
    弱 L^p 準ノルム sup_α α·|{|F| > α}|^{1/p}

    ステップ関数では α を各値 v の直下から近づけたときに上限に達するので、
    v·|{|F| ≥ v}|^{1/p} の最大値を返す。
    """
    if not p > 0:
        raise ValueError(f"p は正である必要があります: {p}")
    magnitude = np.sort(np.abs(F.values).ravel())[::-1]
    if math.isinf(p):
        return float(magnitude[0])
    counts = np.arange(1, magnitude.size + 1)
    # 同じ値が続く区間では末尾（測度が最大）だけが候補になる
    last_of_run = np.append(magnitude[1:] != magnitude[:-1], True)
    candidates = magnitude[last_of_run] * (counts[last_of_run] * F.cell_measure) ** (1.0 / p)
    return float(candidates.max())


def rademacher(k: int, N: int) -> StepFunction1D:
    """
    k 番目のラーデマッハー関数 R_k

    長さ 2^{-k+1} の各区間 J で 1_{J_left} − 1_{J_right}。
    すなわち長さ 2^{-k} のセルごとに +1, −1 を交互にとる。

    Raises:
        ScaleRangeError: k が 1..N の外の場合
    """
    if not 1 <= k <= N:
        raise ScaleRangeError(f"ラーデマッハー関数の番号 k={k} が範囲 1..{N} の外です。")
    cells = np.arange(2 ** N)
    parity = (cells >> (N - k)) & 1
    return StepFunction1D(np.where(parity == 0, 1.0, -1.0))


def dyadic_maximal_M2(F: StepFunction2D) -> StepFunction2D:
    """
    ダイアディック極大関数 M₂F = sup_Q (|Q|^{-1}∫_Q |F|²)^{1/2} 1_Q

    スケール 0..N のすべての正方形について上限をとる。
    """
    squared = F.values ** 2
    result = np.zeros_like(squared)
    for k in range(F.N + 1):
        local = block_average(block_average(squared, 0, k), 1, k)
        np.maximum(result, np.sqrt(local), out=result)
    return StepFunction2D(result)


def random_step_function(
    rng: np.random.Generator,
    N: int,
    ndim: int = 2,
    nonnegative: bool = True,
    coarse_scale: Optional[int] = None,
):
    """
    乱数によるステップ関数

    Args:
        rng: 乱数生成器
        N: 解像度
        ndim: 次元（1, 2, 3）
        nonnegative: True なら [0,1) 一様、False なら [−1,1) 一様
        coarse_scale: 指定すると 2^-coarse_scale のブロックで一定な関数にする

    Returns:
        ステップ関数
    """
    types = {1: StepFunction1D, 2: StepFunction2D, 3: _step_function_3d()}
    scale = N if coarse_scale is None else min(coarse_scale, N)
    shape = (2 ** scale,) * ndim
    values = rng.random(shape) if nonnegative else rng.uniform(-1.0, 1.0, shape)
    repeat = 2 ** (N - scale)
    for axis in range(ndim):
        values = np.repeat(values, repeat, axis=axis)
    return types[ndim](values)


def _step_function_3d():
    from utils.higher_dim import StepFunction3D
    return StepFunction3D


def all_squares(N: int, max_scale: Optional[int] = None) -> List[DyadicSquare]:
    """スケール 0..max_scale（既定 N−1）のすべての正方形"""
    top = N - 1 if max_scale is None else max_scale
    return [Q for k in range(top + 1) for Q in squares_at_scale(k)]
