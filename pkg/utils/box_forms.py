"""ガウアーズ・ボックス内積・ボックスノルム・Ξ 形式モジュール

正方形 Q = I × J 上の四重積分
    ∫∫∫∫ F1(u,v) F2(x,v) F3(u,y) F4(x,y) a(u) a(x) b(v) b(y)
はブロック行列 B_j（Q への制限）を使って
    Σ_{u,x} a_u a_x [(B1·b) B2ᵀ]_{ux} [(B3·b) B4ᵀ]_{ux}
と因数分解でき、m×m ブロックあたり O(m³) で評価できる。
同じスケールのすべての正方形は先頭の軸にまとめて一括で計算する。
"""
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from config import TOLERANCES
from utils.dyadic_core import DyadicSquare, StepFunction2D, check_same_resolution
from utils.errors import InternalConsistencyError, ResolutionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoxFormResult:
    """形式の値と、寄与した正方形の情報"""
    value: float
    square_count: int
    per_square: Optional[Tuple[Tuple[DyadicSquare, float], ...]] = None


class HaarWeights(NamedTuple):
    """長さ m セルの区間上のハール関数（セル値）"""
    phi: np.ndarray
    psi: np.ndarray
    phi_left: np.ndarray
    phi_right: np.ndarray


def local_haar_weights(m: int, h: float) -> HaarWeights:
    """
    セル幅 h、長さ m·h の区間に対する φ_I, ψ_I, φ_{I_left}, φ_{I_right}

    m = 1 のときは左右の半分が格子で表せないため ψ 等は 0 のまま返す。
    """
    length = m * h
    phi = np.full(m, length ** -0.5)
    psi = np.zeros(m)
    phi_left = np.zeros(m)
    phi_right = np.zeros(m)
    if m >= 2:
        half = m // 2
        psi[:half] = length ** -0.5
        psi[half:] = -length ** -0.5
        phi_left[:half] = (length / 2) ** -0.5
        phi_right[half:] = (length / 2) ** -0.5
    return HaarWeights(phi, psi, phi_left, phi_right)


def square_blocks(values: np.ndarray, k: int) -> np.ndarray:
    """
    スケール k の全正方形へのブロック分割

    Returns:
        形状 (2^k, 2^k, m, m) の配列。[i, j] が正方形 (k, i, j) のブロック
    """
    size = values.shape[0]
    s = 2 ** k
    if s > size:
        raise ResolutionError(f"スケール k={k} が格子サイズ {size} を超えています。")
    m = size // s
    return values.reshape(s, m, s, m).transpose(0, 2, 1, 3)


def pair_contraction(blocks: Sequence[np.ndarray], u_weight: np.ndarray, v_weight: np.ndarray) -> np.ndarray:
    """
    Σ_{u,x,v,y} B1[u,v] B2[x,v] B3[u,y] B4[x,y] a(u)a(x)b(v)b(y)

    ブロックの先頭の軸（正方形の添字）はそのまま残る。
    """
    B1, B2, B3, B4 = blocks
    left = np.matmul(B1 * v_weight, np.swapaxes(B2, -1, -2))
    right = np.matmul(B3 * v_weight, np.swapaxes(B4, -1, -2))
    return np.einsum("...ux,u,x->...", left * right, u_weight, u_weight)


# 形式ごとの (u,x 側の重み, v,y 側の重み) の組
KERNEL_TERMS = {
    "xi": (("phi", "phi"),),
    "theta1": (("psi", "phi_left"), ("psi", "phi_right")),
    "theta2": (("phi", "psi"),),
}


def scale_form_values(functions: Sequence[StepFunction2D], k: int, kernel: str) -> np.ndarray:
    """
    スケール k のすべての正方形に対する形式の寄与

    Args:
        functions: F1..F4
        k: スケール
        kernel: "xi", "theta1", "theta2" のいずれか

    Returns:
        形状 (2^k, 2^k) の配列

    Raises:
        ResolutionError: θ 形式でスケールが N 以上の場合
    """
    N = check_same_resolution(*functions)
    if kernel != "xi" and k >= N:
        raise ResolutionError(f"ウェーブレットを含む形式にはスケール k={k} < N={N} が必要です。")
    if k > N:
        raise ResolutionError(f"スケール k={k} が解像度 N={N} を超えています。")
    h = 2.0 ** -N
    m = 2 ** (N - k)
    weights = local_haar_weights(m, h)._asdict()
    blocks = [square_blocks(F.values, k) for F in functions]
    total = np.zeros((2 ** k, 2 ** k))
    for u_name, v_name in KERNEL_TERMS[kernel]:
        total += pair_contraction(blocks, weights[u_name], weights[v_name])
    return total * h ** 4


class FormTable:
    """
    四つ組 (F1..F4) に対するスケール別の形式値の表

    同じ関数の組について多数の木や正方形の集まりを評価するときに使う。
    """

    def __init__(self, functions: Sequence[StepFunction2D]):
        if len(functions) != 4:
            raise ValueError(f"関数は 4 つ必要です: {len(functions)}")
        self.N = check_same_resolution(*functions)
        self.functions = tuple(functions)
        self._values: Dict[Tuple[str, int], np.ndarray] = {}

    def values(self, kernel: str, k: int) -> np.ndarray:
        key = (kernel, k)
        if key not in self._values:
            self._values[key] = scale_form_values(self.functions, k, kernel)
        return self._values[key]

    def sum_over(self, squares: Iterable[DyadicSquare], kernel: str, keep_per_square: bool = False) -> BoxFormResult:
        """正方形の集まりについて形式の寄与を合計"""
        by_scale: Dict[int, List[DyadicSquare]] = {}
        for Q in squares:
            by_scale.setdefault(Q.scale, []).append(Q)
        total = 0.0
        count = 0
        contributions = []
        for k in sorted(by_scale):
            group = sorted(by_scale[k])
            table = self.values(kernel, k)
            rows = np.fromiter((Q.i for Q in group), dtype=int, count=len(group))
            cols = np.fromiter((Q.j for Q in group), dtype=int, count=len(group))
            picked = table[rows, cols]
            total += float(picked.sum())
            count += len(group)
            if keep_per_square:
                contributions.extend(zip(group, picked.tolist()))
        return BoxFormResult(
            value=total,
            square_count=count,
            per_square=tuple(contributions) if keep_per_square else None,
        )


def box_inner_product(F1: StepFunction2D, F2: StepFunction2D, F3: StepFunction2D, F4: StepFunction2D,
                      Q: DyadicSquare) -> float:
    """
    ガウアーズ・ボックス内積 [F1,F2,F3,F4]_□(Q)

    Args:
        F1, F2, F3, F4: 同じ解像度のステップ関数
        Q: 正方形（スケール ≤ N）

    Returns:
        |Q|^{-2} ∫ F1(u,v)F2(x,v)F3(u,y)F4(x,y)（u,x ∈ I, v,y ∈ J）

    Raises:
        ResolutionError: 解像度が一致しない、または Q が格子より細かい場合
    """
    N = check_same_resolution(F1, F2, F3, F4)
    if Q.scale > N:
        raise ResolutionError(f"正方形のスケール {Q.scale} が解像度 N={N} を超えています。")
    m = 2 ** (N - Q.scale)
    blocks = [F.block(Q) for F in (F1, F2, F3, F4)]
    ones = np.ones(m)
    return float(pair_contraction(blocks, ones, ones)) / m ** 4


def box_inner_products_at_scale(functions: Sequence[StepFunction2D], k: int) -> np.ndarray:
    """スケール k の全正方形のボックス内積（形状 (2^k, 2^k)）"""
    N = check_same_resolution(*functions)
    m = 2 ** (N - k)
    blocks = [square_blocks(F.values, k) for F in functions]
    ones = np.ones(m)
    return pair_contraction(blocks, ones, ones) / m ** 4


def _fourth_root_checked(values, magnitude: float):
    tolerance = TOLERANCES["nonnegativity"] * max(1.0, magnitude)
    lowest = float(np.min(values))
    if lowest < -tolerance:
        raise InternalConsistencyError(f"[F,F,F,F]_□ が負になりました: {lowest}")
    return np.maximum(values, 0.0) ** 0.25


def box_norm(F: StepFunction2D, Q: DyadicSquare) -> float:
    """
    ボックスノルム ‖F‖_□(Q) = [F,F,F,F]_□(Q)^{1/4}

    Raises:
        InternalConsistencyError: 内積が許容誤差を超えて負になった場合
    """
    value = box_inner_product(F, F, F, F, Q)
    magnitude = float(np.max(np.abs(F.values))) ** 4
    return float(_fourth_root_checked(np.asarray(value), magnitude))


def box_norms_at_scale(F: StepFunction2D, k: int) -> np.ndarray:
    """スケール k の全正方形のボックスノルム（形状 (2^k, 2^k)）"""
    values = box_inner_products_at_scale((F, F, F, F), k)
    magnitude = float(np.max(np.abs(F.values))) ** 4
    return _fourth_root_checked(values, magnitude)


def local_l2_average(F: StepFunction2D, Q: DyadicSquare) -> float:
    """(|Q|^{-1}∫_Q |F|²)^{1/2}"""
    return float(np.sqrt(np.mean(F.block(Q) ** 2)))


def xi_form(collection: Iterable[DyadicSquare], F1: StepFunction2D, F2: StepFunction2D,
            F3: StepFunction2D, F4: StepFunction2D, keep_per_square: bool = False) -> BoxFormResult:
    """
    Ξ 形式 Σ_{Q} |Q| [F1,F2,F3,F4]_□(Q)

    φ_I(u)φ_I(x)φ_J(v)φ_J(y) を核とする形と同じ値になる。

    Args:
        collection: 正方形の集まり（スケール ≤ N）
        F1, F2, F3, F4: ステップ関数
        keep_per_square: True なら正方形ごとの寄与を残す

    Returns:
        BoxFormResult
    """
    return FormTable((F1, F2, F3, F4)).sum_over(collection, "xi", keep_per_square)
