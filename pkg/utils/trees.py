"""凸木と局所形式モジュール

凸木 T（根 Q_T を持つ正方形の有限集合）上の形式 Θ^(1), Θ^(2), Λ_T と
テレスコーピング恒等式
    Θ^(1)_T + Θ^(2)_T = Ξ_{L(T)} − Ξ_{{Q_T}}
を扱う。木の構造（根・凸性・葉）は正方形と立方体の両方で共通に使う。
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config import SINGLE_TREE_CONSTANT, TOLERANCES
from utils.box_forms import BoxFormResult, FormTable, box_norms_at_scale, box_inner_products_at_scale
from utils.dyadic_core import (
    DyadicSquare,
    StepFunction2D,
    UNIT_SQUARE,
    check_same_resolution,
    integral,
    lp_norm,
    martingale_average,
)
from utils.errors import (
    ConvexityError,
    DegenerateInputError,
    InternalConsistencyError,
    NegativeInputError,
    ResolutionError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConvexTree:
    """根を持つ凸な正方形（または立方体）の集まり。葉は保持せず都度計算する"""
    squares: FrozenSet
    root: object

    def __len__(self):
        return len(self.squares)

    def __contains__(self, node):
        return node in self.squares

    @property
    def max_scale(self) -> int:
        return max(node.scale for node in self.squares)


def make_tree(squares: Iterable) -> ConvexTree:
    """
    正方形の集まりを検証して凸木を作成

    Args:
        squares: 空でない正方形（または立方体）の集まり

    Returns:
        ConvexTree

    Raises:
        ConvexityError: 根が一意に定まらない、または凸性が破れている場合
    """
    nodes = frozenset(squares)
    if not nodes:
        raise ConvexityError("木が空です。")
    top_scale = min(node.scale for node in nodes)
    tops = [node for node in nodes if node.scale == top_scale]
    if len(tops) != 1:
        raise ConvexityError(f"根が一意に定まりません（最上位スケール {top_scale} に {len(tops)} 個）。")
    root = tops[0]
    for node in nodes:
        if not root.contains(node):
            raise ConvexityError(f"{node} が根 {root} に含まれていません。")
        ancestor = node.parent() if node != root else None
        while ancestor is not None and ancestor.scale >= root.scale:
            if ancestor not in nodes:
                raise ConvexityError(f"凸性が破れています: {node} と根の間の {ancestor} が木にありません。")
            ancestor = ancestor.parent()
    return ConvexTree(nodes, root)


def leaves(tree: ConvexTree, N: int) -> List:
    """
    木の葉（木に含まれず、親が木に含まれる正方形）

    葉が根を分割すること（測度の和と互いに素であること）を確認する。

    Raises:
        ResolutionError: 葉のスケールが解像度 N を超える場合
        InternalConsistencyError: 葉が根を分割しない場合
    """
    result = sorted({child for node in tree.squares for child in node.children() if child not in tree.squares})
    deepest = max(leaf.scale for leaf in result)
    if deepest > N:
        raise ResolutionError(f"葉のスケール {deepest} が解像度 N={N} を超えています。")
    leaf_set = set(result)
    for leaf in result:
        ancestor = leaf.parent()
        while ancestor is not None and ancestor.scale > tree.root.scale:
            if ancestor in leaf_set:
                raise InternalConsistencyError(f"葉 {leaf} が別の葉 {ancestor} に含まれています。")
            ancestor = ancestor.parent()
    total = math.fsum(leaf.measure for leaf in result)
    if not math.isclose(total, tree.root.measure, rel_tol=1e-12):
        raise InternalConsistencyError(f"葉の測度の和 {total} が根の測度 {tree.root.measure} と一致しません。")
    return result


def full_tree(N: int, root: DyadicSquare = UNIT_SQUARE) -> ConvexTree:
    """根以下のスケール N−1 までのすべての正方形からなる木"""
    nodes = [root]
    frontier = [root]
    while frontier and frontier[0].scale < N - 1:
        frontier = [child for node in frontier for child in node.children()]
        nodes.extend(frontier)
    return make_tree(nodes)


def random_convex_tree(rng: np.random.Generator, N: int, root: DyadicSquare = UNIT_SQUARE,
                       grow_probability: float = 0.6) -> ConvexTree:
    """
    乱数による凸木（根から子を確率的に追加していく）

    スケールは N−1 までに制限するので葉は常に格子上にある。
    """
    nodes = [root]
    frontier = [root]
    while frontier:
        next_frontier = []
        for node in frontier:
            if node.scale >= N - 1:
                continue
            for child in node.children():
                if rng.random() < grow_probability:
                    nodes.append(child)
                    next_frontier.append(child)
        frontier = next_frontier
    return make_tree(nodes)


def _check_tree_scale(tree: ConvexTree, N: int) -> None:
    if tree.max_scale >= N:
        raise ResolutionError(
            f"木の正方形のスケール {tree.max_scale} が N={N} 以上です（ウェーブレットには細かい格子が必要）。"
        )


def theta1(tree: ConvexTree, F1: StepFunction2D, F2: StepFunction2D, F3: StepFunction2D, F4: StepFunction2D,
           table: Optional[FormTable] = None) -> BoxFormResult:
    """
    Θ^(1)_T：核 ψ_I(u)ψ_I(x) Σ_{左右} φ_{J_j}(v)φ_{J_j}(y)

    Args:
        tree: 凸木（スケール < N）
        F1, F2, F3, F4: ステップ関数
        table: 同じ関数の組で評価済みの表（省略時は新規作成）

    Returns:
        BoxFormResult

    Raises:
        ResolutionError: 木のスケールが N 以上の場合
    """
    table = table or FormTable((F1, F2, F3, F4))
    _check_tree_scale(tree, table.N)
    return table.sum_over(tree.squares, "theta1")


def theta2(tree: ConvexTree, F1: StepFunction2D, F2: StepFunction2D, F3: StepFunction2D, F4: StepFunction2D,
           table: Optional[FormTable] = None) -> BoxFormResult:
    """
    Θ^(2)_T：核 φ_I(u)φ_I(x)ψ_J(v)ψ_J(y)

    Raises:
        ResolutionError: 木のスケールが N 以上の場合
    """
    table = table or FormTable((F1, F2, F3, F4))
    _check_tree_scale(tree, table.N)
    return table.sum_over(tree.squares, "theta2")


def require_nonnegative(*functions) -> None:
    """非負性の前提条件を確認"""
    for position, F in enumerate(functions, start=1):
        if not F.is_nonnegative():
            raise NegativeInputError(f"{position} 番目の関数が負の値を含みます（最小値 {float(F.values.min())}）。")


def lambda_tree(tree: ConvexTree, F: StepFunction2D, G: StepFunction2D, H: StepFunction2D,
                table: Optional[FormTable] = None) -> float:
    """
    局所三線形形式 Λ_T(F,G,H) = Θ^(2)_T(1, G, F, H)

    Args:
        tree: 凸木
        F, G, H: 非負のステップ関数
        table: (1, G, F, H) について作成した FormTable（省略可）

    Raises:
        NegativeInputError: 負の値を含む関数がある場合
    """
    require_nonnegative(F, G, H)
    one = StepFunction2D.constant(1.0, F.N)
    return theta2(tree, one, G, F, H, table=table).value


def telescoping_residual(tree: ConvexTree, F1: StepFunction2D, F2: StepFunction2D, F3: StepFunction2D,
                         F4: StepFunction2D) -> float:
    """
    |Θ^(1)_T + Θ^(2)_T − Ξ_{L(T)} + Ξ_{{Q_T}}|

    Raises:
        ResolutionError: 葉が格子より細かい場合
    """
    table = FormTable((F1, F2, F3, F4))
    leaf_list = leaves(tree, table.N)
    left = theta1(tree, F1, F2, F3, F4, table).value + theta2(tree, F1, F2, F3, F4, table).value
    right = table.sum_over(leaf_list, "xi").value - table.sum_over([tree.root], "xi").value
    residual = abs(left - right)
    logger.debug("[テレスコーピング] 木 %d 個の正方形, 残差 %.3e", len(tree), residual)
    return residual


def global_forms(F1: StepFunction2D, F2: StepFunction2D, F3: StepFunction2D, F4: StepFunction2D) -> Tuple[float, float]:
    """スケール 0..N−1 のすべての正方形にわたる (Θ_C^(1), Θ_C^(2))"""
    table = FormTable((F1, F2, F3, F4))
    first = sum(float(table.values("theta1", k).sum()) for k in range(table.N))
    second = sum(float(table.values("theta2", k).sum()) for k in range(table.N))
    return first, second


def global_telescoping_residual(F1: StepFunction2D, F2: StepFunction2D, F3: StepFunction2D,
                                F4: StepFunction2D) -> float:
    """
    |Θ_C^(1) + Θ_C^(2) + Ξ_{[0,1)²} − ∫F1F2F3F4|

    有限の格子では最も粗い正方形の Ξ 項（E₀ 同士の積に相当）が境界項として残る。
    """
    check_same_resolution(F1, F2, F3, F4)
    first, second = global_forms(F1, F2, F3, F4)
    boundary = float(box_inner_products_at_scale((F1, F2, F3, F4), 0)[0, 0])
    product = integral(F1 * F2 * F3 * F4)
    return abs(first + second + boundary - product)


def _max_leaf_box_norm(F: StepFunction2D, leaf_list: Sequence[DyadicSquare]) -> float:
    by_scale: Dict[int, List[DyadicSquare]] = {}
    for leaf in leaf_list:
        by_scale.setdefault(leaf.scale, []).append(leaf)
    best = 0.0
    for k, group in by_scale.items():
        norms = box_norms_at_scale(F, k)
        best = max(best, max(float(norms[Q.i, Q.j]) for Q in group))
    return best


def single_tree_ratio(tree: ConvexTree, F1: StepFunction2D, F2: StepFunction2D, F3: StepFunction2D,
                      F4: StepFunction2D, check: bool = True) -> float:
    """
    |Θ^(2)_T| / (|Q_T| Π_j max_{Q∈L(T)} ‖F_j‖_□(Q))

    この比は 2 以下になる。
    check が真のとき、定数を超えた比は内部不整合として例外にする。
    記録だけしたい呼び出し側 (同一性スイート等) は check=False を渡す。

    Raises:
        NegativeInputError: 負の値を含む関数がある場合
        DegenerateInputError: 分母が 0 で分子が 0 でない場合
        InternalConsistencyError: check が真で比が定数を超えた場合
    """
    require_nonnegative(F1, F2, F3, F4)
    N = check_same_resolution(F1, F2, F3, F4)
    leaf_list = leaves(tree, N)
    numerator = abs(theta2(tree, F1, F2, F3, F4).value)
    denominator = tree.root.measure
    for F in (F1, F2, F3, F4):
        denominator *= _max_leaf_box_norm(F, leaf_list)
    scale = max(1.0, float(np.prod([np.max(np.abs(F.values)) for F in (F1, F2, F3, F4)])))
    if denominator == 0.0:
        if numerator <= TOLERANCES["identity"] * scale * tree.root.measure:
            return 0.0
        raise DegenerateInputError(f"分母が 0 ですが分子が {numerator} です。")
    ratio = numerator / denominator
    if ratio > SINGLE_TREE_CONSTANT + TOLERANCES["single_tree"]:
        logger.warning("[単一木評価] 比 %.6f が定数 %.1f を超えました。", ratio, SINGLE_TREE_CONSTANT)
        if check:
            raise InternalConsistencyError(
                f"単一木評価の比 {ratio:.6f} が定数 {SINGLE_TREE_CONSTANT} を超えました。"
            )
    return ratio


@dataclass(frozen=True)
class ReductionCheck:
    """縮約不等式の両辺"""
    theta1_value: float
    theta1_bound: float
    theta2_value: float
    theta2_bound: float

    @property
    def theta1_slack(self) -> float:
        return self.theta1_bound - abs(self.theta1_value)

    @property
    def theta2_slack(self) -> float:
        return self.theta2_bound - abs(self.theta2_value)


def _checked_sqrt(value: float, scale: float) -> float:
    if value < -TOLERANCES["nonnegativity"] * scale:
        raise InternalConsistencyError(f"非負であるべき形式が負になりました: {value}")
    return math.sqrt(max(value, 0.0))


def reduction_check(tree: ConvexTree, F1: StepFunction2D, F2: StepFunction2D, F3: StepFunction2D,
                    F4: StepFunction2D) -> ReductionCheck:
    """
    縮約不等式
        |Θ^(1)(F1,F2,F3,F4)| ≤ Θ^(1)(F1,F1,F3,F3)^{1/2} Θ^(1)(F2,F2,F4,F4)^{1/2}
        |Θ^(2)(F1,F2,F3,F4)| ≤ Θ^(2)(F1,F2,F1,F2)^{1/2} Θ^(2)(F3,F4,F3,F4)^{1/2}
    の両辺を計算
    """
    scale = max(1.0, max(float(np.max(np.abs(F.values))) for F in (F1, F2, F3, F4)) ** 4)
    first = theta1(tree, F1, F2, F3, F4).value
    first_bound = (_checked_sqrt(theta1(tree, F1, F1, F3, F3).value, scale)
                   * _checked_sqrt(theta1(tree, F2, F2, F4, F4).value, scale))
    second = theta2(tree, F1, F2, F3, F4).value
    second_bound = (_checked_sqrt(theta2(tree, F1, F2, F1, F2).value, scale)
                    * _checked_sqrt(theta2(tree, F3, F4, F3, F4).value, scale))
    return ReductionCheck(first, first_bound, second, second_bound)


@dataclass(frozen=True)
class ChainStep:
    """証明の図式の一段"""
    kind: str            # "solid"（コーシー・シュワルツ）, "broken"（テレスコーピング）, "nonnegative"
    axis: int
    arguments: Tuple[int, ...]
    value: float
    slack: float


@dataclass(frozen=True)
class ChainAudit:
    steps: Tuple[ChainStep, ...]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(step.slack >= -self.tolerance for step in self.steps)

    @property
    def min_slack(self) -> float:
        return min(step.slack for step in self.steps)


def _flip(index: int, axis: int) -> int:
    return index ^ (1 << (axis - 1))


def is_symmetric(arguments: Tuple[int, ...], axis: int) -> bool:
    """添字の第 axis ビットを反転しても引数が変わらないか"""
    return all(arguments[j] == arguments[_flip(j, axis)] for j in range(len(arguments)))


def reduce_arguments(arguments: Tuple[int, ...], axis: int) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """
    第 axis 変数についてのコーシー・シュワルツで現れる二つの引数の組

    左の組はビットが 1 の位置を 0 の相手で、右の組は 0 の位置を 1 の相手で置き換える。
    """
    bit = 1 << (axis - 1)
    left = tuple(arguments[j & ~bit] for j in range(len(arguments)))
    right = tuple(arguments[j | bit] for j in range(len(arguments)))
    return left, right


def reduction_chain_audit(theta: Callable[[int, Tuple[int, ...]], float],
                          telescoping: Callable[[Tuple[int, ...]], float],
                          dimension: int,
                          arguments: Tuple[int, ...],
                          scale: float = 1.0,
                          tolerance: Optional[float] = None) -> ChainAudit:
    """
    単一木評価の証明図式を実際の数値で辿る

    Θ^(dimension)(arguments) から出発し、
      - 第 i 変数について対称でない組には第 i 変数のコーシー・シュワルツ（実線の矢印）を適用し、
      - 対称な組は非負なのでテレスコーピング恒等式（破線の矢印）で他の Θ^(i') に移る。
    各段の余裕（不等式の右辺 − 左辺、恒等式なら −残差）を記録する。

    Args:
        theta: (i, 引数の組) → Θ^(i) の値
        telescoping: 引数の組 → テレスコーピング恒等式の残差
        dimension: 次元（Θ^(1)..Θ^(dimension)）
        arguments: 基底の関数列への添字の組（長さ 2^dimension）
        scale: 許容誤差のスケール
        tolerance: 許容誤差（省略時は TOLERANCES["identity"] × scale）

    Returns:
        ChainAudit
    """
    tolerance = TOLERANCES["identity"] * scale if tolerance is None else tolerance
    cache: Dict[Tuple[int, Tuple[int, ...]], float] = {}
    steps: List[ChainStep] = []
    visited = set()

    def value_of(axis: int, args: Tuple[int, ...]) -> float:
        key = (axis, args)
        if key not in cache:
            cache[key] = theta(axis, args)
        return cache[key]

    def visit(axis: int, args: Tuple[int, ...]) -> None:
        if (axis, args) in visited:
            return
        visited.add((axis, args))
        value = value_of(axis, args)
        if is_symmetric(args, axis):
            steps.append(ChainStep("nonnegative", axis, args, value, value))
            steps.append(ChainStep("broken", axis, args, value, -telescoping(args)))
            for other in range(1, dimension + 1):
                if other != axis and not is_symmetric(args, other):
                    visit(other, args)
            return
        left, right = reduce_arguments(args, axis)
        bound = math.sqrt(max(value_of(axis, left), 0.0)) * math.sqrt(max(value_of(axis, right), 0.0))
        steps.append(ChainStep("solid", axis, args, value, bound - abs(value)))
        visit(axis, left)
        visit(axis, right)

    visit(dimension, tuple(arguments))
    audit = ChainAudit(tuple(steps), tolerance)
    logger.debug("[縮約図式] %d 段, 最小余裕 %.3e", len(steps), audit.min_slack)
    return audit


def tree_reduction_chain(tree: ConvexTree, functions: Sequence[StepFunction2D]) -> ChainAudit:
    """二次元の凸木について、四つの関数から始まる証明図式を監査"""
    N = check_same_resolution(*functions)
    leaf_list = leaves(tree, N)
    tables: Dict[Tuple[int, ...], FormTable] = {}

    def table_for(args):
        if args not in tables:
            tables[args] = FormTable(tuple(functions[j] for j in args))
        return tables[args]

    def theta(axis, args):
        kernel = "theta1" if axis == 1 else "theta2"
        _check_tree_scale(tree, N)
        return table_for(args).sum_over(tree.squares, kernel).value

    def telescoping(args):
        table = table_for(args)
        left = theta(1, args) + theta(2, args)
        right = table.sum_over(leaf_list, "xi").value - table.sum_over([tree.root], "xi").value
        return abs(left - right)

    scale = max(1.0, max(float(np.max(np.abs(F.values))) for F in functions) ** 4)
    return reduction_chain_audit(theta, telescoping, 2, tuple(range(len(functions))), scale=scale)


@dataclass(frozen=True)
class ClosingBound:
    """閉じた形の簡易評価 |Λ_d| ≤ ‖G‖₂(‖FH‖₂² + ‖F‖₄²‖H‖₄²)^{1/2} と特別な恒等式"""
    lambda_value: float
    bound: float
    identity_residuals: Dict[str, float]


def closing_bound(F: StepFunction2D, G: StepFunction2D, H: StepFunction2D) -> ClosingBound:
    """
    全正方形にわたる Θ 形式からの簡易評価

    有限格子では Θ_C^(1) + Θ_C^(2) = ∫F1F2F3F4 − Ξ_{[0,1)²} となり、
    落とす境界項は非負なので評価はそのまま成り立つ。

    Returns:
        ClosingBound（Λ_d の値、右辺、四つの特別な恒等式の残差）
    """
    N = check_same_resolution(F, G, H)
    one = StepFunction2D.constant(1.0, N)
    # Λ_d = Θ_C^(2)(1,G,F,H)
    lambda_value = global_forms(one, G, F, H)[1]

    def boundary(*functions):
        return float(box_inner_products_at_scale(functions, 0)[0, 0])

    residuals = {}
    first, second = global_forms(F, H, F, H)
    residuals["Θ2(F,H,F,H) = ‖FH‖² − Θ1(F,H,F,H)"] = abs(
        second - (lp_norm(F * H, 2) ** 2 - first - boundary(F, H, F, H))
    )
    first, second = global_forms(one, G, one, G)
    g_coarse = martingale_average(G, 2, 0)
    residuals["Θ2(1,G,1,G) = ‖G‖² − ‖E₀G‖²"] = abs(second - (lp_norm(G, 2) ** 2 - lp_norm(g_coarse, 2) ** 2))
    residuals["Θ1(1,G,1,G) = 0"] = abs(first)
    for name, K in (("F", F), ("H", H)):
        first, second = global_forms(K, K, K, K)
        residuals[f"Θ1({name}) = ‖{name}‖₄⁴ − Θ2({name})"] = abs(
            first - (lp_norm(K, 4) ** 4 - second - boundary(K, K, K, K))
        )
    bound = lp_norm(G, 2) * math.sqrt(lp_norm(F * H, 2) ** 2 + lp_norm(F, 4) ** 2 * lp_norm(H, 4) ** 2)
    return ClosingBound(lambda_value, bound, residuals)
