"""停止時間分解モジュール

ボックスノルムの祖先方向の上限値で正方形を水準 P_k に分け、極大族 M_k、
三つ組の族 P_{k1,k2,k3} とその根ごとの凸木 T_Q を構成する。
Λ_d はこれらの木の上の Λ_T の和に厳密に分解される。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import TOLERANCES
from utils.box_forms import FormTable, box_norms_at_scale
from utils.dyadic_core import DyadicSquare, StepFunction2D, check_same_resolution, dyadic_maximal_M2, lp_norm
from utils.errors import DegenerateInputError, ExponentError, InternalConsistencyError
from utils.trees import ConvexTree, lambda_tree, leaves, make_tree, require_nonnegative, single_tree_ratio
from utils.twisted_paraproduct import lambda_d

logger = logging.getLogger(__name__)

# 上限値が 0 の正方形（どの水準にも属さない）の印
NO_LEVEL = np.iinfo(np.int64).min


def sup_box_norm_map(F: StepFunction2D) -> Dict[int, np.ndarray]:
    """
    各正方形の sup_{Q' ⊇ Q} ‖F‖_□(Q')

    Args:
        F: 非負のステップ関数

    Returns:
        スケール k（0..N−1）→ 形状 (2^k, 2^k) の配列
    """
    require_nonnegative(F)
    result: Dict[int, np.ndarray] = {}
    for k in range(F.N):
        norms = box_norms_at_scale(F, k)
        if k > 0:
            inherited = np.repeat(np.repeat(result[k - 1], 2, axis=0), 2, axis=1)
            norms = np.maximum(norms, inherited)
        result[k] = norms
    return result


def _levels_from_sup(sup_map: Dict[int, np.ndarray]) -> Dict[int, np.ndarray]:
    levels = {}
    for k, values in sup_map.items():
        level = np.full(values.shape, NO_LEVEL, dtype=np.int64)
        positive = values > 0
        # 2 の冪ちょうどの値が丸めで一つ下の水準に落ちないようにする
        level[positive] = np.floor(np.log2(values[positive]) + TOLERANCES["lattice"]).astype(np.int64)
        levels[k] = level
    return levels


@dataclass(frozen=True)
class LevelFamilies:
    """水準ごとの族 P_k と極大族 M_k"""
    N: int
    level_map: Dict[int, np.ndarray]
    P: Dict[int, FrozenSet[DyadicSquare]]
    M: Dict[int, FrozenSet[DyadicSquare]]

    def level_of(self, Q: DyadicSquare) -> Optional[int]:
        value = int(self.level_map[Q.scale][Q.i, Q.j])
        return None if value == NO_LEVEL else value

    def maximal_measure(self, k: int) -> float:
        return math.fsum(Q.measure for Q in self.M.get(k, ()))


def _maximal_squares(members: FrozenSet[DyadicSquare]) -> FrozenSet[DyadicSquare]:
    return frozenset(Q for Q in members if Q.parent() is None or Q.parent() not in members)


def _check_disjoint(family: FrozenSet[DyadicSquare]) -> None:
    for Q in family:
        ancestor = Q.parent()
        while ancestor is not None:
            if ancestor in family:
                raise InternalConsistencyError(f"極大族の正方形 {Q} と {ancestor} が重なっています。")
            ancestor = ancestor.parent()


def level_families(F: StepFunction2D) -> LevelFamilies:
    """
    P_k = {Q : 2^k ≤ sup_{Q'⊇Q} ‖F‖_□(Q') < 2^{k+1}} と極大族 M_k

    Raises:
        NegativeInputError: F が負の値を含む場合
        DegenerateInputError: F が恒等的に 0 の場合
    """
    require_nonnegative(F)
    if not np.any(F.values):
        raise DegenerateInputError("恒等的に 0 の関数には水準の族を定義できません。")
    level_map = _levels_from_sup(sup_box_norm_map(F))
    grouped: Dict[int, set] = {}
    for k, levels in level_map.items():
        if np.any(levels == NO_LEVEL):
            raise InternalConsistencyError(f"スケール {k} に上限値 0 の正方形があります。")
        for (i, j), level in np.ndenumerate(levels):
            grouped.setdefault(int(level), set()).add(DyadicSquare(k, i, j))
    P = {level: frozenset(members) for level, members in sorted(grouped.items())}
    M = {level: _maximal_squares(members) for level, members in P.items()}
    for family in M.values():
        _check_disjoint(family)
    logger.debug("[水準族] 水準 %s", sorted(P))
    return LevelFamilies(F.N, level_map, P, M)


@dataclass(frozen=True)
class TreeEntry:
    """三つ組の水準 (k1,k2,k3) と極大正方形 Q、その木 T_Q"""
    levels: Tuple[int, int, int]
    root: DyadicSquare
    tree: ConvexTree


@dataclass(frozen=True)
class TreeDecomposition:
    N: int
    entries: Tuple[TreeEntry, ...]
    families: Tuple[LevelFamilies, LevelFamilies, LevelFamilies] = field(repr=False)

    def roots_by_levels(self) -> Dict[Tuple[int, int, int], List[DyadicSquare]]:
        grouped: Dict[Tuple[int, int, int], List[DyadicSquare]] = {}
        for entry in self.entries:
            grouped.setdefault(entry.levels, []).append(entry.root)
        return grouped


def triple_decomposition(F: StepFunction2D, G: StepFunction2D, H: StepFunction2D) -> TreeDecomposition:
    """
    P_{k1,k2,k3} = P_{k1}^F ∩ P_{k2}^G ∩ P_{k3}^H の極大正方形ごとの木への分解

    スケールを上から順に走査し、親と同じ三つ組に属する正方形は親の木に入れる。

    Returns:
        TreeDecomposition（すべての正方形がちょうど一つの木に属する）
    """
    N = check_same_resolution(F, G, H)
    families = (level_families(F), level_families(G), level_families(H))
    root_of: Dict[DyadicSquare, DyadicSquare] = {}
    members: Dict[DyadicSquare, List[DyadicSquare]] = {}
    levels_of_root: Dict[DyadicSquare, Tuple[int, int, int]] = {}
    for k in range(N):
        for i in range(2 ** k):
            for j in range(2 ** k):
                Q = DyadicSquare(k, i, j)
                key = tuple(int(family.level_map[k][i, j]) for family in families)
                parent = Q.parent()
                if parent is not None and levels_of_root[root_of[parent]] == key:
                    root = root_of[parent]
                else:
                    root = Q
                    levels_of_root[Q] = key
                root_of[Q] = root
                members.setdefault(root, []).append(Q)
    entries = tuple(
        TreeEntry(levels_of_root[root], root, make_tree(squares))
        for root, squares in sorted(members.items())
    )
    logger.debug("[三つ組分解] 木 %d 本", len(entries))
    return TreeDecomposition(N, entries, families)


def resummation_residual(F: StepFunction2D, G: StepFunction2D, H: StepFunction2D,
                         decomposition: Optional[TreeDecomposition] = None) -> float:
    """
    |Λ_d(F,G,H) − Σ_{(k1,k2,k3), Q} Λ_{T_Q}(F,G,H)|

    Raises:
        NegativeInputError: 負の値を含む関数がある場合
    """
    require_nonnegative(F, G, H)
    decomposition = decomposition or triple_decomposition(F, G, H)
    one = StepFunction2D.constant(1.0, F.N)
    table = FormTable((one, G, F, H))
    pieces = [lambda_tree(entry.tree, F, G, H, table=table) for entry in decomposition.entries]
    return abs(lambda_d(F, G, H) - math.fsum(pieces))


@dataclass(frozen=True)
class LeafAudit:
    """葉のボックスノルムの倍増評価の監査結果"""
    leaf_count: int
    max_parent_ratio: float      # max ‖F‖_□(葉) / (2‖F‖_□(親))
    max_level_ratio: float       # max ‖F‖_□(葉) / 2^{k+2}
    max_tree_ratio: float        # max 単一木評価の比（Λ 形式）

    @property
    def passed(self) -> bool:
        tolerance = TOLERANCES["single_tree"]
        return (self.max_parent_ratio <= 1.0 + tolerance and self.max_level_ratio <= 1.0 + tolerance
                and self.max_tree_ratio <= 2.0 + tolerance)


def leaf_doubling_audit(decomposition: TreeDecomposition, F: StepFunction2D, G: StepFunction2D,
                        H: StepFunction2D) -> LeafAudit:
    """
    各木の葉 Q̃（親 Q'）について (1/2)‖F‖_□(Q̃) ≤ ‖F‖_□(Q') < 2^{k1+1} を確認し、
    各木で単一木評価の比を計算する
    """
    N = decomposition.N
    functions = (F, G, H)
    norm_tables = [{k: box_norms_at_scale(K, k) for k in range(N + 1)} for K in functions]
    one = StepFunction2D.constant(1.0, N)
    leaf_count = 0
    parent_ratio = 0.0
    level_ratio = 0.0
    tree_ratio = 0.0
    for entry in decomposition.entries:
        for leaf in leaves(entry.tree, N):
            parent = leaf.parent()
            leaf_count += 1
            for tables, level in zip(norm_tables, entry.levels):
                leaf_norm = float(tables[leaf.scale][leaf.i, leaf.j])
                parent_norm = float(tables[parent.scale][parent.i, parent.j])
                if parent_norm > 0:
                    parent_ratio = max(parent_ratio, leaf_norm / (2 * parent_norm))
                elif leaf_norm > 0:
                    parent_ratio = math.inf
                level_ratio = max(level_ratio, leaf_norm / 2.0 ** (level + 2))
        tree_ratio = max(tree_ratio, single_tree_ratio(entry.tree, one, G, F, H, check=False))
    return LeafAudit(leaf_count, parent_ratio, level_ratio, tree_ratio)


def _check_exponents(p: float, q: float, r: float) -> None:
    for name, value in (("p", p), ("q", q), ("r", r)):
        if not 2.0 < value < math.inf:
            raise ExponentError(f"{name}={value} は 2 < {name} < ∞ を満たしません。")
    total = 1.0 / p + 1.0 / q + 1.0 / r
    if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-12):
        raise ExponentError(f"1/p + 1/q + 1/r = {total} が 1 ではありません。")


@dataclass(frozen=True)
class SummationReport:
    """木の和の評価に現れる量と、入力ノルムに対する比"""
    exponents: Tuple[float, float, float]
    norm_product: float
    tree_sum: float                 # Σ 2^{k1+k2+k3} Σ_{Q∈M_{k1,k2,k3}} |Q|
    min_sum: float                  # Σ 2^{k1+k2+k3} min(Σ_{M^F}|Q|, Σ_{M^G}|Q|, Σ_{M^H}|Q|)
    single_ratios: Dict[str, float]  # Σ_k 2^{pk} Σ_{Q∈M_k}|Q| / ‖F‖_p^p など
    region_sums: Dict[str, float]   # 最大の正規化量で分けた三領域の部分和（正規化済み）
    maximal_coverage: Dict[str, float]  # max_k Σ_{M_k}|Q| / |{M₂F ≥ 2^k}|
    level_table: pd.DataFrame = field(repr=False)

    @property
    def tree_ratio(self) -> float:
        return self.tree_sum / self.norm_product

    @property
    def min_ratio(self) -> float:
        return self.min_sum / self.norm_product


def summation_bound_report(F: StepFunction2D, G: StepFunction2D, H: StepFunction2D,
                           p: float, q: float, r: float) -> SummationReport:
    """
    木の和の評価の各段階を計算

    Args:
        F, G, H: 非負で恒等的に 0 でないステップ関数
        p, q, r: 1/p + 1/q + 1/r = 1, 2 < p, q, r < ∞

    Returns:
        SummationReport

    Raises:
        ExponentError: 指数の条件を満たさない場合
    """
    _check_exponents(p, q, r)
    decomposition = triple_decomposition(F, G, H)
    functions = {"F": (F, p), "G": (G, q), "H": (H, r)}
    norms = {name: lp_norm(K, exponent) for name, (K, exponent) in functions.items()}
    norm_product = norms["F"] * norms["G"] * norms["H"]

    tree_sum = math.fsum(2.0 ** sum(entry.levels) * entry.root.measure for entry in decomposition.entries)

    masses = [
        {k: family.maximal_measure(k) for k in family.M}
        for family in decomposition.families
    ]
    rows = []
    single_ratios = {}
    coverage = {}
    for (name, (K, exponent)), mass, family in zip(functions.items(), masses, decomposition.families):
        maximal = dyadic_maximal_M2(K).values
        weighted_total = 0.0
        worst_coverage = 0.0
        for k in sorted(mass):
            weighted = 2.0 ** (exponent * k) * mass[k]
            weighted_total += weighted
            threshold = 2.0 ** k * (1.0 - TOLERANCES["lattice"])
            level_set = float(np.mean(maximal >= threshold))
            if level_set > 0:
                worst_coverage = max(worst_coverage, mass[k] / level_set)
            elif mass[k] > 0:
                worst_coverage = math.inf
            rows.append({"function": name, "k": k, "measure": mass[k], "weighted": weighted,
                         "level_set": level_set})
        single_ratios[name] = weighted_total / norms[name] ** exponent
        coverage[name] = worst_coverage

    normalized = [
        {k: 2.0 ** (exponent * k) / norms[name] ** exponent for k in mass}
        for (name, (_, exponent)), mass in zip(functions.items(), masses)
    ]
    min_sum = 0.0
    regions = {"S1": 0.0, "S2": 0.0, "S3": 0.0}
    for k1, m1 in masses[0].items():
        for k2, m2 in masses[1].items():
            for k3, m3 in masses[2].items():
                term = 2.0 ** (k1 + k2 + k3) * min(m1, m2, m3)
                min_sum += term
                sizes = (normalized[0][k1], normalized[1][k2], normalized[2][k3])
                regions[f"S{int(np.argmax(sizes)) + 1}"] += term / norm_product

    report = SummationReport(
        exponents=(p, q, r),
        norm_product=norm_product,
        tree_sum=tree_sum,
        min_sum=min_sum,
        single_ratios=single_ratios,
        region_sums=regions,
        maximal_coverage=coverage,
        level_table=pd.DataFrame(rows, columns=["function", "k", "measure", "weighted", "level_set"]),
    )
    logger.info("[木の和] (p,q,r)=(%g,%g,%g) 比 %.4f, min 形式 %.4f", p, q, r, report.tree_ratio, report.min_ratio)
    return report
