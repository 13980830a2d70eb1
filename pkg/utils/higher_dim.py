"""三次元への一般化モジュール

単位立方体 [0,1)³ 上のステップ関数、三次元ボックス内積、形式 Θ^(1..3), Ξ, Λ_S と
三項のテレスコーピング恒等式
    Θ^(1)_T + Θ^(2)_T + Θ^(3)_T = Ξ_{L(T)} − Ξ_{{Q_T}}
を扱う。

八つの関数 F_0..F_7 の添字 j = j1 + 2·j2 + 4·j3 は、各変数のどちらの複製
（x_a^0 または x_a^1）で評価するかを表す。各軸の核は
    A = φ_I ⊗ φ_I,  D = ψ_I ⊗ ψ_I,  B = Σ_{左右} φ_{I_half} ⊗ φ_{I_half} = A + D
のいずれかで、Θ^(1) = D·B·B, Θ^(2) = A·D·B, Θ^(3) = A·A·D, Ξ = A·A·A とする。
"""
import logging
from dataclasses import dataclass
from itertools import product
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from config import MAX_N_3D, TOLERANCES
from utils.box_forms import BoxFormResult, local_haar_weights
from utils.dyadic_core import DyadicInterval, _StepFunction, check_same_resolution
from utils.errors import InternalConsistencyError, ParameterRangeError, ResolutionError
from utils.trees import ChainAudit, ConvexTree, leaves, make_tree, reduction_chain_audit

logger = logging.getLogger(__name__)


class StepFunction3D(_StepFunction):
    """[0,1)³ 上の解像度 2^-N のステップ関数"""
    ndim = 3

    def block(self, Q: "DyadicCube") -> np.ndarray:
        return self.values[Q.cell_slices(self.N)]


@dataclass(frozen=True, order=True)
class DyadicCube:
    """ダイアディック立方体 I1 × I2 × I3（三辺は同じスケール）"""
    scale: int
    i: int
    j: int
    l: int

    def __post_init__(self):
        for index in (self.i, self.j, self.l):
            DyadicInterval(self.scale, index)

    @property
    def intervals(self) -> Tuple[DyadicInterval, DyadicInterval, DyadicInterval]:
        return (DyadicInterval(self.scale, self.i), DyadicInterval(self.scale, self.j),
                DyadicInterval(self.scale, self.l))

    @property
    def measure(self) -> float:
        return 8.0 ** -self.scale

    def children(self) -> Tuple["DyadicCube", ...]:
        k = self.scale + 1
        return tuple(
            DyadicCube(k, 2 * self.i + a, 2 * self.j + b, 2 * self.l + c)
            for a, b, c in product((0, 1), repeat=3)
        )

    def parent(self) -> Optional["DyadicCube"]:
        if self.scale == 0:
            return None
        return DyadicCube(self.scale - 1, self.i // 2, self.j // 2, self.l // 2)

    def contains(self, other: "DyadicCube") -> bool:
        return all(mine.contains(theirs) for mine, theirs in zip(self.intervals, other.intervals))

    def cell_slices(self, N: int) -> Tuple[slice, slice, slice]:
        return tuple(interval.cell_slice(N) for interval in self.intervals)


UNIT_CUBE = DyadicCube(0, 0, 0, 0)


def cubes_at_scale(k: int) -> Iterator[DyadicCube]:
    side = 2 ** k
    for i, j, l in product(range(side), repeat=3):
        yield DyadicCube(k, i, j, l)


def make_tree3d(cubes: Iterable[DyadicCube]) -> ConvexTree:
    """
    立方体の凸木を作成（検証は二次元と共通）

    Raises:
        ConvexityError: 根が一意でない、または凸性が破れている場合
        ParameterRangeError: 立方体以外が含まれる場合
    """
    nodes = list(cubes)
    if any(not isinstance(node, DyadicCube) for node in nodes):
        raise ParameterRangeError("三次元の木には DyadicCube のみ指定できます。")
    return make_tree(nodes)


def full_tree3d(N: int, root: DyadicCube = UNIT_CUBE) -> ConvexTree:
    """根以下のスケール N−1 までのすべての立方体からなる木"""
    nodes = [root]
    frontier = [root]
    while frontier and frontier[0].scale < N - 1:
        frontier = [child for node in frontier for child in node.children()]
        nodes.extend(frontier)
    return make_tree3d(nodes)


def random_tree3d(rng: np.random.Generator, N: int, root: DyadicCube = UNIT_CUBE,
                  grow_probability: float = 0.3) -> ConvexTree:
    """乱数による三次元の凸木（スケール N−1 まで）"""
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
    return make_tree3d(nodes)


def cube_blocks(values: np.ndarray, k: int) -> np.ndarray:
    """
    スケール k の全立方体へのブロック分割

    Returns:
        形状 (2^k, 2^k, 2^k, m, m, m) の配列
    """
    size = values.shape[0]
    s = 2 ** k
    if s > size:
        raise ResolutionError(f"スケール k={k} が格子サイズ {size} を超えています。")
    m = size // s
    return values.reshape(s, m, s, m, s, m).transpose(0, 2, 4, 1, 3, 5)


def octuple_contraction(blocks: Sequence[np.ndarray], w1: np.ndarray, w2: np.ndarray, w3: np.ndarray) -> np.ndarray:
    """
    Σ Π_j F_j(x1^{j1}, x2^{j2}, x3^{j3}) w1(x1^0)w1(x1^1) w2(x2^0)w2(x2^1) w3(x3^0)w3(x3^1)

    第三変数、第二変数、第一変数の順に縮約する（m³ ブロックあたり O(m⁵)）。
    先頭の軸（立方体の添字）はそのまま残る。
    """
    F = blocks
    # a = x1^0, d = x1^1, b = x2^0, e = x2^1, c = x3^0 / x3^1
    lower_x = np.einsum("...abc,...dbc->...adbc", F[0], F[1])
    lower_y = np.einsum("...aec,...dec->...adec", F[2], F[3])
    lower = np.einsum("...adbc,...adec,c->...adbe", lower_x, lower_y, w3)
    upper_x = np.einsum("...abc,...dbc->...adbc", F[4], F[5])
    upper_y = np.einsum("...aec,...dec->...adec", F[6], F[7])
    upper = np.einsum("...adbc,...adec,c->...adbe", upper_x, upper_y, w3)
    return np.einsum("...adbe,...adbe,a,d,b,e->...", lower, upper, w1, w1, w2, w2)


# 各軸の核に現れる重みの名前
AXIS_TERMS = {
    "A": ("phi",),
    "D": ("psi",),
    "B": ("phi_left", "phi_right"),
}

# 形式ごとの三軸の核
KERNELS_3D = {
    "xi": "AAA",
    "theta1": "DBB",
    "theta2": "ADB",
    "theta3": "AAD",
}


def _check_functions(functions: Sequence[StepFunction3D]) -> int:
    if len(functions) != 8:
        raise ParameterRangeError(f"三次元の形式には 8 つの関数が必要です: {len(functions)}")
    if any(not isinstance(F, StepFunction3D) for F in functions):
        raise ResolutionError("三次元の形式には StepFunction3D が必要です。")
    N = check_same_resolution(*functions)
    if N > MAX_N_3D:
        raise ResolutionError(f"三次元の解像度は N ≤ {MAX_N_3D} に限ります: N={N}")
    return N


def cube_form_values(functions: Sequence[StepFunction3D], k: int, kernel: str) -> np.ndarray:
    """
    スケール k のすべての立方体に対する形式の寄与（形状 (2^k, 2^k, 2^k)）

    Raises:
        ResolutionError: ウェーブレットを含む形式でスケールが N 以上の場合
    """
    N = _check_functions(functions)
    if kernel != "xi" and k >= N:
        raise ResolutionError(f"ウェーブレットを含む形式にはスケール k={k} < N={N} が必要です。")
    if k > N:
        raise ResolutionError(f"スケール k={k} が解像度 N={N} を超えています。")
    h = 2.0 ** -N
    weights = local_haar_weights(2 ** (N - k), h)._asdict()
    blocks = [cube_blocks(F.values, k) for F in functions]
    total = np.zeros((2 ** k,) * 3)
    axes = [AXIS_TERMS[letter] for letter in KERNELS_3D[kernel]]
    for names in product(*axes):
        total += octuple_contraction(blocks, *(weights[name] for name in names))
    return total * h ** 6


class FormTable3D:
    """八つ組に対するスケール別の形式値の表"""

    def __init__(self, functions: Sequence[StepFunction3D]):
        self.N = _check_functions(functions)
        self.functions = tuple(functions)
        self._values: Dict[Tuple[str, int], np.ndarray] = {}

    def values(self, kernel: str, k: int) -> np.ndarray:
        key = (kernel, k)
        if key not in self._values:
            self._values[key] = cube_form_values(self.functions, k, kernel)
        return self._values[key]

    def sum_over(self, cubes: Iterable[DyadicCube], kernel: str) -> BoxFormResult:
        total = 0.0
        count = 0
        for Q in cubes:
            total += float(self.values(kernel, Q.scale)[Q.i, Q.j, Q.l])
            count += 1
        return BoxFormResult(value=total, square_count=count)


def box3_inner_product(functions: Sequence[StepFunction3D], Q: DyadicCube) -> float:
    """
    三次元ボックス内積 [F_0,…,F_7]_{□³(Q)}

    I1²×I2²×I3² 上での Π_j F_j(x1^{j1}, x2^{j2}, x3^{j3}) の平均。

    Raises:
        ResolutionError: 解像度が一致しない、または Q が格子より細かい場合
    """
    N = _check_functions(functions)
    if Q.scale > N:
        raise ResolutionError(f"立方体のスケール {Q.scale} が解像度 N={N} を超えています。")
    m = 2 ** (N - Q.scale)
    ones = np.ones(m)
    blocks = [F.block(Q) for F in functions]
    return float(octuple_contraction(blocks, ones, ones, ones)) / m ** 6


def box3_l4_check(F: StepFunction3D, Q: DyadicCube) -> Tuple[float, float]:
    """
    ‖F‖_{□³(Q)} ≤ (|Q|^{-1}∫_Q |F|⁴)^{1/4} の両辺

    Returns:
        (左辺, 右辺)
    """
    value = box3_inner_product((F,) * 8, Q)
    magnitude = float(np.max(np.abs(F.values))) ** 8
    if value < -TOLERANCES["nonnegativity"] * max(1.0, magnitude):
        raise InternalConsistencyError(f"[F,…,F]_□³ が負になりました: {value}")
    lhs = max(value, 0.0) ** 0.125
    rhs = float(np.mean(F.block(Q) ** 4)) ** 0.25
    return lhs, rhs


def _check_tree_scale(tree: ConvexTree, N: int) -> None:
    if tree.max_scale >= N:
        raise ResolutionError(f"木の立方体のスケール {tree.max_scale} が N={N} 以上です。")


def theta3d(tree: ConvexTree, i: int, functions: Sequence[StepFunction3D],
            table: Optional[FormTable3D] = None) -> BoxFormResult:
    """
    三次元の形式 Θ^(i)_T（i = 1, 2, 3）

    第 i 軸に ψψ、それより前の軸に φφ、後ろの軸に左右の半分の φφ の和を置く。

    Raises:
        ParameterRangeError: i が 1..3 の外の場合
        ResolutionError: 木のスケールが N 以上の場合
    """
    if i not in (1, 2, 3):
        raise ParameterRangeError(f"Θ の番号は 1..3 で指定してください: {i}")
    table = table or FormTable3D(functions)
    _check_tree_scale(tree, table.N)
    return table.sum_over(tree.squares, f"theta{i}")


def xi3(collection: Iterable[DyadicCube], functions: Sequence[StepFunction3D],
        table: Optional[FormTable3D] = None) -> BoxFormResult:
    """Ξ = Σ_{Q} |Q| [F_0,…,F_7]_{□³(Q)}"""
    table = table or FormTable3D(functions)
    return table.sum_over(collection, "xi")


def telescoping3d_residual(tree: ConvexTree, functions: Sequence[StepFunction3D],
                           table: Optional[FormTable3D] = None) -> float:
    """|Θ^(1) + Θ^(2) + Θ^(3) − Ξ_{L(T)} + Ξ_{{Q_T}}|"""
    table = table or FormTable3D(functions)
    leaf_list = leaves(tree, table.N)
    left = sum(theta3d(tree, i, functions, table).value for i in (1, 2, 3))
    right = xi3(leaf_list, functions, table).value - xi3([tree.root], functions, table).value
    residual = abs(left - right)
    logger.debug("[三次元テレスコーピング] 木 %d 個の立方体, 残差 %.3e", len(tree), residual)
    return residual


def lambda_S(S: Iterable[int], functions: Mapping[int, StepFunction3D]) -> float:
    """
    多重線形形式 Λ_S

    スケール 0..N−1 のすべての立方体について核 φφ·φφ·ψψ を積分する。
    S に含まれない添字の関数は定数 1 に置き換える。

    Args:
        S: {0..7} の空でない部分集合
        functions: 添字 j ∈ S から関数への対応

    Raises:
        ParameterRangeError: S が空、範囲外、または functions の添字と一致しない場合
    """
    indices = sorted(set(S))
    if not indices or indices[0] < 0 or indices[-1] > 7:
        raise ParameterRangeError(f"S は {{0..7}} の空でない部分集合である必要があります: {indices}")
    if sorted(functions) != indices:
        raise ParameterRangeError(f"関数の添字 {sorted(functions)} が S={indices} と一致しません。")
    N = check_same_resolution(*functions.values())
    one = StepFunction3D.constant(1.0, N)
    table = FormTable3D([functions.get(j, one) for j in range(8)])
    return sum(float(table.values("theta3", k).sum()) for k in range(N))


def diagonal_forms(tree: ConvexTree, F: StepFunction3D) -> Tuple[float, float, float]:
    """Θ^(i)(F,…,F)（i = 1, 2, 3）"""
    table = FormTable3D((F,) * 8)
    return tuple(theta3d(tree, i, (F,) * 8, table).value for i in (1, 2, 3))


def tree_reduction_chain3d(tree: ConvexTree, functions: Sequence[StepFunction3D]) -> ChainAudit:
    """
    三次元の凸木について、Θ^(3)(F_0,…,F_7) から始まる証明図式を監査

    実線の矢印は第 i 変数のコーシー・シュワルツ、破線の矢印は三項のテレスコーピング恒等式。
    """
    N = _check_functions(functions)
    _check_tree_scale(tree, N)
    tables: Dict[Tuple[int, ...], FormTable3D] = {}

    def table_for(args):
        if args not in tables:
            tables[args] = FormTable3D(tuple(functions[j] for j in args))
        return tables[args]

    def theta(axis, args):
        return table_for(args).sum_over(tree.squares, f"theta{axis}").value

    def telescoping(args):
        return telescoping3d_residual(tree, tuple(functions[j] for j in args), table_for(args))

    scale = max(1.0, max(float(np.max(np.abs(F.values))) for F in functions) ** 8)
    return reduction_chain_audit(theta, telescoping, 3, tuple(range(8)), scale=scale)


def random_step_function3d(rng: np.random.Generator, N: int, nonnegative: bool = True) -> StepFunction3D:
    """乱数による三次元のステップ関数"""
    shape = (2 ** N,) * 3
    values = rng.random(shape) if nonnegative else rng.uniform(-1.0, 1.0, shape)
    return StepFunction3D(values)


def product_function3d(a: Sequence[float], b: Sequence[float], c: Sequence[float]) -> StepFunction3D:
    """F(x1,x2,x3) = a(x1) b(x2) c(x3)"""
    return StepFunction3D(np.einsum("i,j,k->ijk", np.asarray(a, float), np.asarray(b, float), np.asarray(c, float)))


def identity_summary(rng: np.random.Generator, N: int, trials: int) -> List[Dict]:
    """
    乱数の八つ組と凸木で三次元の恒等式と不等式を確認

    Returns:
        試行ごとの辞書（テレスコーピング残差、図式の最小余裕、L⁴ 評価の余裕）
    """
    rows = []
    for trial in range(trials):
        functions = [random_step_function3d(rng, N) for _ in range(8)]
        tree = random_tree3d(rng, N)
        table = FormTable3D(functions)
        residual = telescoping3d_residual(tree, functions, table)
        audit = tree_reduction_chain3d(tree, functions)
        lhs, rhs = box3_l4_check(functions[0], UNIT_CUBE)
        rows.append({
            "trial": trial,
            "cubes": len(tree),
            "telescoping_residual": residual,
            "chain_min_slack": audit.min_slack,
            "chain_passed": audit.passed,
            "l4_slack": rhs - lhs,
        })
    return rows
