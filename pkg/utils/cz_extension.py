"""ファイバーごとのカルデロン・ジグムント分解モジュール

各 x について関数 y ↦ G(x,y) の極大な悪い区間（平均が λ を超えるダイアディック区間）を求め、
G を良い部分 G̃ と、悪い区間上で平均 0 になる悪い部分 G − G̃ に分ける。
T_d(F, G − G̃) は例外集合 E の外で厳密に 0 になる。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import DEFAULT_MAX_WORKERS, DEFAULT_SEED, TOLERANCES
from utils.dyadic_core import DyadicInterval, StepFunction2D, check_same_resolution, lp_norm
from utils.errors import ExponentError, NegativeInputError, ParameterRangeError
from utils.sweep import run_in_batches, trend_slope
from utils.twisted_paraproduct import t_d

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FiberCZ:
    """ファイバーごとの CZ 分解の結果"""
    threshold: float
    intervals: Tuple[Tuple[DyadicInterval, ...], ...]  # x セルごとの極大な悪い区間
    exceptional: np.ndarray = field(repr=False)         # E のセルマスク
    good: StepFunction2D = field(repr=False)             # G̃
    capped_fibers: int = 0                               # ファイバー全体が悪い区間になった本数

    @property
    def exceptional_measure(self) -> float:
        return float(np.mean(self.exceptional))


def fiber_cz(G: StepFunction2D, threshold: float) -> FiberCZ:
    """
    ファイバーごとの CZ 分解

    粗いスケールから順に走査し、まだ覆われていない区間のうち平均が λ を超えるものを
    極大な悪い区間とする。ファイバー全体の平均が λ を超える場合は [0,1) 全体が悪い区間になり、
    そのファイバーでは ‖G̃‖_∞ ≤ 2λ は保証されない。

    Args:
        G: 非負のステップ関数
        threshold: λ > 0

    Returns:
        FiberCZ

    Raises:
        ParameterRangeError: λ ≤ 0 の場合
        NegativeInputError: G が負の値を含む場合
    """
    if not threshold > 0:
        raise ParameterRangeError(f"しきい値 λ は正である必要があります: {threshold}")
    if not G.is_nonnegative():
        raise NegativeInputError("CZ 分解には非負の関数が必要です。")
    N = G.N
    n = 2 ** N
    values = G.values
    covered = np.zeros((n, n), dtype=bool)
    good = np.array(values, dtype=float)
    found: List[List[DyadicInterval]] = [[] for _ in range(n)]
    capped = 0
    for k in range(N + 1):
        m = 2 ** (N - k)
        means = values.reshape(n, 2 ** k, m).mean(axis=2)
        already = covered.reshape(n, 2 ** k, m)[:, :, 0]
        new_bad = (means > threshold) & ~already
        if not new_bad.any():
            continue
        if k == 0:
            capped = int(new_bad.sum())
        for row, index in zip(*np.nonzero(new_bad)):
            found[row].append(DyadicInterval(k, int(index)))
        cells = np.repeat(new_bad, m, axis=1)
        good = np.where(cells, np.repeat(means, m, axis=1), good)
        covered |= cells
    covered.setflags(write=False)
    result = FiberCZ(
        threshold=float(threshold),
        intervals=tuple(tuple(row) for row in found),
        exceptional=covered,
        good=StepFunction2D(good),
        capped_fibers=capped,
    )
    logger.debug("[CZ分解] λ=%g, |E|=%.4f, 全体が悪いファイバー %d 本", threshold, result.exceptional_measure, capped)
    return result


def vanishing_residual(F: StepFunction2D, G: StepFunction2D, threshold: float,
                       decomposition: Optional[FiberCZ] = None) -> float:
    """
    E の外での max |T_d(F, G − G̃)|（厳密には 0）

    Returns:
        残差（E が全体の場合は 0）
    """
    check_same_resolution(F, G)
    decomposition = decomposition or fiber_cz(G, threshold)
    bad = G - decomposition.good
    output = t_d(F, bad).values
    outside = ~decomposition.exceptional
    if not outside.any():
        return 0.0
    return float(np.max(np.abs(output[outside])))


@dataclass(frozen=True)
class InclusionAudit:
    """{|T_d(F,G)| > α} ⊆ E ∪ {|T_d(F,G̃)| > α} の確認結果"""
    superlevel_measure: float
    exceptional_measure: float
    good_superlevel_measure: float
    violations: int


def superlevel_inclusion(F: StepFunction2D, G: StepFunction2D, level: float = 1.0,
                         threshold: float = 1.0) -> InclusionAudit:
    """
    超過集合の包含をセルごとに確認

    丸め誤差の分だけ G̃ 側の水準を下げて比較する。
    """
    decomposition = fiber_cz(G, threshold)
    full = np.abs(t_d(F, G).values)
    reduced = np.abs(t_d(F, decomposition.good).values)
    slack = TOLERANCES["vanishing"] * max(1.0, float(full.max()))
    superlevel = full > level
    allowed = decomposition.exceptional | (reduced > level - slack)
    violations = int(np.count_nonzero(superlevel & ~allowed))
    return InclusionAudit(
        superlevel_measure=float(np.mean(superlevel)),
        exceptional_measure=decomposition.exceptional_measure,
        good_superlevel_measure=float(np.mean(reduced > level)),
        violations=violations,
    )


def random_endpoint_pair(rng: np.random.Generator, N: int, p: float) -> Tuple[StepFunction2D, StepFunction2D]:
    """‖F‖_p = ‖G‖₁ = 1 に正規化した乱数の組（G は裾の重い分布）"""
    n = 2 ** N
    F = StepFunction2D(rng.random((n, n)))
    G = StepFunction2D(rng.exponential(size=(n, n)) ** 3)
    return F / lp_norm(F, p), G / lp_norm(G, 1)


@dataclass(frozen=True)
class EndpointReport:
    """弱型端点評価の実験結果"""
    p: float
    table: pd.DataFrame
    trend: float
    inclusion_violations: int


def weak_endpoint_experiment(p: float, trials: int, N_values: Union[int, Sequence[int]], seed: int = DEFAULT_SEED,
                             max_workers: int = DEFAULT_MAX_WORKERS, progress_callback=None) -> EndpointReport:
    """
    ‖F‖_p = ‖G‖₁ = 1 の乱数の組で |{|T_d(F,G)| > 1}| を測定

    Args:
        p: 2 < p < ∞
        trials: N ごとの試行回数
        N_values: 解像度、またはその列（整数一つなら単一の解像度）
        seed: 乱数シード
        max_workers: 並列ワーカー数
        progress_callback: 進捗コールバック関数 (message, fraction)

    Returns:
        EndpointReport（N ごとの最大・平均の測度、対数スケールの傾き、包含の違反数）

    Raises:
        ExponentError: p が範囲外の場合
    """
    if not 2.0 < p < math.inf:
        raise ExponentError(f"弱型端点の実験には 2 < p < ∞ が必要です: {p}")
    N_values = [N_values] if isinstance(N_values, int) else list(N_values)
    children = np.random.SeedSequence(seed).spawn(len(N_values) * trials)

    def run_trial(index: int) -> Dict:
        N = N_values[index // trials]
        rng = np.random.default_rng(children[index])
        F, G = random_endpoint_pair(rng, N, p)
        audit = superlevel_inclusion(F, G)
        return {"N": N, "measure": audit.superlevel_measure, "exceptional": audit.exceptional_measure,
                "violations": audit.violations}

    results = run_in_batches(run_trial, len(children), max_workers, progress_callback, label="弱型端点")
    frame = pd.DataFrame(results)
    table = frame.groupby("N", sort=True).agg(
        max_measure=("measure", "max"),
        mean_measure=("measure", "mean"),
        max_exceptional=("exceptional", "max"),
    ).reset_index()
    trend = trend_slope(table["N"].tolist(), table["max_measure"].tolist())
    violations = int(frame["violations"].sum())
    logger.info("[弱型端点] p=%g 傾き %.4f 違反 %d", p, trend, violations)
    return EndpointReport(p=p, table=table, trend=trend, inclusion_violations=violations)
