"""指数スイープモジュール

(p,q) ごとに ‖T_d(F,G)‖_{pq/(p+q)} / (‖F‖_p ‖G‖_q) の経験的な最大値を求め、
解像度 N に対する傾きで有界性を判定する。
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import INFINITY, TREND_SLOPE_LIMIT, SweepConfig
from utils.counterexamples import counterexample_linfty_lq
from utils.dyadic_core import StepFunction2D, lp_norm, random_step_function
from utils.errors import ExponentError
from utils.twisted_paraproduct import t_d

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["p", "q", "ratio", "trend"]


def run_in_batches(task: Callable[[int], object], count: int, max_workers: int,
                   progress_callback: Optional[Callable[[str, float], None]] = None,
                   label: str = "") -> List:
    """
    task(0..count−1) をバッチごとに並列実行

    完了した順に受け取った結果を添字の辞書に入れ、最後に添字順に並べて返す。

    Args:
        task: 添字を受け取る関数
        count: 実行回数
        max_workers: 同時に処理する数（バッチサイズ）
        progress_callback: 進捗コールバック関数 (message, fraction)
        label: 進捗表示のラベル

    Returns:
        添字順の結果リスト
    """
    results: Dict[int, object] = {}
    batch_size = max(1, max_workers)
    completed = 0
    index = 0
    while index < count:
        batch = list(range(index, min(index + batch_size, count)))
        index += len(batch)
        with ThreadPoolExecutor(max_workers=len(batch)) as executor:
            futures = {executor.submit(task, i): i for i in batch}
            for future in as_completed(futures):
                results[futures[future]] = future.result()
                completed += 1
                if progress_callback:
                    progress_callback(f"{label} {completed}/{count}", completed / count)
    logger.debug("[並列実行] %s: %d 件完了", label, completed)
    return [results[i] for i in sorted(results)]


def trend_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """
    log(y) の x に対する最小二乗の傾き

    正の値だけを使う。正の値が 2 つ未満なら 0 を返す。
    """
    points = [(float(x), float(y)) for x, y in zip(xs, ys) if y > 0 and math.isfinite(y)]
    if len(points) < 2:
        return 0.0
    x_values = np.array([x for x, _ in points])
    y_values = np.log(np.array([y for _, y in points]))
    if np.ptp(x_values) == 0:
        return 0.0
    slope, _ = np.polyfit(x_values, y_values, 1)
    return float(slope)


def output_exponent(p: float, q: float) -> float:
    """
    出力の指数 pq/(p+q)

    一方が ∞ のときはもう一方、両方 ∞ なら ∞ と解釈する。
    """
    for exponent in (p, q):
        if not 1.0 <= exponent <= INFINITY:
            raise ExponentError(f"指数は 1 以上である必要があります: ({p}, {q})")
    if math.isinf(p):
        return q
    if math.isinf(q):
        return p
    return p * q / (p + q)


def pair_ratio(F: StepFunction2D, G: StepFunction2D, p: float, q: float) -> float:
    """
    ‖T_d(F,G)‖_{pq/(p+q)} / (‖F‖_p ‖G‖_q)

    F または G が 0 なら 0 を返す。
    """
    r = output_exponent(p, q)
    denominator = lp_norm(F, p) * lp_norm(G, q)
    if denominator == 0.0:
        return 0.0
    return lp_norm(t_d(F, G), r) / denominator


def _random_pair(rng: np.random.Generator, N: int) -> Tuple[StepFunction2D, StepFunction2D]:
    coarse = int(rng.integers(1, N + 1))
    return (random_step_function(rng, N, coarse_scale=coarse),
            random_step_function(rng, N, coarse_scale=int(rng.integers(1, N + 1))))


def norm_ratio_search(p: float, q: float, config: SweepConfig, N: Optional[int] = None,
                      seed: Optional[int] = None) -> float:
    """
    最良定数の経験的な下界を探索

    乱数の非負の組を config.trials 個評価し、最良の組から貪欲な座標上昇
    （セルの値を 0, 1/2 倍, 2 倍に変えて比が増えれば採用）を config.optimizer_steps 回行う。

    Args:
        p, q: 入力の指数
        config: スイープ設定
        N: 解像度（省略時は config.N）
        seed: 乱数シード（省略時は config.seed）

    Returns:
        観測した比の最大値
    """
    resolution = config.N if N is None else N
    rng = np.random.default_rng(config.seed if seed is None else seed)
    best_ratio = -1.0
    best_pair = None
    for _ in range(config.trials):
        F, G = _random_pair(rng, resolution)
        ratio = pair_ratio(F, G, p, q)
        if ratio > best_ratio:
            best_ratio, best_pair = ratio, (F, G)
    F_values, G_values = (np.array(best_pair[0].values), np.array(best_pair[1].values))
    size = 2 ** resolution
    for _ in range(config.optimizer_steps):
        target = F_values if rng.random() < 0.5 else G_values
        cell = (int(rng.integers(size)), int(rng.integers(size)))
        factor = float(rng.choice([0.0, 0.5, 2.0]))
        previous = target[cell]
        target[cell] = previous * factor if factor > 0 else 0.0
        ratio = pair_ratio(StepFunction2D(F_values), StepFunction2D(G_values), p, q)
        if ratio > best_ratio:
            best_ratio = ratio
        else:
            target[cell] = previous
    return max(best_ratio, 0.0)


def counterexample_ratio_sequence(n_values: Sequence[int], p: float = INFINITY, q: float = 2.0) -> List[float]:
    """第一の反例 (n, N=n) を入力とした比の列"""
    ratios = []
    for n in n_values:
        F, G = counterexample_linfty_lq(n, n)
        ratios.append(pair_ratio(F, G, p, q))
    return ratios


@dataclass(frozen=True)
class SweepReport:
    """(p,q) ごとの最大比・試行回数・N に対する傾き"""
    table: pd.DataFrame = field(repr=False)
    config: SweepConfig

    @property
    def bounded(self) -> Dict[Tuple[float, float], bool]:
        return {(row.p, row.q): row.trend < TREND_SLOPE_LIMIT for row in self.table.itertuples()}

    def csv_frame(self) -> pd.DataFrame:
        return self.table[CSV_COLUMNS]


def run_sweep(config: SweepConfig, progress_callback=None) -> SweepReport:
    """
    指数グリッド全体のスイープ

    (p,q) と N の組ごとに独立したシードで探索し、N ごとの最大比から傾きを求める。

    Args:
        config: スイープ設定
        progress_callback: 進捗コールバック関数 (message, fraction)

    Returns:
        SweepReport（行は config.grid の順）
    """
    points = list(config.grid)
    N_values = list(config.N_values)
    children = np.random.SeedSequence(config.seed).spawn(len(points) * len(N_values))
    seeds = [int(child.generate_state(1)[0]) for child in children]

    def run_point(index: int) -> float:
        p, q = points[index // len(N_values)]
        N = N_values[index % len(N_values)]
        return norm_ratio_search(p, q, config, N=N, seed=seeds[index])

    ratios = run_in_batches(run_point, len(seeds), config.max_workers, progress_callback, label="スイープ")
    rows = []
    for position, (p, q) in enumerate(points):
        per_N = ratios[position * len(N_values): (position + 1) * len(N_values)]
        trend = trend_slope(N_values, per_N)
        rows.append({
            "p": p,
            "q": q,
            "ratio": max(per_N),
            "trend": trend,
            "trials": config.trials * len(N_values),
            **{f"ratio_N{N}": value for N, value in zip(N_values, per_N)},
        })
        logger.info("[スイープ] (p,q)=(%g,%g) 最大比 %.4f 傾き %.4f", p, q, max(per_N), trend)
    return SweepReport(table=pd.DataFrame(rows), config=config)
