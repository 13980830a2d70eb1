"""ツイステッド・パラプロダクト数値実験ツール - コマンドラインのメインアプリ

サブコマンド:
    identities       恒等式と不等式のスイート（失敗があれば終了コード 1）
    sweep            指数グリッドのスイープ（CSV 列: p,q,ratio,trend）
    counterexamples  端点での反例の比の表
    decompose        ストッピングタイム分解と木の和の評価
    cz               ファイバーごとの CZ 分解と弱型端点の実験
    continuous       連続モデルの記号恒等式と JSW 二乗関数
    dim3             三次元の恒等式と証明図式の監査

終了コード: 0 成功、1 性質の検査に失敗、2 使い方の誤りまたは入力エラー
"""
import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from config import (
    DEFAULT_GRID,
    DEFAULT_N,
    DEFAULT_SEED,
    DEFAULT_TRIALS,
    MAX_N_3D,
    TOLERANCES,
    load_sweep_config,
    parse_exponent,
    parse_grid,
)
from utils.continuous_model import build_mollifiers, jsw_ratio_report, psi_symbol_bounds, support_identity_residuals
from utils.counterexamples import corner_value, growth_report, khintchine_constants
from utils.decomposition import leaf_doubling_audit, resummation_residual, summation_bound_report, triple_decomposition
from utils.cz_extension import weak_endpoint_experiment
from utils.dyadic_core import random_step_function
from utils.higher_dim import identity_summary
from utils.identity_suite import run_identity_suite
from utils.report_exporter import (
    export_excel,
    frame_to_records,
    render_region_svg,
    sweep_report_csv,
    sweep_report_frame,
    sweep_report_json,
    write_csv,
    write_text,
)
from utils.sweep import run_sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PROPERTY_FAILURE = 1
EXIT_USAGE = 2

FORMATS = ("csv", "json", "svg", "xlsx")

SWEEP_EPILOG = """CSV の列:
  p      入力 F の指数（inf は ∞）
  q      入力 G の指数
  ratio  ‖T_d(F,G)‖_{pq/(p+q)} / (‖F‖_p ‖G‖_q) の観測最大値（全 N）
  trend  N ごとの最大比の対数の N に対する傾き（0.1 未満なら有界とみなす）
"""


def _log_progress(message: str, fraction: float) -> None:
    logger.debug("[進捗] %s (%.0f%%)", message, fraction * 100)


def _add_common_arguments(parser: argparse.ArgumentParser, formats=("csv", "json", "xlsx")) -> None:
    parser.add_argument("--N", type=int, default=DEFAULT_N, help=f"解像度（既定 {DEFAULT_N}）")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"乱数シード（既定 {DEFAULT_SEED}）")
    parser.add_argument("--trials", type=int, default=None, help="試行回数")
    parser.add_argument("--out", default=None, help="出力ファイル（省略時は標準出力）")
    parser.add_argument("--format", choices=formats, default="csv", help="出力形式")
    parser.add_argument("--verbose", action="store_true", help="デバッグログを表示")


def build_parser() -> argparse.ArgumentParser:
    """コマンドライン引数のパーサーを作成"""
    parser = argparse.ArgumentParser(
        prog="app.py",
        description="ダイアディック・連続ツイステッド・パラプロダクトの数値実験",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    identities = subparsers.add_parser("identities", help="恒等式スイートを実行")
    _add_common_arguments(identities)
    identities.add_argument("--L", type=int, default=8, help="連続モデルの格子 2^L（既定 8）")

    sweep = subparsers.add_parser(
        "sweep", help="指数グリッドのスイープ", epilog=SWEEP_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_common_arguments(sweep, formats=FORMATS)
    sweep.set_defaults(N=None, seed=None)
    sweep.add_argument("--grid", default=None, help=f"グリッド名または p:q,p:q 形式（既定 {DEFAULT_GRID}）")
    sweep.add_argument("--N-values", dest="N_values", default=None, help="解像度の列（例 4,5,6）")
    sweep.add_argument("--config", default=None, help="key=value 形式の設定ファイル")

    counterexamples = subparsers.add_parser("counterexamples", help="端点での反例")
    _add_common_arguments(counterexamples)
    counterexamples.add_argument("--q", default="2", help="第一の反例の指数 q（1 ≤ q < ∞）")
    counterexamples.add_argument("--nmax", type=int, default=8, help="n の上限（既定 8）")

    decompose = subparsers.add_parser("decompose", help="ストッピングタイム分解")
    _add_common_arguments(decompose)
    decompose.add_argument("--exponents", default="3,3,3", help="p,q,r（1/p+1/q+1/r=1、既定 3,3,3）")

    cz = subparsers.add_parser("cz", help="CZ 分解と弱型端点の実験")
    _add_common_arguments(cz)
    cz.add_argument("--p", type=float, default=3.0, help="F の指数（2 < p < ∞、既定 3）")
    cz.add_argument("--N-values", dest="N_values", default=None, help="解像度の列（既定 N, N+1）")

    continuous = subparsers.add_parser("continuous", help="連続モデル")
    _add_common_arguments(continuous)
    continuous.add_argument("--L", type=int, default=10, help="格子 2^L（既定 10）")
    continuous.add_argument("--p", type=float, default=2.0, help="JSW 二乗関数の比の指数（既定 2）")

    dim3 = subparsers.add_parser("dim3", help="三次元の恒等式")
    _add_common_arguments(dim3)
    dim3.set_defaults(N=2)
    return parser


def _parse_int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as error:
        raise ValueError(f"整数のリストを解釈できません: {text}") from error


def emit_frames(frames: Dict[str, pd.DataFrame], output_format: str, out: Optional[str]) -> None:
    """
    表を指定の形式で出力

    csv は標準出力なら表ごとに「# 表名」の行を付け、ファイルなら表ごとに
    <stem>_<表名>.csv に分ける（表が一つならそのままのパス）。
    """
    if output_format == "xlsx":
        if not out:
            raise ValueError("xlsx 形式には --out が必要です。")
        export_excel(frames, out, progress_callback=_log_progress)
        return
    if output_format == "json":
        text = json.dumps({name: frame_to_records(frame) for name, frame in frames.items()},
                          ensure_ascii=False, sort_keys=True, indent=2)
        _write_or_print(text + "\n", out)
        return
    if out and len(frames) > 1:
        path = Path(out)
        for name, frame in frames.items():
            target = path.with_name(f"{path.stem}_{name}{path.suffix or '.csv'}")
            write_csv(frame, str(target))
        return
    if out:
        write_csv(next(iter(frames.values())), out)
        return
    parts = []
    for name, frame in frames.items():
        if len(frames) > 1:
            parts.append(f"# {name}\n")
        parts.append(frame.to_csv(index=False, lineterminator="\n"))
    sys.stdout.write("".join(parts))


def _write_or_print(text: str, out: Optional[str]) -> None:
    if out:
        write_text(text, out)
    else:
        sys.stdout.write(text)


def command_identities(args) -> int:
    trials = args.trials or 3
    frame = run_identity_suite(args.N, args.seed, trials=trials, L=args.L, progress_callback=_log_progress)
    emit_frames({"identities": frame}, args.format, args.out)
    failed = frame[~frame["passed"]]
    for row in failed.itertuples():
        logger.error("[恒等式] %s (試行 %d): %.3e > %.3e", row.check, row.trial, row.value, row.tolerance)
    return EXIT_PROPERTY_FAILURE if len(failed) else EXIT_OK


def command_sweep(args) -> int:
    overrides = {
        "N": args.N,
        "seed": args.seed,
        "trials": args.trials,
        "grid": parse_grid(args.grid) if args.grid else None,
        "N_values": _parse_int_list(args.N_values) if args.N_values else None,
    }
    if args.N is not None and args.N_values is None:
        overrides["N_values"] = (args.N, args.N + 1, args.N + 2)
    config = load_sweep_config(args.config, overrides)
    if args.format in ("svg", "xlsx") and not args.out:
        raise ValueError(f"{args.format} 形式には --out が必要です。")
    report = run_sweep(config, progress_callback=_log_progress)
    if args.format == "csv":
        if args.out:
            write_csv(sweep_report_frame(report), args.out)
        else:
            sys.stdout.write(sweep_report_csv(report))
    elif args.format == "json":
        _write_or_print(sweep_report_json(report) + "\n", args.out)
    elif args.format == "svg":
        render_region_svg(report, args.out)
    else:
        export_excel({"sweep": report.table}, args.out, progress_callback=_log_progress)
    return EXIT_OK


def command_counterexamples(args) -> int:
    q = parse_exponent(args.q)
    growth = growth_report(args.nmax, q)
    corners = pd.DataFrame(
        [{"n": n, "N": 2 * n, "corner_value": corner_value(n, 2 * n)} for n in range(1, 4)]
    )
    frames = {"growth": growth, "corner": corners}
    if not math.isinf(q):
        frames["khintchine"] = khintchine_constants(args.nmax, q)
    emit_frames(frames, args.format, args.out)
    return EXIT_OK


def command_decompose(args) -> int:
    exponents = [parse_exponent(part) for part in args.exponents.split(",")]
    if len(exponents) != 3:
        raise ValueError(f"指数は p,q,r の三つを指定してください: {args.exponents}")
    rng = np.random.default_rng(args.seed)
    trials = args.trials or 3
    rows = []
    levels = []
    passed = True
    for trial in range(trials):
        F, G, H = (random_step_function(rng, args.N) for _ in range(3))
        decomposition = triple_decomposition(F, G, H)
        residual = resummation_residual(F, G, H, decomposition)
        audit = leaf_doubling_audit(decomposition, F, G, H)
        report = summation_bound_report(F, G, H, *exponents)
        scale = max(1.0, float(np.max(F.values) * np.max(G.values) * np.max(H.values)))
        ok = residual <= TOLERANCES["identity"] * scale and audit.passed
        passed = passed and ok
        rows.append({
            "trial": trial,
            "trees": len(decomposition.entries),
            "resummation_residual": residual,
            "leaf_count": audit.leaf_count,
            "max_parent_ratio": audit.max_parent_ratio,
            "max_level_ratio": audit.max_level_ratio,
            "max_tree_ratio": audit.max_tree_ratio,
            "tree_ratio": report.tree_ratio,
            "min_ratio": report.min_ratio,
            "passed": ok,
        })
        levels.append(report.level_table.assign(trial=trial))
    emit_frames({"decomposition": pd.DataFrame(rows), "levels": pd.concat(levels, ignore_index=True)},
                args.format, args.out)
    return EXIT_OK if passed else EXIT_PROPERTY_FAILURE


def command_cz(args) -> int:
    N_values = _parse_int_list(args.N_values) if args.N_values else [args.N, args.N + 1]
    report = weak_endpoint_experiment(args.p, args.trials or 10, N_values, seed=args.seed,
                                      progress_callback=_log_progress)
    summary = pd.DataFrame([{"p": report.p, "trend": report.trend,
                             "inclusion_violations": report.inclusion_violations}])
    emit_frames({"endpoint": report.table, "summary": summary}, args.format, args.out)
    return EXIT_PROPERTY_FAILURE if report.inclusion_violations else EXIT_OK


def command_continuous(args) -> int:
    family = build_mollifiers(args.L)
    support = support_identity_residuals(family)
    support_frame = pd.DataFrame(
        [{"identity": name, "residual": value, "tolerance": TOLERANCES["lattice"],
          "passed": value <= TOLERANCES["lattice"]} for name, value in support.items()]
    )
    L_values = list(range(max(4, args.L - 3), args.L + 1))
    jsw = jsw_ratio_report(L_values, args.trials or 5, p=args.p, seed=args.seed)
    emit_frames({"support": support_frame, "psi_bounds": psi_symbol_bounds(family), "jsw": jsw},
                args.format, args.out)
    return EXIT_OK if support_frame["passed"].all() else EXIT_PROPERTY_FAILURE


def command_dim3(args) -> int:
    if not 1 <= args.N <= MAX_N_3D:
        raise ValueError(f"三次元の解像度は 1 ≤ N ≤ {MAX_N_3D} です: {args.N}")
    rng = np.random.default_rng(args.seed)
    frame = pd.DataFrame(identity_summary(rng, args.N, args.trials or 3))
    emit_frames({"dim3": frame}, args.format, args.out)
    ok = bool(frame["chain_passed"].all()) and bool((frame["telescoping_residual"] <= TOLERANCES["identity"]).all())
    return EXIT_OK if ok else EXIT_PROPERTY_FAILURE


COMMANDS = {
    "identities": command_identities,
    "sweep": command_sweep,
    "counterexamples": command_counterexamples,
    "decompose": command_decompose,
    "cz": command_cz,
    "continuous": command_continuous,
    "dim3": command_dim3,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    エントリーポイント

    Args:
        argv: コマンドライン引数（None なら sys.argv[1:]）

    Returns:
        終了コード
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as error:
        return EXIT_OK if error.code in (0, None) else EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except ValueError as error:
        sys.stderr.write(f"エラー: {error}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
