"""レポート出力モジュール（CSV・JSON・SVG・Excel）"""
import json
import math
from io import BytesIO
from typing import Callable, Dict, List, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
from openpyxl import Workbook  # noqa: E402
from openpyxl.styles import Font, PatternFill  # noqa: E402
from openpyxl.utils import get_column_letter  # noqa: E402

from config import TREND_SLOPE_LIMIT  # noqa: E402
from utils.sweep import CSV_COLUMNS, SweepReport  # noqa: E402

# 領域図の基準となる点（(1/p, 1/q) 座標）
REGION_POINTS = {
    "A": (0.5, 0.0),
    "B": (0.5, 0.5),
    "C": (0.0, 0.5),
    "D": (0.25, 0.5),
    "E": (0.5, 0.25),
}

# 有界・非有界の色
BOUNDED_COLOR = "#4C9F70"
UNBOUNDED_COLOR = "#C8553D"

# SVG の出力を実行ごとに同一にするための設定
SVG_HASH_SALT = "twisted-paraproduct"


def _encode_float(value: float):
    """JSON で表せない値（∞, NaN）を文字列にする"""
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    return value


def _decode_float(value):
    if isinstance(value, str) and value in ("inf", "-inf", "nan"):
        return float(value)
    return value


def frame_to_records(frame: pd.DataFrame) -> List[Dict]:
    """DataFrame を JSON 用のレコードのリストに変換"""
    records = []
    for row in frame.to_dict(orient="records"):
        records.append({str(key): _encode_float(_to_python(value)) for key, value in row.items()})
    return records


def _to_python(value):
    if hasattr(value, "item"):
        return value.item()
    return value


def records_to_frame(records: List[Dict]) -> pd.DataFrame:
    """frame_to_records の逆変換"""
    return pd.DataFrame([{key: _decode_float(value) for key, value in row.items()} for row in records])


def write_csv(frame: pd.DataFrame, output_path: str) -> str:
    """
    DataFrame を CSV で保存

    Args:
        frame: 出力するデータフレーム
        output_path: 出力ファイルパス

    Returns:
        出力ファイルパス
    """
    frame.to_csv(output_path, index=False, lineterminator="\n")
    return output_path


def sweep_report_frame(report: SweepReport) -> pd.DataFrame:
    """CSV に出す列 p,q,ratio,trend だけの表"""
    return report.table[CSV_COLUMNS]


def sweep_report_csv(report: SweepReport) -> str:
    """SweepReport の CSV 文字列（列 p,q,ratio,trend）"""
    return sweep_report_frame(report).to_csv(index=False, lineterminator="\n")


def sweep_report_json(report: SweepReport) -> str:
    """
    SweepReport の JSON 文字列

    キーを整列し、浮動小数点数は repr で書き出すので読み戻すと同じ値になる。
    """
    config = report.config
    payload = {
        "config": {
            "N": config.N,
            "N_values": list(config.N_values),
            "trials": config.trials,
            "seed": config.seed,
            "grid": [[_encode_float(p), _encode_float(q)] for p, q in config.grid],
            "optimizer_steps": config.optimizer_steps,
        },
        "rows": frame_to_records(report.table),
    }
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2)


def read_sweep_json(text: str) -> pd.DataFrame:
    """sweep_report_json の出力から表を復元"""
    return records_to_frame(json.loads(text)["rows"])


def write_text(text: str, output_path: str) -> str:
    with open(output_path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)
    return output_path


def _inverse(exponent: float) -> float:
    return 0.0 if math.isinf(exponent) else 1.0 / exponent


def render_region_svg(report: SweepReport, output_path: str) -> str:
    """
    (1/p, 1/q) 平面の領域図を SVG で保存

    単位正方形、三角形 ABC、点 D, E を描き、スイープした点を
    有界（傾き < しきい値）かどうかで色分けする。
    """
    plt.rcParams["svg.hashsalt"] = SVG_HASH_SALT
    figure, axes = plt.subplots(figsize=(5, 5))
    axes.plot([0, 1, 1, 0, 0], [0, 0, 1, 1, 0], color="black", linewidth=1)
    triangle = [REGION_POINTS[name] for name in ("A", "B", "C", "A")]
    axes.fill([x for x, _ in triangle], [y for _, y in triangle], color="#DDDDDD", zorder=0)
    axes.plot([x for x, _ in triangle], [y for _, y in triangle], color="gray", linewidth=1)
    for name, (x, y) in REGION_POINTS.items():
        axes.annotate(name, (x, y), textcoords="offset points", xytext=(4, 4), fontsize=9)
        axes.plot(x, y, marker="o", markersize=3, color="black")
    for row in report.table.itertuples():
        color = BOUNDED_COLOR if row.trend < TREND_SLOPE_LIMIT else UNBOUNDED_COLOR
        axes.scatter(_inverse(row.p), _inverse(row.q), color=color, s=40, zorder=3)
    axes.set_xlim(-0.05, 1.05)
    axes.set_ylim(-0.05, 1.05)
    axes.set_xlabel("1/p")
    axes.set_ylabel("1/q")
    axes.set_aspect("equal")
    figure.savefig(output_path, format="svg", metadata={"Date": None})
    plt.close(figure)
    return output_path


def _fill_sheet(ws, frame: pd.DataFrame, title: Optional[str] = None) -> None:
    row = 1
    if title:
        ws.cell(row=row, column=1, value=f"=== {title} ===")
        row += 2
    header_fill = PatternFill(start_color="DDEBF7", end_color="DDEBF7", fill_type="solid")
    for col_idx, header in enumerate(frame.columns, start=1):
        cell = ws.cell(row=row, column=col_idx, value=str(header))
        cell.font = Font(bold=True)
        cell.fill = header_fill
    row += 1
    for record in frame.itertuples(index=False):
        for col_idx, value in enumerate(record, start=1):
            value = _to_python(value)
            ws.cell(row=row, column=col_idx, value=_encode_float(value) if isinstance(value, float) else value)
        row += 1
    for col_idx, header in enumerate(frame.columns, start=1):
        ws.column_dimensions[get_column_letter(col_idx)].width = max(12, len(str(header)) + 4)


def create_workbook(frames: Dict[str, pd.DataFrame],
                    progress_callback: Optional[Callable[[str, float], None]] = None) -> Workbook:
    """
    表ごとに一枚のシートを持つ Excel ブックを作成

    Args:
        frames: シート名からデータフレームへの対応
        progress_callback: 進捗コールバック関数

    Returns:
        Workbook
    """
    wb = Workbook()
    if "Sheet" in wb.sheetnames:
        wb.remove(wb["Sheet"])
    total = max(1, len(frames))
    for position, (name, frame) in enumerate(frames.items()):
        if progress_callback:
            progress_callback(f"シート「{name}」を作成中...", position / total)
        ws = wb.create_sheet(name[:31])
        _fill_sheet(ws, frame, title=name)
    return wb


def export_excel(frames: Dict[str, pd.DataFrame], output_path: str,
                 progress_callback: Optional[Callable[[str, float], None]] = None) -> str:
    """Excel ファイルとして保存"""
    wb = create_workbook(frames, progress_callback)
    if progress_callback:
        progress_callback("Excelファイルを保存中...", 0.9)
    wb.save(output_path)
    if progress_callback:
        progress_callback("Excelファイルの作成が完了しました", 1.0)
    return output_path


def export_excel_in_memory(frames: Dict[str, pd.DataFrame]) -> bytes:
    """Excel ファイルをメモリ上で作成（BytesIO を使用）"""
    output = BytesIO()
    create_workbook(frames).save(output)
    data = output.getvalue()
    output.close()
    return data
