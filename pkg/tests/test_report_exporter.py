import json
import math
from io import BytesIO

import pandas as pd
from openpyxl import load_workbook

from config import INFINITY, SweepConfig
from utils.report_exporter import (
    create_workbook,
    export_excel,
    export_excel_in_memory,
    frame_to_records,
    read_sweep_json,
    records_to_frame,
    render_region_svg,
    sweep_report_csv,
    sweep_report_frame,
    sweep_report_json,
    write_csv,
)
from utils.sweep import SweepReport


def _report():
    table = pd.DataFrame([
        {"p": 3.0, "q": 3.0, "ratio": 0.8125, "trend": 0.01, "trials": 6},
        {"p": INFINITY, "q": 2.0, "ratio": 1.2, "trend": 0.35, "trials": 6},
    ])
    return SweepReport(table=table, config=SweepConfig(grid=((3.0, 3.0), (INFINITY, 2.0))))


def test_csv_columns_and_values():
    lines = sweep_report_csv(_report()).splitlines()
    assert lines[0] == "p,q,ratio,trend"
    assert lines[1] == "3.0,3.0,0.8125,0.01"
    assert lines[2].startswith("inf,2.0,")


def test_json_round_trip_with_infinity():
    report = _report()
    text = sweep_report_json(report)
    payload = json.loads(text)
    assert payload["config"]["grid"][1] == ["inf", 2.0]
    restored = read_sweep_json(text)
    assert math.isinf(restored.loc[1, "p"])
    assert restored["ratio"].tolist() == report.table["ratio"].tolist()


def test_outputs_are_byte_identical():
    assert sweep_report_csv(_report()) == sweep_report_csv(_report())
    assert sweep_report_json(_report()) == sweep_report_json(_report())


def test_svg_is_deterministic(tmp_path):
    first = render_region_svg(_report(), str(tmp_path / "a.svg"))
    second = render_region_svg(_report(), str(tmp_path / "b.svg"))
    with open(first, "rb") as a, open(second, "rb") as b:
        content = a.read()
        assert content == b.read()
    assert b"<svg" in content


def test_frame_records_encode_non_finite_values():
    frame = pd.DataFrame({"p": [INFINITY, 2.0], "value": [float("nan"), -INFINITY]})
    records = frame_to_records(frame)
    assert records[0] == {"p": "inf", "value": "nan"}
    assert records[1] == {"p": 2.0, "value": "-inf"}
    json.dumps(records)
    restored = records_to_frame(records)
    assert math.isinf(restored.loc[0, "p"]) and restored.loc[1, "value"] < 0


def test_workbook_has_one_sheet_per_table():
    frames = {"sweep": _report().table, "summary": pd.DataFrame({"check": ["a"], "passed": [True]})}
    workbook = create_workbook(frames)
    assert workbook.sheetnames == ["sweep", "summary"]
    sheet = workbook["sweep"]
    assert sheet.cell(row=1, column=1).value == "=== sweep ==="
    assert sheet.cell(row=3, column=1).value == "p"
    assert sheet.cell(row=3, column=1).font.bold
    assert sheet.cell(row=5, column=1).value == "inf"


def test_excel_in_memory_and_on_disk(tmp_path):
    frames = {"sweep": _report().table}
    workbook = load_workbook(BytesIO(export_excel_in_memory(frames)))
    assert "Sheet" not in workbook.sheetnames
    progress = []
    path = export_excel(frames, str(tmp_path / "report.xlsx"), lambda message, fraction: progress.append(fraction))
    assert load_workbook(path).sheetnames == ["sweep"]
    assert progress[-1] == 1.0


def test_write_csv_matches_string_output(tmp_path):
    out = tmp_path / "sweep.csv"
    assert write_csv(sweep_report_frame(_report()), str(out)) == str(out)
    assert out.read_bytes().decode("utf-8") == sweep_report_csv(_report())
