import json

import pytest

from app import EXIT_OK, EXIT_USAGE, main


def test_identities_command(capsys):
    assert main(["identities", "--N", "3", "--seed", "7", "--trials", "1", "--L", "7"]) == EXIT_OK
    output = capsys.readouterr().out
    assert output.splitlines()[0] == "check,trial,value,tolerance,passed"


def test_sweep_prints_csv(capsys):
    assert main(["sweep", "--N", "2", "--trials", "2", "--grid", "3:3,inf:2"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "p,q,ratio,trend"
    assert len(lines) == 3
    assert lines[2].startswith("inf,2.0,")


def test_sweep_json_output(tmp_path):
    out = tmp_path / "sweep.json"
    assert main(["sweep", "--N-values", "2,3", "--trials", "1", "--grid", "3:3", "--format", "json",
                 "--out", str(out)]) == EXIT_OK
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["config"]["N_values"] == [2, 3]
    assert payload["rows"][0]["p"] == 3.0


def test_sweep_svg_needs_output_path(capsys):
    assert main(["sweep", "--N", "2", "--trials", "1", "--grid", "3:3", "--format", "svg"]) == EXIT_USAGE
    assert "--out" in capsys.readouterr().err


def test_sweep_svg_written(tmp_path):
    out = tmp_path / "region.svg"
    assert main(["sweep", "--N", "2", "--trials", "1", "--grid", "3:3", "--format", "svg",
                 "--out", str(out)]) == EXIT_OK
    assert out.read_text(encoding="utf-8").lstrip().startswith("<?xml")


def test_counterexamples_command(capsys):
    assert main(["counterexamples", "--q", "2", "--nmax", "8"]) == EXIT_OK
    output = capsys.readouterr().out
    assert output.startswith("# growth\n")
    assert "# corner\n" in output
    assert "# khintchine\n" in output


def test_counterexamples_csv_files(tmp_path):
    out = tmp_path / "ce.csv"
    assert main(["counterexamples", "--q", "inf", "--nmax", "3", "--out", str(out)]) == EXIT_USAGE
    assert main(["counterexamples", "--q", "4", "--nmax", "3", "--out", str(out)]) == EXIT_OK
    assert sorted(path.name for path in tmp_path.iterdir()) == ["ce_corner.csv", "ce_growth.csv", "ce_khintchine.csv"]


@pytest.mark.parametrize("argv", [
    ["identities", "--bogus"],
    ["dim3", "--N", "9"],
    ["counterexamples", "--q", "0.5"],
    ["decompose", "--exponents", "3,3"],
    ["sweep", "--grid", "3-3"],
    [],
])
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE


def test_help_exits_cleanly():
    assert main(["sweep", "--help"]) == EXIT_OK


@pytest.mark.parametrize("argv", [
    ["decompose", "--N", "3", "--trials", "1"],
    ["cz", "--N", "3", "--trials", "2"],
    ["continuous", "--L", "7", "--trials", "2"],
    ["dim3", "--N", "2", "--trials", "1"],
])
def test_other_commands_succeed(argv, capsys):
    assert main(argv) == EXIT_OK
    assert capsys.readouterr().out


def test_dim3_passes(capsys):
    assert main(["dim3", "--N", "2", "--trials", "2", "--format", "json"]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["dim3"]) == 2


def test_sweep_csv_file_matches_stdout(tmp_path, capsys):
    argv = ["sweep", "--N", "2", "--trials", "2", "--grid", "3:3,inf:2"]
    assert main(argv) == EXIT_OK
    printed = capsys.readouterr().out
    out = tmp_path / "sweep.csv"
    assert main(argv + ["--out", str(out)]) == EXIT_OK
    assert out.read_text(encoding="utf-8") == printed


def test_single_table_csv_file(tmp_path):
    out = tmp_path / "identities.csv"
    assert main(["identities", "--N", "3", "--seed", "7", "--trials", "1", "--L", "7", "--out", str(out)]) == EXIT_OK
    assert out.read_text(encoding="utf-8").splitlines()[0] == "check,trial,value,tolerance,passed"
