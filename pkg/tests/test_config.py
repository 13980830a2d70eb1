import math
import os

import pytest

from config import (
    DEFAULT_GRID,
    EXPONENT_GRIDS,
    INFINITY,
    SweepConfig,
    get_grid_config,
    load_sweep_config,
    parse_exponent,
    parse_grid,
)
from utils.errors import ConfigError


def test_unknown_grid_falls_back_to_default():
    assert get_grid_config("missing") == EXPONENT_GRIDS[DEFAULT_GRID]
    assert get_grid_config("acceptance")[-1] == (INFINITY, 2.0)


@pytest.mark.parametrize("text, expected", [("3", 3.0), (" 2.5 ", 2.5), ("inf", INFINITY), ("∞", INFINITY)])
def test_parse_exponent(text, expected):
    assert parse_exponent(text) == expected


@pytest.mark.parametrize("text", ["0.5", "abc", ""])
def test_parse_exponent_rejects(text):
    with pytest.raises(ConfigError):
        parse_exponent(text)


def test_parse_grid():
    assert parse_grid("symmetric") == EXPONENT_GRIDS["symmetric"]
    assert parse_grid("3:3, inf:2,") == [(3.0, 3.0), (INFINITY, 2.0)]
    for bad in ("3-3", " , "):
        with pytest.raises(ConfigError):
            parse_grid(bad)


def test_load_without_file_uses_defaults():
    config = load_sweep_config()
    assert config == SweepConfig()


def test_load_from_file_and_overrides(tmp_path):
    path = tmp_path / "sweep.env"
    path.write_text("N=5\nN_VALUES=3,4\nTRIALS=9\nGRID=3:3,inf:2\nOPTIMIZER_STEPS=0\n", encoding="utf-8")
    before = dict(os.environ)
    config = load_sweep_config(str(path), overrides={"trials": 2, "seed": None})
    assert dict(os.environ) == before
    assert config.N == 5
    assert config.N_values == (3, 4)
    assert config.trials == 2
    assert config.seed == SweepConfig().seed
    assert config.optimizer_steps == 0
    assert math.isinf(config.grid[1][0])


def test_load_rejects_unknown_key(tmp_path):
    path = tmp_path / "sweep.env"
    path.write_text("N=4\nCOLOR=blue\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_sweep_config(str(path))


def test_load_rejects_bad_integer(tmp_path):
    path = tmp_path / "sweep.env"
    path.write_text("TRIALS=many\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_sweep_config(str(path))


@pytest.mark.parametrize("values", [
    {"N": 0},
    {"N_values": ()},
    {"trials": 0},
    {"optimizer_steps": -1},
    {"max_workers": 0},
    {"grid": ((0.5, 2.0),)},
])
def test_config_validation(values):
    with pytest.raises(ConfigError):
        SweepConfig(**values)
