"""設定管理モジュール"""
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from dotenv import dotenv_values

from utils.errors import ConfigError

# 既定の解像度（格子は 2^N × 2^N セル）
DEFAULT_N = 4

# 既定の乱数シード
DEFAULT_SEED = 7

# 既定の試行回数
DEFAULT_TRIALS = 20

# 貪欲法（座標上昇）のステップ数
DEFAULT_OPTIMIZER_STEPS = 40

# 並列ワーカー数（試行を同時に処理する数）
DEFAULT_MAX_WORKERS = 8

# 三次元の格子は 8^N セルになるため上限を設ける
MAX_N_3D = 4

# 無限大の指数を表す番兵
INFINITY = math.inf

# 許容誤差（相対値、入力の大きさでスケールして使う）
TOLERANCES = {
    "identity": 1e-9,        # テレスコーピング恒等式・再和算など
    "vanishing": 1e-10,      # CZ 分解の厳密な消滅
    "oracle": 1e-12,         # 総当たりオラクルとの一致
    "symbol_identity": 1e-8, # 連続モデルの記号恒等式
    "lattice": 1e-12,        # 格子上のサポート恒等式
    "nonnegativity": 1e-12,  # 非負であるべき量の丸め誤差
    "single_tree": 1e-9,     # 単一木評価の定数 2 に対する余裕
}

# 単一木評価の定数
SINGLE_TREE_CONSTANT = 2.0

# N に対する傾き（対数スケール）の判定しきい値
TREND_SLOPE_LIMIT = 0.1

# 指数グリッドの設定
EXPONENT_GRIDS = {
    "default": [(3.0, 3.0), (4.0, 4.0), (2.5, 2.5), (4.0, 2.5)],
    "acceptance": [(3.0, 3.0), (4.0, 4.0), (2.5, 2.5), (4.0, 2.5), (INFINITY, 2.0)],
    "symmetric": [(3.0, 3.0), (4.0, 4.0), (2.5, 2.5), (4.0, 2.5), (2.5, 4.0), (1.5, 3.0), (3.0, 1.5)],
}

# デフォルトのグリッド名
DEFAULT_GRID = "default"

# 設定ファイルで使えるキー
CONFIG_KEYS = ("N", "N_VALUES", "TRIALS", "SEED", "GRID", "OPTIMIZER_STEPS", "MAX_WORKERS")


def get_grid_config(grid_name: str) -> List[Tuple[float, float]]:
    """
    指数グリッドを取得

    Args:
        grid_name: グリッド名

    Returns:
        (p, q) のリスト（未知の名前の場合はデフォルト）
    """
    return list(EXPONENT_GRIDS.get(grid_name, EXPONENT_GRIDS[DEFAULT_GRID]))


def parse_exponent(text: str) -> float:
    """指数を文字列から解釈（inf / ∞ は無限大）"""
    cleaned = str(text).strip().lower()
    if cleaned in ("inf", "infinity", "∞"):
        return INFINITY
    try:
        value = float(cleaned)
    except ValueError as error:
        raise ConfigError(f"指数を解釈できません: {text}") from error
    if not 1.0 <= value <= INFINITY:
        raise ConfigError(f"指数は 1 以上である必要があります: {text}")
    return value


def parse_grid(text: str) -> List[Tuple[float, float]]:
    """
    グリッド指定を解釈

    名前（default など）か、"3:3,4:2.5,inf:2" 形式の明示リストを受け付ける。
    """
    cleaned = str(text).strip()
    if cleaned in EXPONENT_GRIDS:
        return get_grid_config(cleaned)
    points = []
    for item in cleaned.split(","):
        if not item.strip():
            continue
        if ":" not in item:
            raise ConfigError(f"グリッドの要素は p:q 形式で指定してください: {item}")
        p_text, q_text = item.split(":", 1)
        points.append((parse_exponent(p_text), parse_exponent(q_text)))
    if not points:
        raise ConfigError("グリッドが空です。")
    return points


@dataclass(frozen=True)
class SweepConfig:
    """指数スイープの設定"""
    N: int = DEFAULT_N
    N_values: Tuple[int, ...] = (4, 5, 6)
    trials: int = DEFAULT_TRIALS
    seed: int = DEFAULT_SEED
    grid: Tuple[Tuple[float, float], ...] = field(default_factory=lambda: tuple(get_grid_config(DEFAULT_GRID)))
    optimizer_steps: int = DEFAULT_OPTIMIZER_STEPS
    max_workers: int = DEFAULT_MAX_WORKERS

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError(f"N は 1 以上である必要があります: {self.N}")
        if not self.N_values or min(self.N_values) < 1:
            raise ConfigError(f"N_values が不正です: {self.N_values}")
        if self.trials < 1:
            raise ConfigError(f"試行回数は 1 以上である必要があります: {self.trials}")
        if self.optimizer_steps < 0:
            raise ConfigError(f"最適化ステップ数が負です: {self.optimizer_steps}")
        if self.max_workers < 1:
            raise ConfigError(f"ワーカー数は 1 以上である必要があります: {self.max_workers}")
        for p, q in self.grid:
            if not (1.0 <= p <= INFINITY and 1.0 <= q <= INFINITY):
                raise ConfigError(f"指数が範囲外です: ({p}, {q})")


def _parse_int(key: str, text: str) -> int:
    try:
        return int(str(text).strip())
    except ValueError as error:
        raise ConfigError(f"{key} は整数で指定してください: {text}") from error


def load_sweep_config(path: Optional[str] = None, overrides: Optional[Dict] = None) -> SweepConfig:
    """
    設定ファイルと CLI 引数から SweepConfig を作成

    設定ファイルは .env と同じ key=value 形式。値はプロセスの環境変数には
    書き込まない。CLI 引数（overrides）がファイルの値より優先される。

    Args:
        path: 設定ファイルのパス（None ならファイルを読まない）
        overrides: 上書きする値（None の値は無視）

    Returns:
        SweepConfig

    Raises:
        ConfigError: 未知のキーや解釈できない値がある場合
    """
    values: Dict = {}
    if path:
        raw = dotenv_values(path)
        unknown = [key for key in raw if key.upper() not in CONFIG_KEYS]
        if unknown:
            raise ConfigError(f"未知の設定キーがあります: {', '.join(unknown)}")
        for key, text in raw.items():
            if text is None:
                raise ConfigError(f"設定キー {key} に値がありません。")
            upper = key.upper()
            if upper == "GRID":
                values["grid"] = tuple(parse_grid(text))
            elif upper == "N_VALUES":
                values["N_values"] = tuple(_parse_int(key, part) for part in text.split(",") if part.strip())
            elif upper == "OPTIMIZER_STEPS":
                values["optimizer_steps"] = _parse_int(key, text)
            elif upper == "MAX_WORKERS":
                values["max_workers"] = _parse_int(key, text)
            elif upper == "N":
                values["N"] = _parse_int(key, text)
            else:
                values[upper.lower()] = _parse_int(key, text)

    config = SweepConfig(**values)
    if overrides:
        cleaned = {key: value for key, value in overrides.items() if value is not None}
        if "grid" in cleaned:
            cleaned["grid"] = tuple(cleaned["grid"])
        if "N_values" in cleaned:
            cleaned["N_values"] = tuple(cleaned["N_values"])
        config = replace(config, **cleaned)
    return config
