"""例外定義モジュール

入力不正はすべて ValueError の派生クラスとして送出する。
既存の ``except ValueError`` による処理がそのまま使える。
"""


class ResolutionError(ValueError):
    """解像度（N）が一致しない、または解像度を超えるスケールが指定された"""


class ScaleRangeError(ValueError):
    """スケール添字 k が許容範囲外"""


class ConvexityError(ValueError):
    """木が凸でない、または根が一意に定まらない"""


class NegativeInputError(ValueError):
    """非負性を要求する演算に負の値を含む関数が渡された"""


class DegenerateInputError(ValueError):
    """比の分母が 0 になるなど、退化した入力"""


class ExponentError(ValueError):
    """指数 (p, q, r) が前提条件を満たさない"""


class ParameterRangeError(ValueError):
    """係数・シフト量などのパラメータが範囲外"""


class NyquistError(ValueError):
    """周期格子のナイキスト周波数を超えるスケール"""


class NormalizationError(ValueError):
    """∫φ = 1 などの正規化条件を満たさない"""


class ConfigError(ValueError):
    """設定ファイルまたは CLI 引数の内容が不正"""


class InternalConsistencyError(ArithmeticError):
    """解析的に非負となる量が許容誤差を超えて負になった"""
