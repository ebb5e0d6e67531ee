__all__ = (
    "DeepformerError",
    "DimensionError",
    "TokenIndexError",
    "TapeError",
    "StaleTapeError",
    "DivergenceError",
    "ConfigurationError",
    "AttentionMaskError",
    "ProfilingError",
    "FoldingError",
    "DataError",
    "SpecError",
)


class DeepformerError(Exception):
    """deepformer 의 모든 예외의 기반 클래스"""


class DimensionError(DeepformerError, ValueError):
    pass


class TokenIndexError(DeepformerError, IndexError):
    pass


class TapeError(DeepformerError, RuntimeError):
    pass


class StaleTapeError(TapeError):
    """이미 backward 가 끝난 테이프를 다시 사용하려 할 때"""


class DivergenceError(DeepformerError, ArithmeticError):
    pass


class ConfigurationError(DeepformerError, ValueError):
    pass


class AttentionMaskError(DeepformerError, ValueError):
    """어텐션 가능한 위치가 하나도 없는 query 행이 있을 때"""


class ProfilingError(DeepformerError, ValueError):
    pass


class FoldingError(DeepformerError, ValueError):
    pass


class DataError(DeepformerError, ValueError):
    pass


class SpecError(DeepformerError, ValueError):
    pass
