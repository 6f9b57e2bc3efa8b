"""Exception hierarchy for the Kawahara memory laboratory."""


class KawaharaError(Exception):
    """Base class for every error raised by this package."""


class ParameterOutOfRange(KawaharaError, ValueError):
    pass


class GridTooCoarse(KawaharaError, ValueError):
    pass


class DimensionMismatch(KawaharaError, ValueError):
    pass


class EigSolveFailure(KawaharaError, RuntimeError):
    pass


class TailTooFat(KawaharaError, ValueError):
    """The history truncation point leaves too much kernel mass behind."""


class ModeMismatch(KawaharaError, ValueError):
    pass


class LinearSolveFailure(KawaharaError, RuntimeError):
    pass


class BlowupDetected(KawaharaError, RuntimeError):
    pass


class NonpositiveD(KawaharaError, ValueError):
    """The Lyapunov construction needs D > 0, which fails with the smallness condition."""


class DomainError(KawaharaError, ValueError):
    pass


class SeriesTooShort(KawaharaError, ValueError):
    pass


class ConfigError(KawaharaError, ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownKey(ConfigError):
    pass


class MissingRequired(ConfigError):
    pass
