"""Exception hierarchy shared by all fallrisk modules."""


class FallRiskError(Exception):
    """Base class for every error raised by this package."""


class NonFinite(FallRiskError, ValueError):
    pass


class DegenerateContour(FallRiskError, ValueError):
    pass


class MissingLandmark(FallRiskError):
    pass


class OutOfBounds(FallRiskError, ValueError):
    pass


class EmptyClass(FallRiskError, ValueError):
    pass


class SingleClass(FallRiskError, ValueError):
    pass


class SchemaMismatch(FallRiskError, ValueError):
    pass


class VersionMismatch(FallRiskError):
    pass


class CorruptModel(FallRiskError):
    pass


class InvalidParams(FallRiskError, ValueError):
    pass


class TooFewSamples(FallRiskError, ValueError):
    pass


class ParseError(FallRiskError):
    def __init__(self, message, line_no=None):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


class ValidationError(ParseError):
    pass


class InvariantViolation(FallRiskError, AssertionError):
    """An internal consistency check failed (a bug, not bad input)."""
