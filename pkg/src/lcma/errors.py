"""Exception types raised across the package."""


class LcmaError(Exception):
    """Base class for every error raised by lcma."""


class SchemeShapeError(LcmaError, ValueError):
    """Coefficient tensors disagree with the declared grid or rank."""


class CoefficientRangeError(LcmaError, ValueError):
    """A coefficient lies outside {-1, 0, 1}."""


class SchemeParseError(LcmaError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class SchemeValidationError(LcmaError):
    """The bilinear identity does not hold for a scheme."""

    def __init__(self, name, report):
        self.report = report
        first = report.failures[0] if report.failures else None
        msg = f"scheme {name!r} fails the matmul identity"
        if first is not None:
            msg += f" at {first.index} (observed {first.observed}, expected {first.expected})"
        super().__init__(msg)


class DimensionMismatchError(LcmaError, ValueError):
    pass


class CalibrationError(LcmaError, RuntimeError):
    pass


class ProfileFormatError(LcmaError, ValueError):
    pass
