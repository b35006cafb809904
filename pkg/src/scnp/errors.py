"""Exception hierarchy shared by every module of the package."""


class ScnpError(Exception):
    """Base class for all package errors."""


class MissingFace(ScnpError, ValueError):
    pass


class IndexOutOfRange(ScnpError, IndexError):
    pass


class EmptySelection(ScnpError, ValueError):
    pass


class ToleranceNotMet(ScnpError, ArithmeticError):
    pass


class ShapeMismatch(ScnpError, ValueError):
    pass


class EmptyGather(ScnpError, ValueError):
    pass


class NotScalar(ScnpError, ValueError):
    pass


class ZeroProjectionVector(ScnpError, ArithmeticError):
    pass


class EmptySignal(ScnpError, ValueError):
    pass


class DegenerateComplex(ScnpError, ValueError):
    pass


class DegenerateMesh(ScnpError, ValueError):
    pass


class LabelOutOfRange(ScnpError, IndexError):
    pass


class EmptySplit(ScnpError, ValueError):
    pass


class MissingFile(ScnpError, FileNotFoundError):
    pass


class MalformedLine(ScnpError, ValueError):
    def __init__(self, path, line_number, message="malformed line"):
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class InconsistentIndicator(ScnpError, ValueError):
    pass


class UnreadableFile(ScnpError, OSError):
    pass


class ConfigError(ScnpError, ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
