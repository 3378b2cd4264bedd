"""Exception hierarchy shared by every module."""


class AedsError(Exception):
    """Base class for all package errors."""


class InputError(AedsError):
    """Malformed user input (maps to CLI exit code 2)."""


class ExprSyntaxError(InputError):
    def __init__(self, message, position, text=""):
        self.message = message
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class UnknownVariable(InputError):
    def __init__(self, name, position=None):
        self.name = name
        self.position = position
        where = "" if position is None else f" at position {position}"
        super().__init__(f"unknown variable {name!r}{where}")


class NonIntegerExponent(InputError):
    def __init__(self, token, position=None):
        self.token = token
        self.position = position
        super().__init__(f"exponent must be an integer literal, got {token!r} at position {position}")


class MissingCoordinate(AedsError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"no value supplied for coordinate {name!r}")


class EvalError(AedsError):
    """Domain violation or overflow during numeric evaluation."""

    def __init__(self, reason, node=None, point=None):
        self.reason = reason
        self.node = node
        self.point = point
        msg = reason
        if node is not None:
            msg += f" in {node}"
        if point is not None:
            msg += f" at {point}"
        super().__init__(msg)


class AlgebroidMismatch(AedsError):
    pass


class DegreeZero(AedsError):
    pass


class ArityMismatch(AedsError):
    pass


class ShapeMismatch(InputError):
    pass


class DegreeError(AedsError):
    pass


class NameCollision(InputError):
    pass


class InvalidStructureConstants(InputError):
    pass


class NotAffine(AedsError):
    pass


class PreconditionFailed(AedsError):
    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class ConfigError(InputError):
    def __init__(self, message, line=None, column=None, key=None):
        self.line = line
        self.column = column
        self.key = key
        where = []
        if key:
            where.append(f"key {key}")
        if line is not None:
            where.append(f"line {line}" + (f", column {column}" if column is not None else ""))
        suffix = f" ({'; '.join(where)})" if where else ""
        super().__init__(message + suffix)
