"""Exception types shared by every module.

Each class carries an ``exit_code`` used by the command line front end.
"""


class HetcvError(Exception):
    exit_code = 1
    code = "error"


class DomainError(HetcvError, ValueError):
    """Parameters or arguments outside the mathematical domain of an operation."""

    exit_code = 1
    code = "domain"


class ConvergenceError(HetcvError, ArithmeticError):
    """A numerical procedure did not reach its tolerance.

    ``partial`` holds the best estimate available when the procedure gave up.
    """

    exit_code = 2
    code = "convergence"

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ConfigError(HetcvError):
    exit_code = 78
    code = "config"

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno
