"""Exception hierarchy shared by the operators, file readers and the CLI."""


class VsrError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class DimensionMismatch(VsrError, ValueError):
    exit_code = 5


class InvalidArgument(VsrError, ValueError):
    exit_code = 6


class MissingInput(VsrError, FileNotFoundError):
    exit_code = 3


class FormatError(VsrError, ValueError):
    """A file could not be parsed."""

    exit_code = 4


class BadMagic(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class BadDimensions(FormatError):
    pass


class UnsupportedMaxval(FormatError):
    pass


class ConfigError(VsrError, ValueError):
    """Config validation failed; ``problems`` lists every violated field."""

    exit_code = 6

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class TrainingDiverged(VsrError, ArithmeticError):
    exit_code = 7
