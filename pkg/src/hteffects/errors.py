"""Exception hierarchy.

Every error carries a short machine-readable ``tag`` that the command line
front end prints on stderr, and an ``exit_code`` it maps to.
"""


class HteError(Exception):
    tag = "ERROR"
    exit_code = 1

    def __init__(self, message, tag=None):
        super().__init__(message)
        if tag is not None:
            self.tag = tag


class SchemaError(HteError, ValueError):
    """Input data does not satisfy the declared column schema."""

    tag = "SCHEMA"
    exit_code = 2


class IngestionError(HteError, ValueError):
    tag = "INGEST"
    exit_code = 2


class ContractError(HteError, ValueError):
    """A precondition of an operation was violated by the caller."""

    tag = "CONTRACT"
    exit_code = 2


class FoldError(ContractError):
    tag = "FOLD"


class NumericalError(HteError, ArithmeticError):
    """Factorization, sampling or optimization failed."""

    tag = "NUMERICAL"
    exit_code = 3


class ConvergenceError(NumericalError):
    tag = "CONVERGENCE"


class UsageError(HteError, ValueError):
    """Bad command-line arguments or configuration values."""

    tag = "USAGE"
    exit_code = 1
