"""Exception types shared across the package.

Every CLI-facing failure maps to one of these so the command line can
emit a one-line, machine-parsable ``error:<category>: <message>``.
"""


class LfenetError(Exception):
    """Base class; carries a short machine-readable category."""

    category = "internal"


class ContractError(LfenetError, ValueError):
    """An operation was called with arguments violating its contract."""

    category = "contract"


class ConfigError(LfenetError, ValueError):
    """Invalid or unknown configuration key/value."""

    category = "config"


class CheckpointError(LfenetError, ValueError):
    """Malformed or incompatible checkpoint file."""

    category = "checkpoint"


class DataError(LfenetError, ValueError):
    """Dataset directory or manifest problem."""

    category = "data"


class NumericError(LfenetError, RuntimeError):
    """Non-finite value where the training contract requires finiteness."""

    category = "numeric"
