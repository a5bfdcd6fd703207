"""Exception hierarchy shared across the package.

Each class carries a short ``kind`` tag that the command line prints in its
one-line error record.
"""


class SnelsdError(Exception):
    kind = "error"


class DimensionError(SnelsdError, ValueError):
    kind = "dimension"


class ContractError(SnelsdError, ValueError):
    kind = "contract"


class EmptySequenceError(SnelsdError, ValueError):
    kind = "empty-sequence"


class MalformedTreeError(SnelsdError, ValueError):
    kind = "malformed-tree"


class ParseError(SnelsdError, ValueError):
    kind = "parse"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(SnelsdError, ValueError):
    kind = "data"


class ConfigError(SnelsdError, ValueError):
    kind = "config"


class CapabilityError(SnelsdError, ValueError):
    kind = "capability"


class CheckpointError(SnelsdError, ValueError):
    kind = "checkpoint"
