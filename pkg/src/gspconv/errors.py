"""Exception hierarchy shared across the package."""


class GSPCError(Exception):
    """Base class for all errors raised by gspconv."""


class ConfigurationError(GSPCError, ValueError):
    """Inconsistent shapes, parameters or arguments."""


class TileConfigError(ConfigurationError):
    """A tile configuration violates the packing constraints."""


class ComparisonError(GSPCError, ValueError):
    """Two tensors cannot be compared (e.g. shapes differ)."""


class TuningError(GSPCError):
    """No valid trial was produced while tuning a layer."""


class RecordError(GSPCError):
    """A tuning record could not be read or written."""


class RecordKeyMismatch(RecordError):
    """A tuning record belongs to a different layer than requested."""


class UnknownNetworkError(GSPCError, KeyError):
    """Unknown network name or variant."""

    def __str__(self) -> str:
        # KeyError quotes its message by default
        return str(self.args[0]) if self.args else ""
