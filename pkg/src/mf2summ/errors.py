"""Exception hierarchy shared by all subsystems.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class Mf2Error(Exception):
    """Base class for all library errors."""


class ShapeError(Mf2Error):
    """Tensor operands with incompatible shapes."""


class ContractError(Mf2Error):
    """A caller violated an operation's precondition."""


class ConfigError(Mf2Error):
    """Invalid or inconsistent configuration."""


class DataError(Mf2Error):
    """Problem with on-disk data: bad files, inconsistent manifests."""


class ParseError(DataError):
    """A binary or text artifact failed to parse."""


class NumericalError(Mf2Error):
    """Training or inference produced non-finite values."""
