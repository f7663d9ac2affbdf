"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An operation received arguments that violate its contract."""


class DataFormatError(ValueError):
    """A dataset file does not match its declared binary format."""


class ConfigError(ValueError):
    """An experiment configuration is incomplete or inconsistent."""


class DegenerateSelectionError(RuntimeError):
    """Frequency weights are undefined for this selection.

    Raised when fewer than two clients were selected or when the expected
    selection size F*K is not larger than 1. The caller is expected to
    assign weight 1 to the sole client instead.
    """
