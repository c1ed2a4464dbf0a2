"""Exception types shared across the package."""


class GridlocError(Exception):
    """Base class for all gridloc errors."""


class InvalidCellError(GridlocError, ValueError):
    """Cell index outside 1..m*m."""


class OutOfFieldError(GridlocError, ValueError):
    """Position outside the gridded field extent."""


class DomainError(GridlocError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class NoCoverageError(GridlocError, ValueError):
    """Link budget cannot meet the requested connectivity probability."""


class EmptyDeploymentError(GridlocError, ValueError):
    """Deployment parameters produce no node positions."""


class CodecCapacityError(GridlocError, ValueError):
    """Payload limit too small to hold even the codec header plus one coefficient."""


class CodecDecodeError(GridlocError, ValueError):
    """Malformed or corrupt encoded pmf payload."""


class ConfigError(GridlocError, ValueError):
    """Invalid scenario configuration file or value."""
