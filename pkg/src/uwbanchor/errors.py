class UwbAnchorError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(UwbAnchorError, ValueError):
    """Invalid scenario, filter or planner configuration."""


class DegenerateGeometryError(UwbAnchorError, ValueError):
    """Agent and anchor (or a rotation) are too degenerate to linearize."""


class NumericalFailure(UwbAnchorError, ArithmeticError):
    """Filter covariance lost symmetry/PSD or an innovation variance went non-positive."""
