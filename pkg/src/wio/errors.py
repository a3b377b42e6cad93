"""Exception hierarchy shared across the package.

Every error raised by library code derives from WioError so callers (and the
command-line front end) can map failures to coarse categories without string
matching.
"""


class WioError(Exception):
    """Base class for all library errors."""


class TiltSingularityError(WioError):
    """Tilt coordinates too close to the unit circle (90 degree tilt)."""


class DegenerateNormalError(WioError):
    """Surface normal points sideways or down; no valid tilt exists."""


class MissingControlPointError(WioError, KeyError):
    """A spline patch references a lattice point with no stored height."""

    def __init__(self, index):
        super().__init__(f"no control point at lattice index {index}")
        self.index = tuple(index)


class InsufficientPosesError(WioError):
    """Too few poses to set up the control-point least-squares fit."""


class MalformedWindowError(WioError):
    """Measurement window violates size or uniform-timestamp invariants."""


class UncalibratedError(WioError):
    """Corrector used before its calibration segment was supplied."""


class InnovationGateError(WioError):
    """Measurement rejected by the chi-square innovation gate."""


class FilterError(WioError):
    """State or covariance became invalid during filtering."""


class ParseError(WioError):
    """A data file failed to parse; carries the offending location."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class AssociationError(WioError):
    """No trajectory samples could be associated by timestamp."""


class ConfigError(WioError):
    """Invalid or inconsistent configuration values."""
