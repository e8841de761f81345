"""Typed errors shared across the package.

Every abnormal event in the dynamics gets its own exception class so that
orbit drivers and Monte Carlo loops can count, exclude or abort on specific
event types instead of pattern-matching message strings.
"""


class PingpongError(Exception):
    """Base class for all package errors."""


class ProfileError(PingpongError):
    """Structurally invalid wall-motion profile (bad pieces, parse failure)."""


class NotAdmissibleError(PingpongError):
    """Operation requires an admissible wall motion and the profile is not."""


class FlightSolverError(PingpongError):
    """Base class for failures of the flight-time solver."""


class GrazingCollision(FlightSolverError):
    """The first wall contact is tangential (root of the residual is double)."""


class SingularCollision(FlightSolverError):
    """The next collision lands on the wall corner (integer time)."""


class NoRootFound(FlightSolverError):
    """No next collision found within the search horizon; signals a bug or a
    non-physical profile, never a legitimate orbit state."""


class NonPositiveRelativeVelocity(FlightSolverError):
    """Post-collision relative velocity fell below the low-energy cutoff."""


class SingularHit(PingpongError):
    """A limit-map step landed (numerically) on the corner time."""


class CurveError(PingpongError):
    """Invalid unstable curve (slope outside cone, crosses a singularity...)."""
