"""Exception types shared across the workbench.

Everything raised on purpose derives from :class:`VectorError` so callers
(CLI, HTTP layer) can map failures to exit codes / status codes in one place.
"""

from __future__ import annotations


class VectorError(Exception):
    """Base class for all deliberate failures."""


class CheiralityViolation(VectorError):
    """A point lies on or behind a camera's principal plane (z <= eps)."""


class DegenerateGeometry(VectorError):
    """Triangulation could not pin down a point (parallel or near-parallel rays)."""


class DegenerateConfiguration(VectorError):
    """Point sets too small or too flat to determine a similarity transform."""


class SchemaError(VectorError):
    """An input file does not follow the expected element structure.

    Carries the 1-based line number of the offending element when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)


class DuplicateId(VectorError):
    """Two cameras or two tracks share an id."""


class UnknownCameraRef(VectorError):
    """An observation names a camera id that does not exist."""


class TooFewObservations(VectorError):
    """A track has fewer than two observations."""


class InfeasibleConfig(VectorError):
    """A synthetic dataset request cannot be satisfied (or is self-contradictory)."""


class EmptyProblem(VectorError):
    """Bundle adjustment asked to run with no cameras or no tracks."""


class NumericalFailure(VectorError):
    """The optimizer could not make progress: normal equations unsolvable at max damping."""


class SingularSystem(VectorError):
    """A linear solve hit a singular (or non-positive-definite) matrix."""


class EmptyInput(VectorError):
    """A statistic was requested over zero usable records."""


class MissingFinalState(VectorError):
    """An operation needs adjusted poses/points but none are present."""


class UnknownId(VectorError):
    """An edit or lookup referenced a camera/track id that is not in the dataset."""


class AlreadyDeleted(VectorError):
    """An edit tried to delete something that is already deleted."""


class TooFewCamerasRemaining(VectorError):
    """An edit would leave fewer than two cameras."""


class UnknownRun(VectorError):
    """A comparison or report referenced a run id the session does not have."""


class CorruptSessionFile(VectorError):
    """A session file failed to load: bad JSON, missing fields, or digest mismatch."""


class Cancelled(VectorError):
    """A long-running job was cancelled cooperatively."""
