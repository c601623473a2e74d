"""Exception hierarchy for the matching toolkit."""


class HypermatchError(Exception):
    """Base class for every error raised by the toolkit."""


class DimensionMismatchError(HypermatchError, ValueError):
    """A vector or matrix does not have the size the matching shape requires."""


class NonFiniteInputError(HypermatchError, ValueError):
    """An input contains NaN or infinity."""


class InvalidTensorError(HypermatchError, ValueError):
    """A tensor entry has a repeated or out-of-range index, or a bad value."""


class ThresholdExceededError(HypermatchError):
    """A dense object was requested above the configured size threshold."""


class InvalidAssignmentError(HypermatchError, ValueError):
    """A vector is not an element of the assignment set M."""


class DegenerateTriangleError(HypermatchError, ValueError):
    """Three points are collinear or (nearly) coincident."""


class InvalidProblemError(HypermatchError, ValueError):
    """A matching problem or experiment description is not solvable as given."""


class MonotonicityViolationError(HypermatchError):
    """A solver trace broke the monotonic ascent guarantee."""


class DocumentParseError(HypermatchError, ValueError):
    """A problem document is not valid JSON or does not follow the schema."""
