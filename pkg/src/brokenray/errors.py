"""Exception types shared across the library."""


class BrokenRayError(Exception):
    """Base class for all errors raised by this package."""


class NonPositiveSpeed(BrokenRayError):
    """A speed field evaluated to a value <= 0 (invalid field data)."""


class PolarSingularity(BrokenRayError):
    """Ray direction too close to the polar axis: 1/sin(phi) blows up."""


class StepUnderflow(BrokenRayError):
    """Adaptive step fell below h_min; the current data point is abandoned."""


class MeasurementError(BrokenRayError):
    """Transmitter ray left the domain before its travel-time budget."""


class UnknownPeriod(BrokenRayError):
    """Sampling-period id not present in an obstacle trajectory."""


class EmptyPeriod(BrokenRayError):
    """No data points supplied for a sampling period."""


class DanglingCandidate(BrokenRayError):
    """Candidate references a data point that is not in the dataset."""


class OutsideMesh(BrokenRayError):
    """Point lies outside the bounding cube of the region mesh."""


class StaleCache(BrokenRayError):
    """Region table metadata does not cover the requested data point."""


class ParseError(BrokenRayError):
    """Malformed record in a dataset, cache or config file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaMismatch(BrokenRayError):
    """File header does not match the expected column layout."""
