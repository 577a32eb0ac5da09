"""Exception types shared across the library."""


class BrwireError(Exception):
    """Base class for all library errors."""


class UnsupportedLaw(BrwireError):
    """Closed-form evaluation requested for a law without product structure."""


class InvalidParameter(BrwireError):
    """A parameter is outside its admissible domain."""


class CapExceeded(BrwireError):
    """A replicate's population would exceed the configured cap.

    The replicate is aborted, never silently truncated.
    """

    def __init__(self, msg, replicate=None, generation=None):
        super().__init__(msg)
        self.replicate = replicate
        self.generation = generation


class EmptySelection(BrwireError):
    """A partition-function filter matched no particles."""


class NotStabilized(BrwireError):
    """The log W estimate at n_big and n_big/2 disagree beyond noise."""

    def __init__(self, msg, estimate=None, half_estimate=None, combined_se=None):
        super().__init__(msg)
        self.estimate = estimate
        self.half_estimate = half_estimate
        self.combined_se = combined_se


class InternalMismatch(BrwireError):
    """Two independent computations of the same quantity disagree."""


class ResolutionTooCoarse(BrwireError):
    """Monte Carlo noise exceeds the resolution requested from a profile."""


class ConfigError(BrwireError):
    """A configuration document is malformed.

    ``location`` names the offending key path when known.
    """

    def __init__(self, msg, location=None):
        super().__init__(msg if location is None else f"{location}: {msg}")
        self.location = location
