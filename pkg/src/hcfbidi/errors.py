"""Exception hierarchy shared by all modules."""


class HcfError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HcfError):
    """Invalid or inconsistent configuration.

    ``errors`` holds every problem found, each as ``(field_path, message)``.
    """

    def __init__(self, message, errors=None):
        self.errors = list(errors or [])
        if self.errors:
            detail = "; ".join(f"{path}: {msg}" for path, msg in self.errors)
            message = f"{message} ({detail})"
        super().__init__(message)


class InvalidArgument(HcfError, ValueError):
    pass


class NotFound(HcfError, KeyError):
    pass


class OutOfRange(HcfError, ValueError):
    pass


class PlanOverlap(ConfigError):
    pass


class PlanInconsistent(ConfigError):
    pass


class ExcludedChannel(HcfError):
    pass


class BadLabeling(HcfError, ValueError):
    pass


class BadCardinality(HcfError, ValueError):
    pass


class EqualizerDiverged(HcfError, RuntimeError):
    pass


class MeasurementFailed(HcfError, RuntimeError):
    pass


class CalibrationInfeasible(HcfError, ValueError):
    """No transceiver SNR reaches the target; ``limiting_term`` names the binding impairment."""

    def __init__(self, message, band=None, limiting_term=None):
        self.band = band
        self.limiting_term = limiting_term
        super().__init__(message)
