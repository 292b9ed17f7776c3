"""Exception types raised across the package."""


class IdmixError(Exception):
    """Base class for library errors."""


class DimensionError(IdmixError, ValueError):
    pass


class QuadratureError(IdmixError):
    """A quadrature did not reach its tolerance."""

    def __init__(self, message, error=float("nan")):
        super().__init__(f"{message} (achieved error estimate {error:.3g})")
        self.error = error


class NonIntegrableError(IdmixError):
    """The kernel is not integrable against the Levy basis."""


class HypothesisError(IdmixError):
    """A criterion was called outside the hypotheses it is valid under."""


class BranchTrackingError(IdmixError):
    """The distinguished logarithm could not be continued."""


class AdmissibleScaleError(IdmixError):
    pass


class WindowError(IdmixError, ValueError):
    """Simulation window or grid does not cover what the request needs."""


class SamplerMissingError(IdmixError):
    pass


class ConfigError(IdmixError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line
