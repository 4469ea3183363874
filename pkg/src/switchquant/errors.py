"""Exception taxonomy for switchquant."""


class SwitchQuantError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(SwitchQuantError):
    """Inconsistent shapes, non-symmetric input, or violated type invariants."""


class ParameterError(SwitchQuantError):
    """A scalar parameter is outside its admissible range."""


class CoverageError(SwitchQuantError):
    """A state fell outside the region tiled by the quantizer partition."""


class ConditionViolatedError(SwitchQuantError):
    """A derived stability condition failed (e.g. the intersample
    contraction factor reached 1).  Carries the offending value."""

    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


class CertificateError(SwitchQuantError):
    """A Lyapunov certificate is incompatible with the requested analysis
    (level-set expansion exceeds the outer ellipsoid, infeasible radii)."""


class SynthesisError(SwitchQuantError):
    """Randomized synthesis did not converge within the run budget."""

    def __init__(self, message, runs_executed=0, total_updates=0):
        super().__init__(message)
        self.runs_executed = runs_executed
        self.total_updates = total_updates


class ConfigError(SwitchQuantError):
    """An experiment configuration file is malformed or inconsistent."""
