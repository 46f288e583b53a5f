"""Exception types raised across the package."""


class RendezvousError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RendezvousError, ValueError):
    """Invalid scenario, topology, or parameter values."""


class SynthesisError(RendezvousError, ArithmeticError):
    """Gain synthesis failed (singular input-weighting term)."""


class SingularInnovationError(RendezvousError, ArithmeticError):
    """Measurement update with a singular innovation covariance and inconsistent data."""


class EvaluationError(RendezvousError, ValueError):
    """A trace cannot be evaluated as requested (e.g. too short for the horizon)."""


class FitError(RendezvousError, ValueError):
    """Decay-rate fit impossible on the supplied data."""


class EpisodeError(RendezvousError, RuntimeError):
    """An episode inside a Monte Carlo batch failed; carries the failing seed."""

    def __init__(self, run_index: int, seed: int, cause: BaseException):
        super().__init__(f"episode {run_index} (seed {seed}) failed: {cause}")
        self.run_index = run_index
        self.seed = seed
