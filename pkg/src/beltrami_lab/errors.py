"""Exception hierarchy shared by the numerical modules and the CLI."""


class BeltramiLabError(Exception):
    """Base class for all library errors."""


class ConfigError(BeltramiLabError, ValueError):
    """Invalid input: violated precondition or malformed scenario config."""


class GridMismatch(ConfigError):
    """Fields living on different grids were combined."""


class SupNormViolation(ConfigError):
    """A Beltrami coefficient with sup |mu| outside the admissible range."""


class NumericalFailure(BeltramiLabError, RuntimeError):
    """A numerical procedure could not deliver a trustworthy result."""


class NonConvergence(NumericalFailure):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class AdjointMismatch(NumericalFailure):
    """Analytic and weighted-transpose adjoints of T disagree."""


class IllSeparatedSpectrum(NumericalFailure):
    """No clear gap between numerical kernel and the rest of the spectrum."""


class KernelDimensionDrift(NumericalFailure):
    """Kernel dimension changed along a deformation family."""
