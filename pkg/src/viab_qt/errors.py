"""Exception types shared across the package.

Exit-code mapping used by the CLI: configuration problems -> 2,
numerical failures (blow-up, non-convergent projections,
degenerate factorizations that even the fallback cannot handle) -> 3,
replay mismatches -> 4.
"""


class ViabQtError(Exception):
    """Base class for all package errors."""


class ConfigError(ViabQtError):
    """Invalid configuration: unknown registry name, bad bound, bad schema."""

    exit_code = 2


class NumericalError(ViabQtError):
    """Numerical failure during an experiment."""

    exit_code = 3


class DegenerateCovarianceError(NumericalError):
    """Cholesky failed even after diagonal jitter.

    Callers are expected to fall back to eigendecomposition sampling.
    """


class BlowUpError(NumericalError):
    """Trajectory state exceeded the blow-up threshold."""

    def __init__(self, step: int, norm: float):
        super().__init__(f"state blow-up at step {step}: |X| = {norm:.3e}")
        self.step = step
        self.norm = norm


class ProjectionError(NumericalError):
    """Projection or boundary root-finding did not converge."""
