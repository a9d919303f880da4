"""Exception types shared across the package."""

from __future__ import annotations


class FieldInvariantError(ValueError):
    """Spectral data violates a structural invariant (symmetry, divergence, layout)."""


class ConfigError(ValueError):
    """Invalid configuration: bad grids, mismatched mode sets, out-of-range parameters."""


class EstimationError(RuntimeError):
    """Constant estimation could not produce a value (all draws degenerate)."""


class BlowUpDetected(RuntimeError):
    """The V-norm of a solution exceeded the configured cap during integration.

    Attributes
    ----------
    t_star : float
        First grid time at which the cap was exceeded.
    trajectory :
        The partial trajectory computed up to and including ``t_star``.
    """

    def __init__(self, t_star: float, trajectory=None):
        super().__init__(f"V-norm cap exceeded at t = {t_star:.6g}")
        self.t_star = float(t_star)
        self.trajectory = trajectory


class NonConvergence(RuntimeError):
    """Picard iteration failed to contract within the allotted iterations.

    Attributes
    ----------
    log :
        The iteration log accumulated up to the failure, including the
        distance history ``d_n``.
    """

    def __init__(self, message: str, log=None):
        super().__init__(message)
        self.log = log


class AdvectiveStabilityWarning(UserWarning):
    """dt * K * sup_t ||y||_V exceeded the explicit-advection comfort bound."""
