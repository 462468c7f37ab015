"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A system description or signal has inconsistent shapes."""


class ValidationError(ValueError):
    """A matrix violates a definiteness requirement (PSD cost, PD input weight)."""


class Infeasible(Exception):
    """No causal policy exists at the requested level.

    ``step`` is the first time index where the existence test failed.
    """

    def __init__(self, step, gamma=None, reason=""):
        self.step = step
        self.gamma = gamma
        self.reason = reason
        msg = f"infeasible at step {step}"
        if gamma is not None:
            msg += f" (gamma={gamma:.6g})"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class FactorizationError(ArithmeticError):
    """A spectral factor could not be built or inverted."""


class UnboundedGamma(RuntimeError):
    """Doubling search never reached a feasible level."""
