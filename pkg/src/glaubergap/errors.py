"""Exception types shared across the package."""


class GlauberGapError(Exception):
    """Base class for all errors raised by this package."""


class DisconnectedInput(GlauberGapError):
    """Edge list contains vertices unreachable from the chosen root."""


class SelfLoop(GlauberGapError):
    """Edge list contains a self-loop."""


class RadiusTooLarge(GlauberGapError):
    """Requested ball radius leaves no layer to act as ghost boundary."""


class BadParams(GlauberGapError):
    """Structurally invalid generator or model parameters."""


class NotHyperbolic(GlauberGapError):
    """(v - 2) * (s - 2) <= 4, so the tiling is not hyperbolic."""


class InfeasibleDegree(GlauberGapError):
    """No simple k-regular graph exists for the requested size."""


class RetryBudgetExceeded(GlauberGapError):
    """Rejection sampling exhausted its restart budget."""


class BoundaryVertex(GlauberGapError):
    """Operation needs the next layer, which the vertex does not have."""


class TooLarge(GlauberGapError):
    """Instance exceeds a documented exact-computation cap."""


class NotRegular(GlauberGapError):
    """Graph is not regular, so a regular-only formula does not apply."""


class BudgetExceeded(GlauberGapError):
    """Enumeration or sampling budget exhausted before completion."""


class NotGrowing(GlauberGapError):
    """Growth parameter is not positive, so a growing-only audit is void."""


class BadRegion(GlauberGapError):
    """Region is not of the admissible form for the requested operation."""


class ZeroVariance(GlauberGapError):
    """Test function is constant on the support, so no Rayleigh quotient."""


class EvenN(GlauberGapError):
    """Operation requires an odd number of interior vertices."""


class NoConvergence(GlauberGapError):
    """Iterative eigensolver failed to reach tolerance within its cap."""


class PoorFit(GlauberGapError):
    """Regression fit quality below the acceptance threshold."""


class ConfigError(GlauberGapError):
    """Malformed experiment configuration."""

    def __init__(self, message, section=None, field=None, line=None):
        loc = []
        if section is not None:
            loc.append(f"section [{section}]")
        if field is not None:
            loc.append(f"field {field!r}")
        if line is not None:
            loc.append(f"line {line}")
        suffix = f" ({', '.join(loc)})" if loc else ""
        super().__init__(message + suffix)
        self.section = section
        self.field = field
        self.line = line
