"""Exception hierarchy shared by all modules."""


class NLSCError(Exception):
    """Base class for every error raised by the package."""


class DimensionUnsupported(NLSCError, ValueError):
    """Spatial dimension below 3."""


class GridTooCoarse(NLSCError, ValueError):
    """Fewer nodes than the minimum the stencils need."""


class CouplingOutOfRange(NLSCError, ValueError):
    """Coupling c at or below the Hardy threshold -lambda(d)."""


class ExponentOutOfRange(NLSCError, ValueError):
    """Exponent outside the admissible range."""


class RegimeMismatch(NLSCError, ValueError):
    """Operation requested in a regime where it is undefined."""


class ZeroField(NLSCError, ValueError):
    """Zero field passed where a nonzero one is required."""


class NotSquareIntegrable(NLSCError, ValueError):
    """Profile whose tail is not square integrable."""


class TailNotResolved(NLSCError):
    """Quadrature of a slowly decaying tail does not converge."""


class ShootingBracketFailed(NLSCError):
    """No overshoot/undershoot bracket for the shooting amplitude."""


class NotConverged(NLSCError):
    """Iteration or acceptance gate failed."""


class SolverSingular(NLSCError):
    """Linear solve failed."""


class RadiusOutOfRange(NLSCError, ValueError):
    """Cutoff radius R must exceed 1."""


class ConstructionFailed(NLSCError):
    """Explicit construction violated its defining property."""


class SingularTime(NLSCError, ValueError):
    """Exact solution sampled at its blowup time."""


class InvalidBump(NLSCError, ValueError):
    """Bump profile not real, compactly supported and nonzero."""


class InconsistentInput(NLSCError, ValueError):
    """Inputs claim mutually incompatible threshold relations."""


class SweepContradiction(NLSCError):
    """Simulation contradicted a guaranteed prediction."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ConfigParseError(NLSCError, ValueError):
    """Malformed or unknown configuration entries."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
