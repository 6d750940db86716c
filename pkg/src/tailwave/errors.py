"""Exception hierarchy shared by all tailwave modules."""


class TailwaveError(Exception):
    """Base class for all errors raised by this package."""


class InadmissibleAlpha(TailwaveError):
    """The inverse-square coefficient lies on the removed ray (-inf, -((n-2)/2)^2]."""


class ConfigInvalid(TailwaveError):
    """A configuration value violates its documented range or type."""


class StepFailure(TailwaveError):
    """Adaptive step size underflowed before reaching the end of the span."""


class NonFinite(TailwaveError):
    """An integration produced NaN or Inf."""


class ResonantExponent(TailwaveError):
    """Frobenius recursion denominator vanished; a log-augmented start is required."""


class SlowConvergence(TailwaveError):
    """Asymptotic series tail estimate exceeds tolerance at the requested radius."""


class GridMismatch(TailwaveError):
    """Two radial solutions do not share the requested evaluation radius."""


class FitInvalid(TailwaveError):
    """Connection-coefficient estimates at independent radii disagree."""


class ResonanceDetected(TailwaveError):
    """Zero-energy inversion requested for a resonant mode."""


class ResidualTooLarge(TailwaveError):
    """Applying the operator to a computed solution does not reproduce the forcing."""


class ModeUnstable(TailwaveError):
    """|W(sigma)| fell below the stability threshold."""


class IndicialCollision(TailwaveError):
    """A recursion denominator hit the boundary spectrum."""


class UnhandledResonantCase(TailwaveError):
    """Integer exponent gap with distinct transition-face exponents; not supported."""


class DegenerateLedger(TailwaveError):
    """Profile assembly requested for a ledger whose coefficient chain vanished."""


class DegenerateProfile(TailwaveError):
    """Amplitude fit requested against a degenerate or unavailable profile."""


class UnstableCFL(TailwaveError):
    """Energy monitor detected blow-up consistent with a CFL violation."""


class ObserverMissing(TailwaveError):
    """Requested sampling region was not declared before the evolution ran."""


class BelowFloor(TailwaveError):
    """Requested fit window lies below the recorded finite-difference noise floor."""


class NonMonotoneEnvelope(TailwaveError):
    """Tail fit window contains zero crossings or a non-decaying envelope."""
