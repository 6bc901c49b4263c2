"""Exception types shared across the toolkit."""


class NmpinvError(Exception):
    """Base class for all toolkit errors."""


class NonConvergence(NmpinvError):
    """Polynomial root finding failed to meet the residual tolerance."""


class ImproperSystem(NmpinvError):
    """Operation requires a proper transfer function (deg num <= deg den)."""


class DegenerateApproximation(NmpinvError):
    """Approximate inversion is singular (numerator vanishes at z = 1)."""


class PoleAtOne(NmpinvError):
    """DC gain undefined: denominator vanishes at z = 1."""


class PoleOnUnitCircle(NmpinvError):
    """Frequency response undefined: denominator vanishes on the unit circle."""


class InsufficientPreview(NmpinvError):
    """Caller granted fewer future samples than the system requires."""


class NonFiniteState(NmpinvError):
    """Integration produced a non-finite state component."""


class NonFiniteJacobian(NmpinvError):
    """Finite-difference linearization produced non-finite entries."""


class Uncontrollable(NmpinvError):
    """Pole placement requested on an uncontrollable pair (A, B)."""


class DimensionMismatch(NmpinvError):
    """Vector or matrix dimensions do not match the network layout."""


class NonFiniteLoss(NmpinvError):
    """Training loss became non-finite; aborted with diagnostics."""


class LogTooShort(NmpinvError):
    """Logged run is shorter than the widest feature window."""


class BaselineDiverged(NmpinvError):
    """Baseline data collection hit a diverged run."""


class WindowLength(NmpinvError):
    """Desired-trajectory window has the wrong length for the generator."""


class EmptyWindow(NmpinvError):
    """RMS evaluation window contains no samples."""


class BadDrawing(NmpinvError):
    """Submitted drawing violates the track-request contract."""


class ConfigError(NmpinvError):
    """Run configuration failed validation; message names the key path."""
