"""Exception types raised across the package."""


class SlipstickError(Exception):
    """Base class for all package errors."""


class NumericalFailure(SlipstickError):
    """A numerical routine could not produce a trustworthy result."""


class SectorViolation(SlipstickError):
    def __init__(self, omega, psi_value, message=None):
        self.omega = float(omega)
        self.psi_value = float(psi_value)
        super().__init__(message or f"sector violated at omega={omega:.6g} (psi={psi_value:.6g})")


class PoleHit(NumericalFailure):
    """The evaluation point is numerically a pole of G."""


class NumericalPole(NumericalFailure):
    """The inner denominator of Phi vanished numerically."""


class NotWellPosed(SlipstickError):
    """Parameters at the exceptional point (q, alpha, lambda) = (1, 0, 0)."""


class ZeroCrossingOnContour(NumericalFailure):
    def __init__(self, min_modulus, where=None):
        self.min_modulus = float(min_modulus)
        self.where = where
        super().__init__(f"image passes within {min_modulus:.3g} of the origin near s={where}")


class ImageNearOrigin(ZeroCrossingOnContour):
    """Nyquist image of 1 + K G passes too close to the origin."""


class RadiusTooSmall(NumericalFailure):
    """Winding number changed when the contour radius was doubled."""


class OnBoundary(SlipstickError):
    def __init__(self, q, alpha, curve):
        self.q, self.alpha, self.curve = q, alpha, curve
        super().__init__(f"(q, alpha)=({q:.6g}, {alpha:.6g}) lies on the {curve} boundary")


class AlphaZeroUnsupported(SlipstickError):
    """alpha = 0 requested without enabling the reduced boundary row."""


class IllPosedLoop(SlipstickError):
    """Direct feedthrough makes the feedback interconnection ill-posed."""


class UnstableSystem(SlipstickError):
    """A norm was requested for a system that is not exponentially stable."""


class NotStrictlyProper(SlipstickError):
    """H2 norm requested for a channel with nonzero feedthrough."""


class UnstableController(SlipstickError):
    """The controller has eigenvalues in the closed right half-plane."""


class BlowUp(NumericalFailure):
    def __init__(self, t, norm):
        self.t, self.norm = float(t), float(norm)
        super().__init__(f"state norm {norm:.3g} exceeded the limit at t={t:.6g}")


class StepTooLarge(NumericalFailure):
    """The implicit step equation could not be solved."""


class NoStabilizerFound(SlipstickError):
    def __init__(self, best_abscissa):
        self.best_abscissa = float(best_abscissa)
        super().__init__(f"no stabilizing controller found (best abscissa {best_abscissa:.4g})")
