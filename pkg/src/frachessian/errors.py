"""Exception hierarchy.

Every error raised on purpose by the package derives from ``FracHessianError``
so callers (the CLI in particular) can separate bad input from bugs.
"""


class FracHessianError(Exception):
    pass


class ConeViolation(FracHessianError, ValueError):
    """Eigenvalues fall outside the closure of the Gamma_k cone."""


class SamplingExhausted(FracHessianError, RuntimeError):
    pass


class InfeasibleSample(FracHessianError, RuntimeError):
    pass


class TailUnbounded(FracHessianError, ValueError):
    """Far-field tail of the operator cannot be bounded (s <= 1/2, growing u)."""


class TruncationTooLarge(FracHessianError, RuntimeError):
    pass


class AnisotropyTooExtreme(FracHessianError, ValueError):
    pass


class FrameNotOrthonormal(FracHessianError, ValueError):
    pass


class InfeasibleConstraint(FracHessianError, RuntimeError):
    pass


class EpsOutOfRange(FracHessianError, ValueError):
    pass


class SOutOfRange(FracHessianError, ValueError):
    pass


class Diverged(FracHessianError, RuntimeError):
    pass


class ChainUndefined(FracHessianError, ValueError):
    """A step of the constant chain has no real value (e.g. mu0 >= 2 mu1)."""
