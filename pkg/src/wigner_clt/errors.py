"""Exception types shared across the package."""


class WignerCLTError(Exception):
    """Base class for all package errors."""


class NearSingularStability(WignerCLTError, ArithmeticError):
    """Raised when ``1 - m_i m_j`` is numerically zero.

    This happens when two spectral parameters approach the same real point
    from opposite half planes; the caller must widen the imaginary parts.
    """


class SizeLimit(WignerCLTError, ValueError):
    """An enumeration or recursion was requested beyond its supported size."""


class QuadratureFailure(WignerCLTError, RuntimeError):
    """Adaptive quadrature exhausted its budget before reaching tolerance."""


class EigendecompositionFailure(WignerCLTError, RuntimeError):
    """The Hermitian eigendecomposition failed its reconstruction check."""


class NotTraceless(WignerCLTError, ValueError):
    """A matrix required to be traceless has a nonzero normalized trace."""


class ConfigError(WignerCLTError, ValueError):
    """Malformed configuration; message names the offending field."""
