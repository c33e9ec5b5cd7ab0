"""Exception types shared across the package.

ValidationError covers malformed user input (CLI exit code 2); the
NumericalError branch covers diagnosed numerical failures such as accidental
resonances or non-convergent truncations (CLI exit code 3).
"""


class FloqpertError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(FloqpertError):
    """Malformed input: model files, flags, incompatible arguments."""


class NumericalError(FloqpertError):
    """A numerical procedure failed in a diagnosed way."""


class BoundaryResonanceError(NumericalError):
    """A detuning sits exactly on the half-drive-frequency boundary."""


class AmbiguousDegeneracyError(NumericalError):
    """Two quasi-resonant levels compete for the same photon sector."""


class NearResonanceError(NumericalError):
    """A resolvent denominator is too small; the degenerate set is too small."""


class BasisConvergenceError(NumericalError):
    """Eigenlevels did not stabilize under basis-size doubling."""


class IntegrationError(NumericalError):
    """Time integration failed to converge under step halving."""


class QuadratureError(NumericalError):
    """A quadrature failed to converge under grid doubling."""


class MagnusConvergenceError(NumericalError):
    """The ramp accumulates too much rotation for the Magnus series."""


class EnumerationCapError(NumericalError):
    """Diagram enumeration exceeded the configured term budget."""
