"""Exception hierarchy shared by all solver stages."""


class PolaritonLatticeError(Exception):
    """Base class for every error raised by this package."""


class InvalidOperatingPoint(PolaritonLatticeError, ZeroDivisionError):
    """Optical parameters sit on a pole of the effective-parameter map."""


class ParameterError(PolaritonLatticeError, ValueError):
    """A parameter violates a documented invariant."""


class FieldOverflow(PolaritonLatticeError, OverflowError):
    """Field amplitude ran away during spatial integration."""


class DivergedGuess(FieldOverflow):
    """A shooting guess produced a runaway integration."""


class SingularSystem(PolaritonLatticeError, ArithmeticError):
    """The linear superposition system is numerically singular."""


class NoConvergence(PolaritonLatticeError, RuntimeError):
    """Newton iteration did not reach the residual tolerance."""

    def __init__(self, message, last_guess=None, residual=None):
        super().__init__(message)
        self.last_guess = last_guess
        self.residual = residual


class EmptySpectrum(PolaritonLatticeError, ValueError):
    pass


class GridMismatch(PolaritonLatticeError, ValueError):
    pass


class ZeroNorm(PolaritonLatticeError, ValueError):
    pass


class LinearSolveFailure(PolaritonLatticeError, RuntimeError):
    pass


class BlowupBeyondLinearRegime(PolaritonLatticeError, RuntimeError):
    pass


class _LineError(PolaritonLatticeError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigParseError(_LineError):
    """Malformed line or unknown section/key in a run configuration."""


class ConfigValidationError(_LineError):
    """Well-formed configuration that violates a schema or parameter invariant."""
