"""Exception types raised across the package."""


class GravicatError(Exception):
    """Base class for all package errors."""


class DimensionError(GravicatError, ValueError):
    """Operands live on incompatible grids or have the wrong dimension."""


class ParameterError(GravicatError, ValueError):
    """A physical or numerical parameter is out of its allowed range."""


class SymmetryError(GravicatError, ValueError):
    """A measurement that needs a reflection-symmetric density got an asymmetric one."""


class ConstructionError(GravicatError, ValueError):
    """A state could not be built from the given specification."""


class ResolutionError(GravicatError, ValueError):
    """The grid cannot resolve the requested structure."""


class DivergenceError(GravicatError, ArithmeticError):
    """Time stepping produced non-finite amplitudes.

    ``last_good`` holds the most recent finite state and ``time`` its time.
    """

    def __init__(self, message, last_good=None, time=None):
        super().__init__(message)
        self.last_good = last_good
        self.time = time


class ConvergenceError(GravicatError, RuntimeError):
    """Ground-state relaxation ran out of iterations.

    ``best`` is the lowest-energy iterate reached, ``residual`` its residual norm.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class ConfigError(GravicatError, ValueError):
    """Bad configuration file entry or command-line flag."""
