"""Exception types shared across the package."""


class FractalHeatError(Exception):
    """Base class for all package-specific errors."""


class AtPoleError(FractalHeatError):
    """Evaluation requested at (or too close to) a pole of a zeta function."""


class DivergenceError(FractalHeatError):
    """An integral does not converge for the requested parameters."""


class CoverageError(FractalHeatError):
    """Sampled data does not cover the range required by an operation."""


class ResolutionError(FractalHeatError):
    """Sampling density is insufficient for the requested accuracy."""


class ResourceLimitError(FractalHeatError):
    """The operation would exceed an explicit memory or work budget."""


class GeometryError(FractalHeatError):
    """Invalid geometric input (open polyline, self-intersection, ...)."""


class SolverError(FractalHeatError):
    """A numerical solver failed to converge."""


class FitWindowError(FractalHeatError):
    """The data window is too short for the requested fit."""
