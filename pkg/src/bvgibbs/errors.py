"""Exception types raised across the package."""


class BVGibbsError(Exception):
    """Base class for all package errors."""


class DomainError(BVGibbsError, ValueError):
    """A parameter lies outside the domain where a density or formula is defined."""


class SizeError(BVGibbsError, ValueError):
    """Input has too few elements."""


class ConstructionError(BVGibbsError, ValueError):
    """A dataset with the requested properties cannot be built."""


class DegenerateDataError(BVGibbsError, ValueError):
    """The data admit no admissible estimate."""


class BijectivityError(BVGibbsError, ValueError):
    """The truncation level is too large for gamma(rho) to be one-to-one."""


class ShapeError(BVGibbsError, ValueError):
    """Chains or arrays have incompatible shapes."""


class InitializationError(BVGibbsError, ValueError):
    """A chain cannot be started from the supplied state."""
