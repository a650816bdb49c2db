"""Exception types shared across the package."""


class MinkflowError(Exception):
    """Base class for all package errors."""


class GridError(MinkflowError):
    """Invalid grid dimension/resolution, or mismatched grids."""


class ConvexityError(MinkflowError):
    """A body that must be strictly convex is not (min radii eigenvalue <= 0)."""


class QuadratureError(MinkflowError):
    """A numerical integral failed to converge or diverges."""


class MeasureError(MinkflowError):
    """Invalid sphere measure (empty, negative density, bad atoms)."""


class SpecError(MinkflowError):
    """A flow/solver specification violates its preconditions."""


class CollapseError(MinkflowError):
    """Flow step size underflowed or the body degenerated mid-run."""


class InvariantViolationError(MinkflowError):
    """A monotone/conserved diagnostic was violated persistently."""


class ConfigError(MinkflowError):
    """Run configuration failed to parse or validate.

    ``problems`` collects every validation message so a bad config is
    reported in one shot.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
