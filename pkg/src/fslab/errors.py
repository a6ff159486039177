"""Exception hierarchy shared by all fslab modules."""


class FslabError(Exception):
    """Base class for every error raised by fslab."""


class DomainError(FslabError, ValueError):
    """An argument lies outside the domain of the operation."""


class SizeError(FslabError):
    """A computation would exceed its declared budget."""


class FeasibilityError(FslabError):
    """No admissible configuration exists for the requested ensemble."""


class NoAdmissiblePathError(FeasibilityError):
    """The partition function vanishes, so conditional laws are undefined."""


class UnsolvableScaleError(FslabError):
    """The scale equation H^2 V(H) = 1 has no root on the tabulated range."""


class ResolutionError(FslabError):
    """The spectral discretisation cannot resolve the requested eigenpairs."""


class SingularityError(FslabError):
    """A determinant is too close to zero for its logarithm to be used."""


class StiffnessError(FslabError):
    """The SDE integrator kept rejecting steps even after refining dt."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ConvexityError(FslabError):
    """A directional energy does not have a convex homogeneous extension."""


class NonSmoothError(FslabError):
    """A finite-difference second derivative is unstable (corner in the energy)."""


class DegeneratePlaquetteError(FslabError):
    """The Wulff shape fills the square (w = 4); plaquettes are undefined."""


class BranchError(FslabError, ValueError):
    """The requested area is on the wrong branch of the constrained problem."""


class SubcriticalError(FslabError):
    """beta is at or below the critical inverse temperature."""


class SupercriticalityError(FslabError):
    """The SAW length penalty does not exceed log(mu_c); the tail bound diverges."""


class ConfigError(FslabError):
    """Invalid experiment configuration, optionally anchored at a line number."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip() if where else message)
