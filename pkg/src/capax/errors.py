"""Exception hierarchy for capax."""


class CapaxError(Exception):
    """Base class for all capax-specific failures."""


class InvalidDomainError(CapaxError):
    """Domain parameters are inconsistent (non-positive radii, radial map
    not strictly positive, origin not interior)."""


class UnsupportedDimensionError(CapaxError):
    """An operation was requested in a dimension it does not support."""


class MeshError(CapaxError):
    """A surface mesh violates a structural invariant."""


class SolveError(CapaxError):
    """The boundary-integral linear system could not be solved reliably."""


class QuadratureError(CapaxError):
    """A near-singular panel integral could not be resolved."""


class OutOfContractError(CapaxError):
    """A field evaluation point violates the accuracy contract
    (interior point or inside the near-boundary exclusion shell)."""


class LevelWindowError(CapaxError):
    """A requested level value lies outside the star-shaped extraction
    window of the solved domain."""


class ExtractionError(CapaxError):
    """Level-surface root finding failed to bracket or converge."""


class CriticalPointError(CapaxError):
    """Level-set normal data requested at a critical point of the potential."""
