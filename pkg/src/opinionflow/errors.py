"""Exception types shared across the package."""


class OpinionFlowError(Exception):
    """Base class for all package-specific errors."""


class DomainError(OpinionFlowError):
    """An opinion or density value lies outside its admissible range."""


class MassMismatchError(OpinionFlowError):
    """Two measures that must carry the same mass do not."""


class AtomizationError(OpinionFlowError):
    """Initial particle placement failed (mass mismatch or vanishing density)."""


class SpacingUnderflowError(OpinionFlowError):
    """Two consecutive particles are closer than floating point can resolve."""


class IntegrationError(OpinionFlowError):
    """Time integration failed; carries the offending time and particle index."""

    def __init__(self, message: str, t: float, species: str | None = None,
                 index: int | None = None):
        super().__init__(message)
        self.t = t
        self.species = species
        self.index = index


class NonIntegrableProfileError(OpinionFlowError):
    """A stationary profile has a divergent normalization integral."""


class ConfigError(OpinionFlowError):
    """A scenario configuration failed to parse or validate.

    ``violations`` holds the structured validation report when the failure
    came from assumption checks rather than syntax.
    """

    def __init__(self, message: str, violations: list | None = None):
        super().__init__(message)
        self.violations = violations or []
