"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
failures onto its documented exit statuses without a lookup table.
"""


class JPAError(Exception):
    exit_code = 1


class ConfigError(JPAError, ValueError):
    exit_code = 2


class DomainError(JPAError, ValueError):
    """A request outside the physical validity domain of a model."""

    exit_code = 3


class ConvergenceError(JPAError, RuntimeError):
    exit_code = 4


class NearHalfFluxQuantum(DomainError):
    """Flux sits in the band around half a flux quantum where L_S diverges."""


class Quenched(DomainError):
    """The pump flux excursion enters the near-half-flux band."""


class DispersiveRegimeError(DomainError):
    pass


class AboveThreshold(DomainError):
    """Parametric drive neutralises the cavity loss (self-oscillation)."""


class UnphysicalSNRI(DomainError):
    pass


class TargetUnreachable(DomainError):
    pass


class StepTooLarge(DomainError):
    pass


class InsufficientWings(DomainError):
    pass


class NoResonanceFound(DomainError):
    pass


class ThresholdInsideData(DomainError):
    pass


class TooManyRejections(DomainError):
    pass


class NoConvergence(ConvergenceError):
    """Iterative solver failed; ``last`` holds the final iterate."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class NotSteady(ConvergenceError):
    pass


class DispersiveRegimeWarning(UserWarning):
    pass
