"""Exception types shared across the package."""


class DoseFindingError(ValueError):
    """Base class for errors raised by this package."""


class InvalidDesignError(DoseFindingError):
    """Design parameters violate their constraints (e.g. phi1 >= phi)."""


class TrialStateError(DoseFindingError):
    """Operation applied to a trial state that cannot accept it."""


class ScenarioError(DoseFindingError):
    """Scenario definition is inconsistent (non-monotone probs, wrong true MTD)."""


class OptimizationFailureError(DoseFindingError):
    """No optimizer restart improved on the initial point."""


class NumericalUnderflowError(DoseFindingError):
    """A posterior normalization underflowed to zero mass."""


class UnsupportedFamilyError(DoseFindingError):
    """Requested a distribution family or link outside the supported set."""
