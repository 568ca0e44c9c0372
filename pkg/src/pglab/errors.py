"""Exception taxonomy shared across the package.

Every failure mode raised by library code derives from PglabError so callers
(and the CLI exit-code mapping) can distinguish bad input from numerical
breakdown without string matching.
"""


class PglabError(Exception):
    """Base class for all package errors."""


class ValidationError(PglabError):
    """An input violates a documented invariant (names the invariant)."""


class ParseError(PglabError):
    """A model file is not syntactically valid or misses required keys."""


class NonUniqueStationary(PglabError):
    """The stationary distribution is not unique (rank-deficient balance system)."""


class InvalidDiscount(PglabError):
    """Discount factor outside [0, 1)."""


class SingularSystem(PglabError):
    """A linear solve produced non-finite values or an unacceptable residual."""


class DimensionMismatch(PglabError):
    """Array shapes are inconsistent with the declared model dimensions."""


class RewardKindMismatch(PglabError):
    """Operation requires control-dependent (or state) rewards and got the other kind."""


class ZeroProbabilityTransition(PglabError):
    """A sampled event has zero probability; signals rng or model corruption."""


class CycleTimeout(PglabError):
    """A regenerative cycle exceeded the configured maximum length."""


class WindowTooLarge(PglabError):
    """Truncation window does not fit in the requested trajectory length."""


class UnboundedRewardGradient(PglabError):
    """A parameter-dependent reward gradient exceeds its declared bound."""


class MissingSecondDerivatives(PglabError):
    """Chain does not supply analytic second derivatives of its transitions."""


class NotDistinct(PglabError):
    """Transition-matrix eigenvalues fail the pairwise distinctness test."""


class DegenerateGradient(PglabError):
    """The exact gradient is numerically zero; relative comparisons undefined."""


class DegenerateFeatures(PglabError):
    """Feature vector is orthogonal to the stationary weighting; no fixed point."""


class DecompositionFailure(PglabError):
    """Eigendecomposition did not converge or could not be normalized."""
