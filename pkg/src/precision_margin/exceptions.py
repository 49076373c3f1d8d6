"""Exception hierarchy.

Every error carries a short ``code`` used by the experiment runner to tag
failed replications in its output.
"""


class PrecisionMarginError(Exception):
    code = "error"


class ParameterDomainError(PrecisionMarginError, ValueError):
    code = "parameter_domain"


class DomainError(PrecisionMarginError, ValueError):
    code = "domain"


class InsufficientDataError(PrecisionMarginError, ValueError):
    code = "insufficient_data"


class DegenerateSampleError(PrecisionMarginError, ValueError):
    code = "degenerate_sample"


class SupportError(PrecisionMarginError, ValueError):
    code = "support"


class ShapeError(PrecisionMarginError, ValueError):
    code = "shape"


class InfeasibleTargetError(PrecisionMarginError):
    """The requested reliability cannot be reached for these parameters."""

    code = "infeasible_target"


class IncompatibleMarginError(PrecisionMarginError):
    """Reliability target plus probability margin reached or exceeded one."""

    code = "incompatible_margin"


class SaturatedProbabilityError(PrecisionMarginError, ValueError):
    code = "saturated_probability"


class NonphysicalBasisError(PrecisionMarginError, ValueError):
    code = "nonphysical_basis"


class UnsupportedModeError(PrecisionMarginError):
    code = "unsupported_mode"


class NonconvergenceError(PrecisionMarginError):
    code = "nonconverged"
