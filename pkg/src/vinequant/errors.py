"""Exception hierarchy shared by all vinequant modules."""


class VinequantError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(VinequantError):
    """Malformed or out-of-domain input (bad shapes, NaNs, bad levels)."""


class DegenerateDataError(VinequantError):
    """Data carries no usable information (constant columns, identical pairs)."""


class NumericError(VinequantError):
    """A numerical routine failed where it must not (inversion non-convergence)."""
