"""Exception types shared across the package."""


class AbcForestError(Exception):
    """Base class for all package-specific errors."""


class TableFormatError(AbcForestError):
    """A reference-table file violates the CSV contract (bad header, cell, or row)."""


class DegenerateInputError(AbcForestError, ValueError):
    """An input is structurally valid but carries no usable signal (e.g. constant series)."""


class NumericError(AbcForestError, ArithmeticError):
    """A numerical routine failed to converge or produced an invalid intermediate."""
