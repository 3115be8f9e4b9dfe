"""Exception types shared across the package."""


class UdadilError(Exception):
    """Base class for errors raised by this package."""


class SolverError(UdadilError):
    """An optimization routine failed (non-convergence, underflow, ...)."""


class DataFormatError(UdadilError):
    """A file could not be parsed (bad magic, ragged rows, truncation, ...)."""
