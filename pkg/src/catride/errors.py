"""Exception hierarchy shared by all catride modules."""


class CatrideError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(CatrideError):
    """Array dimensions do not match what an operation requires."""


class EmptyBatchError(CatrideError):
    """An operation that reduces over a batch received zero elements."""


class DegenerateBatchError(CatrideError):
    """A batch statistic (e.g. mean distance) is degenerate for the operation."""


class ConfigError(CatrideError):
    """A configuration value violates its invariants."""


class NumericError(CatrideError):
    """A non-finite value appeared where finite arithmetic is required."""


class StateError(CatrideError):
    """An operation was called before its required state was populated."""


class SamplingError(CatrideError):
    """Triplet sampling cannot satisfy its preconditions."""


class ValidationError(CatrideError):
    """External data failed validation on load."""


class ParseError(CatrideError):
    """A file could not be parsed at all."""
