"""Exception hierarchy shared by all actirhythm modules."""


class ActirhythmError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(ActirhythmError, ValueError):
    """An argument is outside its valid domain."""


class SchemaError(ActirhythmError, ValueError):
    """Input file lacks mandatory columns."""


class EmptyInputError(ActirhythmError, ValueError):
    """No parseable rows in the input."""


class OrderingError(ActirhythmError, ValueError):
    """Timestamps are out of order beyond the tolerated reorder window."""


class TaxonomyError(ActirhythmError, KeyError):
    """A behavior name is not present in the configured taxonomy."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class LabelConflictError(ActirhythmError, ValueError):
    """Overlapping label events disagree on the activity state."""


class CoverageError(ActirhythmError, ValueError):
    """Required data (labels, day contexts) does not cover the requested span."""


class NumericError(ActirhythmError, ArithmeticError):
    """Non-finite input or a division by a zero time step."""


class AlignmentError(ActirhythmError, ValueError):
    """Two series share no overlapping epochs."""


class DegenerateError(ActirhythmError, ValueError):
    """The statistic is undefined for the supplied data."""


class SelectionError(ActirhythmError, ValueError):
    """A threshold cannot be selected from the curve."""


class NoEventError(ActirhythmError, ValueError):
    """The sun does not rise or set on the requested date."""
