"""Exception hierarchy.

Data problems (bad input files, shape mismatches) derive from ``DataError``;
failures of the numerics (singular covariances, unreachable quantile levels)
derive from ``NumericError``. The CLI maps the two families to exit codes 3
and 4.
"""


class SurrogateError(Exception):
    """Base class for all package errors."""


class DataError(SurrogateError, ValueError):
    pass


class NumericError(SurrogateError, ArithmeticError):
    pass


class EmptyTable(DataError):
    pass


class RaggedRows(DataError):
    def __init__(self, row, expected, got):
        self.row, self.expected, self.got = row, expected, got
        super().__init__(f"row {row} has {got} cells, expected {expected}")


class NonFiniteValue(DataError):
    def __init__(self, row, col, text=None):
        self.row, self.col = row, col
        msg = f"non-finite value at row {row}, column {col}"
        if text is not None:
            msg += f" ({text!r})"
        super().__init__(msg)


class UnparseableValue(DataError):
    def __init__(self, row, col, text):
        self.row, self.col, self.text = row, col, text
        super().__init__(f"cannot parse {text!r} at row {row}, column {col} as a number")


class DimensionMismatch(DataError):
    pass


class MissingResponse(DataError):
    pass


class KTooLarge(DataError):
    pass


class EmptyPointSet(DataError):
    pass


class EmptyTraining(DataError):
    pass


class ClassOutOfRange(DataError):
    pass


class DegenerateColumn(DataError):
    def __init__(self, col, name=None):
        self.col = col
        label = f"{col} ({name})" if name is not None else f"{col}"
        super().__init__(f"column {label} has (near) zero standard deviation")


class TooFewPoints(DataError):
    pass


class NotSorted(DataError):
    pass


class EmptyList(DataError):
    pass


class EmptyGrid(DataError):
    pass


class ProvenanceError(DataError):
    """Input file lacks the header written by the preceding pipeline stage."""


class NotPositiveDefinite(NumericError):
    pass


class MixedBandwidth(NumericError):
    pass


class LevelBeyondDeficit(NumericError):
    pass


class OutOfDomain(NumericError):
    pass


class NonPositiveInput(NumericError):
    pass
