"""Exception types raised across the package.

Each carries an ``exit_code`` used by the command-line front end:
1 usage error, 2 data error, 3 numerical failure.
"""


class GaisError(Exception):
    exit_code = 2


class UsageError(GaisError):
    exit_code = 1


class DataError(GaisError, ValueError):
    exit_code = 2


class MissingTarget(DataError):
    pass


class RaggedRows(DataError):
    pass


class EmptyTable(DataError):
    pass


class UnseenCategory(DataError):
    pass


class TooFewInstances(DataError):
    pass


class InvalidOverlap(DataError):
    pass


class InvalidLabel(DataError):
    pass


class EmptyClass(DataError):
    pass


class ShapeError(DataError):
    pass


class OutOfSpace(DataError):
    pass


class NumericalError(GaisError, ArithmeticError):
    exit_code = 3


class NonFiniteInput(NumericalError):
    pass


class DivergedTraining(NumericalError):
    def __init__(self, chunk_id, message=None):
        self.chunk_id = chunk_id
        super().__init__(message or f"non-finite loss in chunk {chunk_id}")


class NumericalFailure(NumericalError):
    pass
