"""Exception hierarchy shared by every module."""


class CohortError(Exception):
    """Base class for all errors raised by cohortsgd."""


class DatasetError(CohortError):
    """A dataset file or bundle failed validation.

    ``path`` and ``line`` locate the offending input when it came from disk.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class MissingFile(DatasetError):
    pass


class MalformedLine(DatasetError):
    pass


class DimensionMismatch(DatasetError):
    pass


class DuplicateCoordinate(DatasetError):
    pass


class NonOneHotProperty(DatasetError):
    def __init__(self, row, path=None, line=None):
        self.row = row
        super().__init__(f"property row {row} is not one-hot", path, line)


class EmptyInput(CohortError, ValueError):
    pass


class ZeroVariance(CohortError, ValueError):
    """Rank correlation is undefined because one input has tied ranks only."""


class NoKnownPositives(CohortError):
    """The label vector has no disclosed positive."""


class SingleClass(CohortError, ValueError):
    pass


class TooFewPairs(CohortError, ValueError):
    pass


class DegenerateLikelihood(CohortError, ValueError):
    pass
