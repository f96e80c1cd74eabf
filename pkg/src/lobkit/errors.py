"""Exception hierarchy shared by every lobkit module.

``DataError`` subclasses signal bad or inconsistent input data; the CLI maps
them to exit status 1.
"""


class LobkitError(Exception):
    pass


class DataError(LobkitError):
    pass


# --- parsing / cleaning -------------------------------------------------------

class RowCountMismatch(DataError):
    def __init__(self, n_messages, n_books):
        super().__init__(
            f"message file has {n_messages} rows but orderbook file has {n_books}"
        )
        self.n_messages = n_messages
        self.n_books = n_books


class MalformedRow(DataError):
    def __init__(self, path, line, reason):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line


class NonMonotoneTime(DataError):
    def __init__(self, path, line):
        super().__init__(f"{path}:{line}: timestamp decreases")
        self.path = path
        self.line = line


class EmptyDay(DataError):
    pass


class MissingBest(DataError):
    pass


class CrossedQuote(DataError):
    pass


# --- statistics ---------------------------------------------------------------

class EmptyInput(DataError):
    pass


class InsufficientLevels(DataError):
    def __init__(self, side, populated, required):
        super().__init__(
            f"{side} side has {populated} populated levels, {required} required"
        )
        self.side = side


class ZeroPriceChanges(DataError):
    pass


class HorizonTooLong(DataError):
    pass


class NoMajority(LobkitError):
    pass


# --- dataset building ---------------------------------------------------------

class InsufficientHistory(DataError):
    pass


class EmptyClass(DataError):
    pass


class IndexOutOfRange(DataError):
    pass


# --- evaluation / model -------------------------------------------------------

class LengthMismatch(DataError):
    def __init__(self, n_a, n_b, what="streams"):
        super().__init__(f"length mismatch between {what}: {n_a} != {n_b}")


class EmptyMatrix(DataError):
    pass


class DegenerateSeries(DataError):
    pass


class NonFiniteLoss(LobkitError):
    pass


class ShapeMismatch(DataError):
    pass


class InvalidConfig(LobkitError):
    pass
