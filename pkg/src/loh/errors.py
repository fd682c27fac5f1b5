"""Exception hierarchy shared by all modules."""


class LohError(Exception):
    """Base class for every error raised by the toolkit."""


class ParseError(LohError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class ProgramError(LohError):
    """A syntactically valid program that violates a structural rule."""


class DuplicateNameError(ProgramError):
    pass


class UnresolvedPlaceholderError(ProgramError):
    pass


class ForwardReferenceError(ProgramError):
    pass


class CyclicDependencyError(ProgramError):
    def __init__(self, cycle):
        self.cycle = tuple(cycle)
        super().__init__("cyclic placeholder dependency: " + " -> ".join(self.cycle))


class MissingIndexError(LohError):
    pass


class SpaceTooLargeError(LohError):
    pass


class DataError(LohError):
    pass


class NumericError(LohError):
    pass


class StaleTapeError(LohError):
    pass


class SemanticsError(LohError):
    """Raised when an operation is only sound under Gödel semantics."""
