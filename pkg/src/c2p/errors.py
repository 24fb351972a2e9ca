"""Exception hierarchy shared by the package."""


class C2PError(Exception):
    """Base class for all errors raised by c2p."""


class DegenerateInput(C2PError):
    pass


class EmptyInput(C2PError):
    pass


class TooFewCorrespondences(C2PError):
    pass


class DegenerateSpectrum(C2PError):
    pass


class NotRankTwo(C2PError):
    pass


class ParallelRays(C2PError):
    """Raised when the two rays of a correspondence are (anti)parallel and depth is undefined."""


class AllAbstained(C2PError):
    pass


class InfeasibleConstraints(C2PError):
    """Linearly dependent constraints with inconsistent right-hand sides."""


class ParseError(C2PError):
    """Malformed correspondence or descriptor file.

    Attributes:
        lines: 1-based line numbers of the offending rows (may be empty).
    """

    def __init__(self, message, lines=()):
        self.lines = list(lines)
        if self.lines:
            message = f"{message} (lines: {', '.join(map(str, self.lines))})"
        super().__init__(message)
