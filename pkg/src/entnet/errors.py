"""Exception types shared across the package."""


class EntNetError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(EntNetError):
    """Operands have incompatible shapes for the requested operation."""


class NearZeroNorm(EntNetError):
    """A vector that must be normalized has norm below the guard threshold.

    A near-zero memory slot indicates a bug or a pathological initialization,
    so this surfaces as an error instead of being papered over with an
    epsilon division.
    """


class DoubleBackward(EntNetError):
    """backward() was called twice on the same tape without re-recording."""


class InvalidRate(EntNetError):
    """Dropout rate outside [0, 1)."""


class EmptyCorpus(EntNetError):
    """Vocabulary construction was given no token sequences."""


class UnknownToken(EntNetError):
    """A token (or token index) is not part of the closed vocabulary."""


class TooLong(EntNetError):
    """A token sequence exceeds the fixed padded length."""


class MalformedLine(EntNetError):
    """A dataset file line does not match the expected format.

    Carries the 1-based line number of the offending line.
    """

    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class OffGrid(EntNetError):
    """An agent trajectory leaves the grid at some intermediate step."""


class NoBlank(EntNetError):
    """A cloze query does not contain the blank placeholder token."""


class BadCandidateCount(EntNetError):
    """A cloze sample does not come with the expected number of candidates."""


class UntiedKeys(EntNetError):
    """Direct candidate prediction requested without slot/candidate tying."""


class EmptyRuns(EntNetError):
    """Seed selection was given no runs to choose from."""


class DivergedLoss(EntNetError):
    """Training loss became non-finite; aborted with diagnostics."""
