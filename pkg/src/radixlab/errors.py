"""Exception hierarchy shared by all radixlab modules."""


class RadixLabError(Exception):
    pass


class SpecError(RadixLabError, ValueError):
    """Raised when a source description is not a valid Markov model."""


class NonStochastic(SpecError):
    pass


class OutOfRange(SpecError):
    pass


class BadDimension(SpecError):
    pass


class SymbolOutOfRange(RadixLabError, ValueError):
    pass


class CapReached(RadixLabError):
    """Two strings agreed up to the depth cap and could not be told apart."""


class InvalidRank(RadixLabError, ValueError):
    pass


class NotInSigmaZero(RadixLabError, ValueError):
    pass


class NotLinearFamily(RadixLabError, ValueError):
    pass


class UnsupportedAlphabet(RadixLabError, ValueError):
    pass


class EmptyRestriction(RadixLabError, ValueError):
    pass


class DegenerateT(RadixLabError, ValueError):
    pass


class IterationLimit(RadixLabError, RuntimeError):
    pass
