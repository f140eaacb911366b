"""Exception hierarchy shared across the toolkit.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented status codes (2 = data error, 3 = remote error).
"""


class EmbInvertError(Exception):
    exit_code = 2


# corpus / vocab
class EmptyBucket(EmbInvertError):
    pass


# embedder
class EmptyText(EmbInvertError):
    pass


class RefusedShortText(EmbInvertError):
    pass


class DimensionMismatch(EmbInvertError):
    pass


class RemoteUnavailable(EmbInvertError):
    exit_code = 3


# trainset
class AllRefused(EmbInvertError):
    pass


class BadFractions(EmbInvertError, ValueError):
    pass


# decoder
class ShapeMismatch(EmbInvertError, ValueError):
    pass


class DivergenceDetected(EmbInvertError):
    pass


class CorruptCheckpoint(EmbInvertError):
    pass


class VocabMismatch(EmbInvertError):
    pass


# metrics
class EmptyReference(EmbInvertError, ValueError):
    pass


class TooFewTrials(EmbInvertError, ValueError):
    pass


class DegenerateVariance(UserWarning):
    """Both samples have zero variance; the t statistic is undefined."""


# simdata
class InsufficientGrams(EmbInvertError):
    pass


class ZeroVariance(EmbInvertError, ValueError):
    pass


# attribute
class EmptyReconstruction(EmbInvertError):
    pass


class IoFailure(EmbInvertError):
    pass
