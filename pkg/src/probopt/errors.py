"""Exception hierarchy.

Every error raised for bad domain input derives from ``ArtifactError`` so the
CLI can map it to exit code 1. ``UsageError`` is the one exception that maps
to exit code 2.
"""


class ArtifactError(Exception):
    """Base class for domain errors."""


class UsageError(Exception):
    """Invalid command line or configuration."""


# corpus
class EowMarkCollision(ArtifactError):
    pass


class InvalidEncoding(ArtifactError):
    pass


class EmptyCorpus(ArtifactError):
    pass


class TokenNotInTable(ArtifactError):
    pass


# tokenizer
class InfeasibleK(ArtifactError):
    pass


class TooLarge(ArtifactError):
    pass


# cehpo / skip-gram
class EmptyScores(ArtifactError):
    pass


class NoEliteSamples(ArtifactError):
    pass


class ZeroMass(ArtifactError):
    pass


class RangeEmpty(ArtifactError):
    pass


class ConfigInvalid(ArtifactError):
    pass


class CorpusTooSmall(ArtifactError):
    pass


class VocabEmpty(ArtifactError):
    pass


# posenc / prflash / saq
class OddDimension(ArtifactError):
    pass


class ShapeMismatch(ArtifactError):
    pass


class DistanceOutOfRange(ArtifactError):
    pass


class IndexOutOfRange(ArtifactError):
    pass


class EmptyProbs(ArtifactError):
    pass


class GroupSizeMismatch(ArtifactError):
    pass


class DimensionMismatch(ArtifactError):
    pass
