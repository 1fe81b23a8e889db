"""Exception hierarchy shared by every module."""


class DBSTError(Exception):
    """Base class for all library errors."""


class ConfigError(DBSTError):
    """Invalid or incomplete configuration."""


# data ingestion / pools
class MagicMismatch(DBSTError):
    pass


class CountMismatch(DBSTError):
    pass


class TruncatedFile(DBSTError):
    pass


class MissingColumn(DBSTError):
    pass


class NonNumericCell(DBSTError):
    pass


class EmptyTrainSplit(DBSTError):
    pass


class InsufficientClassCount(DBSTError):
    pass


class UnknownId(DBSTError):
    pass


class AlreadyLabeled(DBSTError):
    pass


# network / optimisation
class DimensionMismatch(DBSTError):
    pass


class DomainError(DBSTError):
    pass


class GraphNotRecorded(DBSTError):
    pass


class NonFiniteGradient(DBSTError):
    pass


# losses
class ClassOutOfRange(DBSTError):
    pass


class NotNormalized(DBSTError):
    pass


class NonPositiveWeight(DBSTError):
    pass


class EmptyClass(DBSTError):
    pass


# uncertainty / selection
class EmptySamples(DBSTError):
    pass


class MissingAleatoricHead(DBSTError):
    pass


class EmptyList(DBSTError):
    pass


# clustering
class TooFewPoints(DBSTError):
    pass


class EmptyCluster(DBSTError):
    pass


# metrics
class LengthMismatch(DBSTError):
    pass


class LabelOutOfRange(DBSTError):
    pass


class EmptyMatrix(DBSTError):
    pass
