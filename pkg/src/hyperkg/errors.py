"""Exception hierarchy shared across the package.

Every domain failure derives from :class:`HyperError` so the CLI can map it to
exit code 1 without catching unrelated bugs.
"""


class HyperError(Exception):
    """Base class for domain errors."""


class ArityConflict(HyperError):
    pass


class EmptyFile(HyperError):
    pass


class EmptyGraph(HyperError):
    pass


class UnknownEntity(HyperError, KeyError):
    pass


class UnknownRelation(HyperError, KeyError):
    pass


class PositionOutOfRange(HyperError, IndexError):
    pass


class ShapeMismatch(HyperError, ValueError):
    pass


class IdOutOfRange(HyperError, IndexError):
    pass


class NotScalar(HyperError, ValueError):
    pass


class ExhaustedPool(HyperError):
    pass


class TruthNotInCandidates(HyperError, ValueError):
    pass


class DegenerateSplit(HyperError):
    pass


class ConfigMismatch(HyperError):
    pass


class CheckpointError(HyperError):
    pass


class ConfigError(HyperError):
    pass
