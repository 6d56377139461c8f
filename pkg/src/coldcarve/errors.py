"""Exception hierarchy shared by the package."""


class ColdCarveError(Exception):
    """Base class for every error raised by coldcarve."""


# model-ir
class InvalidModel(ColdCarveError, ValueError):
    """An IRModel violates one of its structural invariants."""


class MalformedXml(ColdCarveError, ValueError):
    pass


class SchemaViolation(ColdCarveError, ValueError):
    pass


class BlobSizeMismatch(ColdCarveError, ValueError):
    pass


# memory-sim
class TooSmall(ColdCarveError, ValueError):
    pass


class LengthMismatch(ColdCarveError, ValueError):
    pass


class EvenTrialCount(ColdCarveError, ValueError):
    pass


class DegenerateVector(ColdCarveError, ValueError):
    pass


# carver
class NotFound(ColdCarveError, LookupError):
    pass


class Unrepairable(ColdCarveError, ValueError):
    pass


class NoMatch(ColdCarveError, LookupError):
    pass


# nn-core / distill / metrics
class ShapeMismatch(ColdCarveError, ValueError):
    pass


class InvalidDistribution(ColdCarveError, ValueError):
    pass


class UnlabeledData(ColdCarveError, ValueError):
    pass


class ArchitectureMismatch(ColdCarveError, ValueError):
    pass


class ZeroTeacherAccuracy(ColdCarveError, ZeroDivisionError):
    pass


# cli / report
class ConfigError(ColdCarveError, ValueError):
    pass


class EmptyResults(ColdCarveError, ValueError):
    pass


class SchemaError(ColdCarveError, ValueError):
    pass
