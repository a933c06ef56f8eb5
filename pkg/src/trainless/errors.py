"""Exception hierarchy shared by all modules."""


class TrainlessError(Exception):
    pass


class ArchitectureError(TrainlessError, ValueError):
    """An architecture (or one of its layers) is malformed."""


ValidationError = ArchitectureError


class EmptyArchitecture(ArchitectureError):
    pass


class BadSkipSource(ArchitectureError):
    pass


class SpatialCollapse(ArchitectureError):
    pass


class ShapeMismatch(ArchitectureError):
    pass


class IndexOutOfRange(TrainlessError, IndexError):
    pass


class ExhaustedRetries(TrainlessError, RuntimeError):
    pass


class UnknownDataset(TrainlessError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class InvalidRecord(TrainlessError, ValueError):
    pass


class SchemaError(TrainlessError, ValueError):
    """A persisted file does not satisfy its schema or dimension invariants."""


class ModelDimensionMismatch(SchemaError):
    pass


class DimensionMismatch(TrainlessError, ValueError):
    pass


class StaleCache(TrainlessError, RuntimeError):
    pass


class EmptyInput(TrainlessError, ValueError):
    pass


class LengthMismatch(TrainlessError, ValueError):
    pass


class DegenerateInput(TrainlessError, ValueError):
    pass
