"""Exception hierarchy shared by every interlab module."""


class InterlabError(Exception):
    """Base class for all library errors."""


class ShapeError(InterlabError, ValueError):
    pass


class LabelError(InterlabError, ValueError):
    pass


class UnsupportedActivationError(InterlabError, ValueError):
    pass


class TrainingError(InterlabError, RuntimeError):
    def __init__(self, message: str, epoch: int):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch


class ModelFormatError(InterlabError, ValueError):
    """Wrong magic bytes or unsupported format version."""


class MalformedFileError(ModelFormatError):
    """File is truncated or its contents cannot be decoded."""


class IngestionError(InterlabError, OSError):
    pass


class CapacityError(InterlabError, ValueError):
    pass


class InvalidPairError(InterlabError, ValueError):
    pass


class ConfigError(InterlabError, ValueError):
    pass


class ConsistencyError(InterlabError, ValueError):
    pass


class DependencyError(InterlabError, RuntimeError):
    pass
