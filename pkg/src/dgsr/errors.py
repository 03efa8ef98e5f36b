"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all engine failures."""


class ShapeError(EngineError):
    """Tensor or parameter shape mismatch."""


class ParameterError(EngineError):
    """Weights inconsistent with the model configuration."""


class RangeError(EngineError):
    """Value outside its documented range."""


class FormatError(EngineError):
    """Malformed file content."""


class ConfigError(EngineError):
    """Invalid model configuration."""
