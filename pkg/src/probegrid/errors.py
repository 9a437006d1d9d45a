"""Exception types shared across the package."""


class ProbeGridError(Exception):
    """Base class for all errors raised by probegrid."""


class InvalidHyperparameter(ProbeGridError):
    """A hyperparameter violates its structural constraints."""


class DomainViolation(ProbeGridError):
    """An input coordinate lies outside the unit hypercube."""


class ShapeMismatch(ProbeGridError):
    """Array shapes do not line up with the declared model layout."""


class StaleTrace(ProbeGridError):
    """A backward pass received a trace recorded against different tables."""


class UnbakedModel(ProbeGridError):
    """Serialization was requested before the index codebooks were baked."""


class TrainingDiverged(ProbeGridError):
    """The training loss became non-finite."""


class TargetTooSmall(ProbeGridError):
    """A requested file-size budget is below the smallest legal model."""


class ModelFileError(ProbeGridError):
    """Base class for model-file parsing failures."""


class BadMagic(ModelFileError):
    """The file does not start with the expected magic bytes."""


class VersionMismatch(ModelFileError):
    """The file declares an unsupported format version."""


class TruncatedFile(ModelFileError):
    """The file ends before the declared payload does."""


class InvariantViolation(ModelFileError):
    """A decoded header or table violates a format invariant."""


class DimensionMismatch(ProbeGridError):
    """Two images that should agree in shape do not."""


class UnsupportedFormat(ProbeGridError):
    """An image file uses a pixel format outside 8-bit RGB/grayscale."""
