"""Exception hierarchy shared by every layer of the package."""


class LmfMultError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(LmfMultError, ValueError):
    pass


class AxisOutOfRange(LmfMultError, ValueError):
    pass


class EvenKernelWithSamePadding(LmfMultError, ValueError):
    pass


class EmptySequence(LmfMultError, ValueError):
    pass


class EmptySource(LmfMultError, ValueError):
    pass


class NonFiniteValue(LmfMultError, FloatingPointError):
    """A NaN or Inf reached an op boundary."""


class NonScalarLoss(LmfMultError, ValueError):
    pass


class DetachedTensor(LmfMultError, ValueError):
    """backward() was called on a tensor that is not connected to any tape."""


class MissingGradient(LmfMultError, ValueError):
    pass


class NonVectorInput(LmfMultError, ValueError):
    pass


class OddDimension(LmfMultError, ValueError):
    pass


class InvalidConfig(LmfMultError, ValueError):
    pass


class DimMismatch(LmfMultError, ValueError):
    pass


class VersionMismatch(LmfMultError, ValueError):
    pass


class ShapeCorruption(LmfMultError, ValueError):
    pass


class InvalidRange(LmfMultError, ValueError):
    pass


class SchemaViolation(LmfMultError, ValueError):
    pass


class DimMismatchAgainstManifest(LmfMultError, ValueError):
    pass


class LengthMismatch(LmfMultError, ValueError):
    pass


class NonFiniteLoss(LmfMultError, FloatingPointError):
    pass
