"""Exception hierarchy shared across the package."""


class AuralkitError(Exception):
    """Base class for all library errors."""


class DomainError(AuralkitError, ValueError):
    """An argument lies outside the operation's domain."""


class ShapeError(AuralkitError, ValueError):
    """Array shapes are incompatible."""


class SceneParseError(AuralkitError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedGeometryError(AuralkitError):
    pass


class MaterialReferenceError(AuralkitError, KeyError):
    def __init__(self, material):
        self.material = material
        super().__init__(f"unknown material {material!r}")

    def __str__(self):
        return self.args[0]


class DegreeZeroError(DomainError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"vertex {index} has zero degree")


class RangeError(DomainError):
    pass


class UnsupportedSceneError(AuralkitError):
    pass


class ConfigError(AuralkitError):
    pass


class AlignmentError(AuralkitError):
    pass


class InsufficientDecayError(AuralkitError):
    pass


class InfeasibleSceneError(AuralkitError):
    pass


class NumericalError(AuralkitError):
    def __init__(self, message, block=None):
        self.block = block
        super().__init__(message)


class TrainingError(AuralkitError):
    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)


class InvariantError(AuralkitError):
    """An internal consistency check failed."""
