"""Exception classes shared across the package."""


class ParameterError(ValueError):
    """An argument violates a documented precondition."""


class StructuralError(ValueError):
    """Shapes or lengths of related inputs disagree."""


class DomainError(ValueError):
    """An instance or hypothesis lies outside the declared domain."""


class CapabilityError(RuntimeError):
    """The requested computation is not supported for these inputs."""


class FormatError(ValueError):
    """A binary file does not match its declared layout."""
