"""Exception hierarchy shared by all modules."""


class DoeblinError(Exception):
    """Base class for every error raised by this package."""


class UsageError(DoeblinError, ValueError):
    """A caller violated a precondition (bad parameter, wrong model, arity)."""


class ResourceError(DoeblinError, RuntimeError):
    """A configured memory or work budget was exceeded."""


class CensoredError(DoeblinError, RuntimeError):
    """An iterative procedure hit its cap before producing a value."""


class InvalidBoundError(DoeblinError, RuntimeError):
    """A caller-supplied bound was observed to be violated at runtime."""
