"""Exception hierarchy shared across the package."""


class StimfieldError(Exception):
    """Base class for all package-specific errors."""


class VolumeFormatError(StimfieldError):
    """Malformed volume header or inconsistent payload."""


class OutOfDomainError(StimfieldError):
    """A sample point (or its differencing stencil) left the grid hull."""


class GeometryError(StimfieldError):
    """Invalid lead geometry or voxelization conflict."""


class AssemblyError(StimfieldError):
    """The discrete system cannot be built (singular or inconsistent)."""


class ConvergenceError(StimfieldError):
    """Iterative solve did not reach the requested tolerance."""

    def __init__(self, message, iterations=None, relative_residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.relative_residual = relative_residual


class InfeasibleError(StimfieldError):
    """An optimization constraint cannot be satisfied."""


class ConfigError(StimfieldError):
    """Scenario configuration failed validation.

    ``field`` holds a dotted path into the config (e.g. ``leads[0].axis``).
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
