"""Exception taxonomy shared by all asql modules.

Every error raised by the package derives from :class:`GuidanceError`, so
callers (and the CLI) can map failures to a stable machine-readable code:
the class name is the code.
"""


class GuidanceError(Exception):
    """Base class for all asql errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class DocumentSyntaxError(GuidanceError):
    """Scene-graph or provider document is malformed (bad JSON, unknown or
    mistyped fields)."""


class ValidationError(GuidanceError):
    """A structural invariant is violated (duplicate ids, dangling relation
    ids, bad quantities, seed/constraint inconsistency, ...)."""


class ConflictError(GuidanceError):
    """Two relations imply contradictory directions for one ordered pair."""


class CycleError(GuidanceError):
    """The strict horizontal or vertical order contains a cycle."""


class CapacityError(GuidanceError):
    """Grid too small for the number of distinct placement ranks."""


class StarvationError(GuidanceError):
    """An entity received zero cells during assignment."""


class QuantityError(GuidanceError):
    """An entity region is too small to split into its q sub-regions."""


class EmptyRegionError(GuidanceError):
    """A mask was requested for an empty region."""


class ShapeError(GuidanceError):
    """Tensor arguments have inconsistent shapes."""


class TransportError(GuidanceError):
    """External provider process failed to run, timed out, or exited
    nonzero."""


class ProtocolError(GuidanceError):
    """External provider emitted a malformed response document."""


class FormatError(GuidanceError):
    """Tensor file has a bad magic, version, or truncated payload."""


class NonFiniteError(GuidanceError):
    """A loss or gradient contained NaN or infinity during optimization."""
