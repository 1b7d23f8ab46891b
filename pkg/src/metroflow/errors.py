"""Exception taxonomy shared across the library.

Every error raised on purpose derives from MetroflowError and carries a
stable ``category`` string so callers (and the CLI) can map failures to
exit codes without parsing messages.
"""

from __future__ import annotations

__all__ = [
    "MetroflowError",
    "ShapeError",
    "ContractError",
    "ConfigError",
    "DataError",
    "UnknownStationError",
    "GraphError",
    "GenerationError",
    "TrainingError",
    "DiagnosticError",
    "ReportError",
    "CheckpointError",
]


class MetroflowError(Exception):
    """Base class for all deliberate errors in this package."""

    category = "error"


class ShapeError(MetroflowError):
    """Tensor or matrix shapes do not line up; the message names both sides."""

    category = "shape"


class ContractError(MetroflowError):
    """An operation was called outside its documented precondition."""

    category = "contract"


class ConfigError(MetroflowError):
    """A model or experiment configuration is invalid or inconsistent."""

    category = "config"


class DataError(MetroflowError):
    """Input data is malformed; the message names the file/row/station."""

    category = "data"


class UnknownStationError(DataError):
    """A station id was referenced that the dataset does not contain."""

    category = "unknown-station"


class GraphError(MetroflowError):
    """A graph structure violates its invariants (asymmetry, bad ids, ...)."""

    category = "graph"


class GenerationError(MetroflowError):
    """The synthetic generator cannot satisfy the requested structure."""

    category = "generation"


class TrainingError(MetroflowError):
    """Training diverged or was invoked in an unusable state."""

    category = "training"


class DiagnosticError(MetroflowError):
    """The over-smoothing diagnostic cannot run on the requested subgraph."""

    category = "diagnostic"


class ReportError(MetroflowError):
    """Report emission failed; the message names the offending path."""

    category = "report"


class CheckpointError(MetroflowError):
    """A parameter checkpoint is unreadable or inconsistent with the model."""

    category = "checkpoint"
