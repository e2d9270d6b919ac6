"""Exception types shared across the package."""


class LaformerError(Exception):
    """Base class for all package errors."""


class InvalidSceneError(LaformerError):
    """Scene violates a structural requirement (e.g. no valid target position)."""


class EmptyTrackError(LaformerError):
    """Track has fewer than two consecutive valid positions."""


class DegenerateLaneError(LaformerError):
    """Centerline polyline too short to form a single lane vector."""


class NoLanesError(LaformerError):
    """An operation that needs at least one lane segment got none."""


class InvalidLabelError(LaformerError):
    """A lane label points at a masked-out or out-of-range segment."""


class ConfigError(LaformerError):
    """Invalid or inconsistent configuration."""


class GenerationError(LaformerError):
    """Requested behavior is not realizable on the given map."""


class DataError(LaformerError):
    """Malformed or unreadable scene data."""
