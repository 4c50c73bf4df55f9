"""Exception types shared across the package."""


class PathPruneError(Exception):
    """Base class for all package-specific errors."""


class GenerationExhausted(PathPruneError):
    """Rejection sampling failed to produce a solvable scene within the attempt cap."""


class NoPath(PathPruneError):
    """A scene that should be solvable has no start-to-goal path (corrupted scene)."""


class RegionExcludesEndpoints(PathPruneError):
    """A search region was supplied that does not contain start and goal."""


class IncompatibleArchitecture(PathPruneError):
    """Layer descriptors do not chain, or the head layer is malformed."""


class ShapeMismatch(PathPruneError):
    """Tensor shapes do not match the model or the paired label."""


class DivergenceDetected(PathPruneError):
    """Training loss became non-finite."""


class NoPathAnywhere(PathPruneError):
    """The unrestricted planner failed on a scene that was supposed to be solvable."""


class MaskFailed(PathPruneError):
    """Restricted search failed and fallback was disabled."""


class ManifestError(PathPruneError):
    """Dataset manifest is inconsistent with the files on disk."""


class IoFailure(PathPruneError):
    """Reading or writing a dataset artifact failed."""


class ConfigError(PathPruneError):
    """An experiment config document failed schema validation."""
