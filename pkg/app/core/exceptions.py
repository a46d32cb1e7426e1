from typing import List, Optional


class FranCacheError(Exception):
    """Base class for every error raised by the simulator."""


class ConfigurationError(FranCacheError):
    """Invalid or inconsistent experiment configuration.

    Carries one ``key: message`` entry per offending key so the CLI can print
    them all at once.
    """

    def __init__(self, message: str, errors: Optional[List[str]] = None):
        self.errors = errors or [message]
        super().__init__(message)


class DomainError(FranCacheError, ValueError):
    """An id, slot or index outside its valid range."""


class ShapeError(FranCacheError, ValueError):
    """Vector or matrix dimensions do not agree."""


class TrainingError(FranCacheError):
    """A gradient step received a non-finite target."""


class NonPositiveRateError(FranCacheError, ValueError):
    """Delay requested over a link with zero throughput."""


class EmptyRegionError(FranCacheError):
    """An F-AP has no served users, so its popularity is undefined."""


class DuplicateCacheError(FranCacheError):
    """A replacement would store the same file twice in one F-AP."""


class TableCapacityError(FranCacheError):
    """The tabular Q-learner outgrew its configured entry cap."""


class SimulationError(FranCacheError):
    """A run aborted after it started producing metrics."""
