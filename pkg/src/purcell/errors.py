"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input violates a physical or mathematical precondition."""


class ConfigError(ValueError):
    """A configuration document is missing or has an invalid key."""


class DataError(ValueError):
    """Input data is malformed (unsorted tags, bad file layout, ...)."""


class GuessError(ValueError):
    """Data is too degenerate to produce an initial parameter guess."""


class RankDeficientError(RuntimeError):
    """The normal equations of a least-squares problem are singular."""


class EnhancementWarning(UserWarning):
    """Flux ratio <= 1: no cavity enhancement present."""
