"""Exception hierarchy shared across the toolkit.

Each branch maps to one CLI exit code (see ``crrkit.cli``): configuration
problems exit 2, data problems 3, remote-service problems 4, numerical
problems 5.
"""

from __future__ import annotations


class CrrError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(CrrError):
    """Invalid or incomplete configuration (missing fields, bad values)."""


class DataError(CrrError):
    """Malformed input data or broken joins between pipeline artifacts."""


class TrainingError(DataError):
    """Corpus unusable for model estimation (e.g. empty corpus)."""


class RemoteServiceError(CrrError):
    """Transport-level failure talking to the scoring service.

    Retriable by construction; ``pairs`` carries the (i, j) candidate pair
    indices that were in flight when the failure happened, if known.
    """

    def __init__(
        self,
        message: str,
        pairs: list | None = None,
        retriable: bool = True,
    ):
        super().__init__(message)
        self.pairs = pairs or []
        self.retriable = retriable


class ProviderContractError(CrrError):
    """A scoring provider returned a value outside its documented range."""


class NumericalError(CrrError):
    """A numerical routine failed to converge or hit an undefined case."""
