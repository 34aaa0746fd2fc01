"""Base classes for run cache backends."""

from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional

from heritable_growth.errors import ComputationError


class StorageError(ComputationError):
    """Exception raised for errors in the storage backend."""
    pass


class StorageBackend(ABC):
    """Abstract base class for simulation run caches."""

    @abstractmethod
    def save_run(self, run_key: str, payload: Dict[str, Any]) -> str:
        """Store a finished run under its key.

        Args:
            run_key: Content hash of the resolved config and RNG algorithm
            payload: JSON-serialisable trace

        Returns:
            The key the run was stored under

        Raises:
            StorageError: If there's an error saving the run
        """
        pass

    @abstractmethod
    def get_run(self, run_key: str) -> Optional[Dict[str, Any]]:
        """Retrieve a run by key, or None when it is not cached.

        Raises:
            StorageError: If there's an error retrieving the run
        """
        pass

    @abstractmethod
    def list_runs(self, limit: int = 10, offset: int = 0) -> List[Dict[str, Any]]:
        """List cached run metadata, oldest first, with pagination."""
        pass

    @abstractmethod
    def delete_run(self, run_key: str) -> bool:
        """Delete a run; returns False if it was not cached."""
        pass

    @abstractmethod
    def cleanup(self, max_age_days: int = 14) -> int:
        """Remove runs older than ``max_age_days`` and return how many were removed.

        Raises:
            StorageError: If there's an error during cleanup
        """
        pass
