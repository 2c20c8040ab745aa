"""Exception types shared across the package."""

from __future__ import annotations


class DataError(ValueError):
    """Malformed or inconsistent input data (bad files, unknown ids, empty sets)."""


class TransportError(RuntimeError):
    """An HTTP request to a model endpoint failed after retries."""
