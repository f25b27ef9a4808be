"""Approximate optimisation of Hermitian objectives over product states."""

from .errors import CapExceededError

__version__ = "0.1.0"

__all__ = ["CapExceededError", "__version__"]
