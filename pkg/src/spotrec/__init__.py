"""Sightseeing spot recommendation from latent user-experience groups."""

from ._kernels import active_backend

__version__ = "0.1.0"

__all__ = ["active_backend", "__version__"]
