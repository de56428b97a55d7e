"""Spectral unions of partial 3D shapes.

Truncated Dirichlet Laplacian spectra of partial shapes, a learned
commutative operator that maps two partial spectra to the spectrum of
their union, and downstream region localization and retrieval built on
computed or predicted spectra.
"""

__version__ = "0.1.0"

from . import geometry, spectral

__all__ = ["geometry", "spectral", "__version__"]
