"""Numerical laboratory for a 1D dispersive transport model on the circle.

Subpackages cover the exact dispersion symbols, truncated spectral fields,
exact-arithmetic resonance searches, multilinear normal-form corrections,
time evolution with corrected-energy diagnostics, and travelling-wave
continuation.  The ``sqglab`` CLI exposes each as a subcommand.
"""

__version__ = "0.1.0"

from .dispersion import dispersion, smoothing_symbol, smoothing_kernel
from .field import SpectralField, hs_norm, sobolev_energy

__all__ = [
    "__version__",
    "dispersion",
    "smoothing_symbol",
    "smoothing_kernel",
    "SpectralField",
    "hs_norm",
    "sobolev_energy",
]
