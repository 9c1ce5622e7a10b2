"""Truncated spectra of admissible profiles and the operators acting on them.

An admissible profile is a real, mean-zero, 2pi-periodic function invariant
under rotation by 2pi/m with m >= 3.  Its spectrum is supported on nonzero
multiples of m, so modes |n| <= 2 are absent automatically.  A
``SpectralField`` stores the Galerkin truncation to |n| <= n_max, keeping
only positive modes; reality fixes the negative ones by conjugation.

The quadratic term of the evolution,

    N(f) = 2 (Kf) f' - f (Kf)',

is evaluated pseudo-spectrally on a grid large enough that the products are
alias-free, then truncated back to |n| <= n_max.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.fft

from .dispersion import smoothing_symbol_float


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Coefficients of a real, mean-zero, m-fold symmetric truncated profile.

    ``coeffs[k-1]`` is the complex amplitude of mode k*m for k = 1..n_max/m;
    the amplitude of mode -k*m is the conjugate.  Instances are immutable
    value types and safe to share between threads.
    """

    m: int
    n_max: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.m < 3:
            raise ValueError(f"symmetry order m={self.m}: need m >= 3")
        if self.n_max < self.m or self.n_max % self.m != 0:
            raise ValueError(
                f"truncation n_max={self.n_max} must be a positive multiple of m={self.m}"
            )
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if coeffs.shape != (self.n_max // self.m,):
            raise ValueError(
                f"expected {self.n_max // self.m} coefficients, got shape {coeffs.shape}"
            )
        coeffs = coeffs.copy()
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zero(cls, m: int, n_max: int) -> "SpectralField":
        return cls(m, n_max, np.zeros(n_max // m, dtype=np.complex128))

    @classmethod
    def from_modes(cls, m: int, n_max: int, modes: Mapping[int, complex]) -> "SpectralField":
        """Build a field from a mode -> amplitude map.

        Only nonzero multiples of m with |n| <= n_max are accepted.  Negative
        modes may be given redundantly but must match the conjugate of the
        positive entry.
        """
        coeffs = np.zeros(n_max // m, dtype=np.complex128)
        for n, value in modes.items():
            n = int(n)
            if n == 0 or n % m != 0 or abs(n) > n_max:
                raise ValueError(
                    f"mode {n} not admissible for m={m}, n_max={n_max}"
                )
            if n > 0:
                coeffs[n // m - 1] += complex(value)
        for n, value in modes.items():
            if n < 0:
                stored = coeffs[-n // m - 1]
                if not np.isclose(stored, np.conj(value), rtol=1e-12, atol=1e-300):
                    raise ValueError(
                        f"mode {n}: value {value} violates reality against mode {-n}"
                    )
        return cls(m, n_max, coeffs)

    @property
    def num_harmonics(self) -> int:
        return self.n_max // self.m

    @property
    def modes(self) -> np.ndarray:
        """Positive stored modes m, 2m, ..., n_max."""
        return self.m * np.arange(1, self.num_harmonics + 1)

    def coeff(self, n: int) -> complex:
        """Amplitude of mode n; zero off the symmetry lattice or beyond n_max."""
        n = int(n)
        if n == 0 or n % self.m != 0 or abs(n) > self.n_max:
            return 0.0 + 0.0j
        k = abs(n) // self.m - 1
        return complex(self.coeffs[k]) if n > 0 else complex(np.conj(self.coeffs[k]))

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.m, self.n_max, coeffs)

    def isclose(self, other: "SpectralField", rtol: float = 1e-12, atol: float = 0.0) -> bool:
        return (
            self.m == other.m
            and self.n_max == other.n_max
            and np.allclose(self.coeffs, other.coeffs, rtol=rtol, atol=atol)
        )

    def to_dict(self) -> dict:
        """JSON-ready form: positive modes only, exact doubles."""
        return {
            "m": self.m,
            "n_max": self.n_max,
            "modes": [
                [int(n), float(c.real), float(c.imag)]
                for n, c in zip(self.modes, self.coeffs)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpectralField":
        field = cls.zero(int(data["m"]), int(data["n_max"]))
        coeffs = np.zeros_like(field.coeffs)
        for n, re, im in data["modes"]:
            n = int(n)
            if n <= 0 or n % field.m != 0 or n > field.n_max:
                raise ValueError(f"serialized mode {n} not admissible")
            coeffs[n // field.m - 1] = complex(re, im)
        return cls(field.m, field.n_max, coeffs)


def smooth(f: SpectralField) -> SpectralField:
    """Apply the convolution operator: multiply mode n by its even symbol."""
    return f.with_coeffs(f.coeffs * smoothing_symbol_float(f.modes))


def differentiate(f: SpectralField) -> SpectralField:
    """d/d alpha: multiply mode n by i*n."""
    return f.with_coeffs(f.coeffs * (1j * f.modes))


def reflect(f: SpectralField) -> SpectralField:
    """Spatial reflection alpha -> -alpha (conjugate coefficients)."""
    return f.with_coeffs(np.conj(f.coeffs))


def hs_norm(f: SpectralField, s: float) -> float:
    """Sobolev norm sqrt(sum_n (1+n^2)^s |fhat(n)|^2) over both mode signs."""
    if s < 0:
        raise ValueError("Sobolev index s must be >= 0")
    n = f.modes.astype(np.float64)
    return float(np.sqrt(2.0 * np.sum((1.0 + n * n) ** s * np.abs(f.coeffs) ** 2)))


def sobolev_energy(f: SpectralField, s: float) -> float:
    """The quadratic energy functional: half the squared H^s norm."""
    return 0.5 * hs_norm(f, s) ** 2


def min_grid_size(n_max: int) -> int:
    """Smallest grid resolving modes |n| <= n_max without collision."""
    return 2 * n_max + 1


def _dealias_grid_size(n_max: int) -> int:
    # Quadratic products carry modes up to 2*n_max; a grid of >= 3*n_max + 1
    # points keeps every alias image of those modes outside |n| <= n_max, so
    # the truncated product is exact.
    return scipy.fft.next_fast_len(3 * n_max + 1, real=True)


def _half_spectrum(f: SpectralField, grid_size: int) -> np.ndarray:
    """Spectrum on rfft layout (modes 0..grid_size//2), our normalization."""
    half = np.zeros(grid_size // 2 + 1, dtype=np.complex128)
    half[f.modes] = f.coeffs
    return half


def synthesize(f: SpectralField, grid_size: int) -> np.ndarray:
    """Point values at alpha_j = 2 pi j / grid_size, j = 0..grid_size-1."""
    if grid_size < min_grid_size(f.n_max):
        raise ValueError(
            f"grid_size {grid_size} aliases modes up to {f.n_max}; "
            f"need at least {min_grid_size(f.n_max)}"
        )
    return np.fft.irfft(_half_spectrum(f, grid_size) * grid_size, n=grid_size)


def analyze(samples: np.ndarray, m: int, n_max: int, tol: float = 1e-10) -> SpectralField:
    """Recover a SpectralField from equispaced point values.

    Raises ValueError if the grid is too small for n_max or if the samples
    carry energy off the admissible lattice (mean, low modes, non-multiples
    of m) above ``tol`` relative to the largest coefficient.
    """
    samples = np.asarray(samples, dtype=np.float64)
    grid_size = samples.shape[0]
    if grid_size < min_grid_size(n_max):
        raise ValueError(
            f"{grid_size} samples alias modes up to {n_max}; "
            f"need at least {min_grid_size(n_max)}"
        )
    half = np.fft.rfft(samples) / grid_size
    modes = m * np.arange(1, n_max // m + 1)
    coeffs = half[modes].copy()
    off = half.copy()
    off[modes] = 0.0
    scale = max(np.max(np.abs(coeffs)), 1e-300)
    worst = np.argmax(np.abs(off))
    if np.abs(off[worst]) > tol * scale:
        raise ValueError(
            f"samples are not m={m}-fold symmetric / mean-zero within truncation: "
            f"mode {worst} carries {np.abs(off[worst]):.3e} (tol {tol:.1e} relative)"
        )
    return SpectralField(m, n_max, coeffs)


class _QuadraticTerm:
    """Pseudo-spectral evaluator of 2 (Kf) f' - f (Kf)' for fixed (m, n_max).

    Precomputes the dealiased grid and the diagonal symbols; ``__call__``
    maps a positive-mode coefficient array to the coefficient array of the
    truncated quadratic term.  Stateless between calls.
    """

    def __init__(self, m: int, n_max: int):
        self.m = m
        self.n_max = n_max
        self.grid = _dealias_grid_size(n_max)
        self.modes = m * np.arange(1, n_max // m + 1)
        self.sigma = smoothing_symbol_float(self.modes)
        self.deriv = 1j * self.modes

    def _samples(self, half: np.ndarray) -> np.ndarray:
        return np.fft.irfft(half * self.grid, n=self.grid)

    def full_product_spectrum(self, coeffs: np.ndarray) -> np.ndarray:
        """rfft-layout spectrum of the quadratic term before truncation."""
        nhalf = self.grid // 2 + 1
        base = np.zeros(nhalf, dtype=np.complex128)
        base[self.modes] = coeffs
        smoothed = np.zeros(nhalf, dtype=np.complex128)
        smoothed[self.modes] = coeffs * self.sigma
        derived = np.zeros(nhalf, dtype=np.complex128)
        derived[self.modes] = coeffs * self.deriv
        smoothed_derived = np.zeros(nhalf, dtype=np.complex128)
        smoothed_derived[self.modes] = coeffs * self.sigma * self.deriv

        product = (
            2.0 * self._samples(smoothed) * self._samples(derived)
            - self._samples(base) * self._samples(smoothed_derived)
        )
        return np.fft.rfft(product) / self.grid

    def __call__(self, coeffs: np.ndarray) -> np.ndarray:
        return self.full_product_spectrum(coeffs)[self.modes]


_QUADRATIC_CACHE: dict = {}


def _quadratic_term(m: int, n_max: int) -> _QuadraticTerm:
    key = (m, n_max)
    op = _QUADRATIC_CACHE.get(key)
    if op is None:
        op = _QUADRATIC_CACHE[key] = _QuadraticTerm(m, n_max)
    return op


def nonlinearity(f: SpectralField) -> SpectralField:
    """Truncation to |n| <= n_max of 2 (Kf) f' - f (Kf)'.

    Products of m-fold symmetric functions stay m-fold symmetric, so the
    output lives on the same lattice; its mean mode vanishes identically
    because the convolution symbol is even.
    """
    return f.with_coeffs(_quadratic_term(f.m, f.n_max)(f.coeffs))


def mean_drift(f: SpectralField) -> float:
    """|mode-0 coefficient| of the dealiased quadratic term at state f.

    The instantaneous drift of the mean.  Identically zero in exact
    arithmetic (even symbol); the float value measures round-off.
    """
    spectrum = _quadratic_term(f.m, f.n_max).full_product_spectrum(f.coeffs)
    return float(np.abs(spectrum[0]))


def symmetry_residual(f: SpectralField) -> float:
    """Largest stored amplitude off the m-fold lattice.

    The representation populates only nonzero multiples of m, so this is
    structurally zero; it is scanned anyway so a corrupted state (NaN or a
    widened lattice) cannot pass silently.
    """
    if not np.all(np.isfinite(f.coeffs.view(np.float64))):
        return float("inf")
    full = np.zeros(f.n_max + 1, dtype=np.complex128)
    full[f.modes] = f.coeffs
    off = np.ones(f.n_max + 1, dtype=bool)
    off[f.modes] = False
    return float(np.max(np.abs(full[off])))
