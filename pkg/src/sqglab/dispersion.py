"""Dispersion relation and convolution kernel of the 1D model.

The model couples a profile to itself through the periodic convolution
operator

    (Kf)(a) = integral_0^{2pi} k(a - b) f(b) db,
    k(a)    = -(1/8pi) (1 + 3 cos 2a) log(1 - cos a),

which acts diagonally on Fourier modes.  With the convention
f(a) = sum_n fhat(n) e^{ina}, the operator multiplies fhat(n) by the even
symbol

    sigma(n) = (n^2 - 1) / (|n|^3 - 4|n|),          |n| >= 3,

and the linear evolution rotates mode n at the odd frequency

    lam(n) = n * sigma(n) = sgn(n) (n^2 - 1) / (n^2 - 4).

Both symbols blow up at |n| <= 2; those modes are excluded by the mean-zero,
m-fold-symmetric class (m >= 3) this package works in, so requesting them is
a usage error, not a zero.

Rational arithmetic is primary: ``dispersion`` and ``smoothing_symbol``
return exact ``Fraction`` values.  The ``*_float`` variants are derived,
vectorized views used by the numerics.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

#: Smallest admissible mode magnitude.
MIN_MODE = 3


def _check_mode(n: int) -> int:
    n = int(n)
    if abs(n) < MIN_MODE:
        raise ValueError(
            f"mode {n} is outside the admissible class: |n| >= {MIN_MODE} required"
        )
    return n


def dispersion(n: int) -> Fraction:
    """Exact oscillation frequency of mode n: sgn(n) (n^2-1)/(n^2-4).

    Odd in n, strictly decreasing for n >= 3, with limit 1 at infinity and
    maximum 8/5 at |n| = 3.  Raises ValueError for |n| <= 2.
    """
    n = _check_mode(n)
    sign = 1 if n > 0 else -1
    return Fraction(sign * (n * n - 1), n * n - 4)


def smoothing_symbol(n: int) -> Fraction:
    """Exact symbol of the convolution operator: (n^2-1)/(|n|^3-4|n|).

    Even in n and equal to dispersion(n)/n.  Raises ValueError for |n| <= 2.
    """
    n = _check_mode(n)
    a = abs(n)
    return Fraction(n * n - 1, a * a * a - 4 * a)


def dispersion_float(n) -> np.ndarray:
    """Float view of ``dispersion``, vectorized over integer arrays."""
    n = np.asarray(n, dtype=np.float64)
    if np.any(np.abs(n) < MIN_MODE):
        raise ValueError("dispersion_float: all modes must satisfy |n| >= 3")
    return np.sign(n) * (n * n - 1.0) / (n * n - 4.0)


def smoothing_symbol_float(n) -> np.ndarray:
    """Float view of ``smoothing_symbol``, vectorized over integer arrays."""
    n = np.asarray(n, dtype=np.float64)
    if np.any(np.abs(n) < MIN_MODE):
        raise ValueError("smoothing_symbol_float: all modes must satisfy |n| >= 3")
    a = np.abs(n)
    return (n * n - 1.0) / (a * a * a - 4.0 * a)


def smoothing_kernel(alpha) -> np.ndarray:
    """Closed-form convolution kernel -(1/8pi)(1 + 3 cos 2a) log(1 - cos a).

    Integrable logarithmic singularity at a = 0 (mod 2pi); evaluating there
    raises ValueError.  Its Fourier coefficients equal smoothing_symbol(n)/2pi
    for |n| >= 3, which the test suite confirms by adaptive quadrature.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    one_minus_cos = 1.0 - np.cos(alpha)
    if np.any(one_minus_cos <= 0.0):
        raise ValueError("smoothing_kernel is singular at multiples of 2*pi")
    out = -(1.0 + 3.0 * np.cos(2.0 * alpha)) * np.log(one_minus_cos) / (8.0 * np.pi)
    return out if out.ndim else float(out)
