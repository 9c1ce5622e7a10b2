"""Travelling waves by Newton continuation from the linear bifurcation point.

A profile translating rigidly at speed v solves

    -(Ku)' + v u' + 2 u' (Ku) - u (Ku)' = 0.

Linearizing at u = 0 shows cos(m a) is a neutral direction exactly at
v = lam(m)/m, the bifurcation speed of the m-fold branch.  We work in the
even (cosine) sector, which quotients out translations: u is a real cosine
series on harmonics of m, the residual is then a pure sine series, and its
even part vanishes identically.  The branch is parameterized by the
amplitude xi of the fundamental (pinned), marching xi away from zero with
the previous point as predictor and a damped Newton corrector.

All products are short real convolutions of cosine/sine series truncated to
the working harmonics, i.e. exact Galerkin (alias-free) arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dispersion import dispersion, dispersion_float, smoothing_symbol_float


class NewtonError(RuntimeError):
    """Newton failed to converge; signals clean branch termination."""


def bifurcation_speed(m: int) -> Fraction:
    """Exact speed lam(m)/m at which the m-fold branch leaves u = 0."""
    return dispersion(m) / m


@dataclass(frozen=True)
class WavePoint:
    """One converged travelling wave.

    ``cosine_coeffs[k-1]`` is the coefficient of cos(k m a); the first one
    equals the amplitude parameter xi by construction.
    """

    m: int
    xi: float
    speed: float
    cosine_coeffs: np.ndarray
    residual_norm: float

    def __post_init__(self):
        coeffs = np.asarray(self.cosine_coeffs, dtype=np.float64).copy()
        coeffs.flags.writeable = False
        object.__setattr__(self, "cosine_coeffs", coeffs)

    @property
    def num_harmonics(self) -> int:
        return self.cosine_coeffs.shape[0]

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "xi": float(self.xi),
            "speed": float(self.speed),
            "cosine_coeffs": [float(c) for c in self.cosine_coeffs],
            "residual_norm": float(self.residual_norm),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WavePoint":
        return cls(
            m=int(data["m"]),
            xi=float(data["xi"]),
            speed=float(data["speed"]),
            cosine_coeffs=np.array(data["cosine_coeffs"], dtype=np.float64),
            residual_norm=float(data["residual_norm"]),
        )


@dataclass
class WaveBranch:
    """Continuation branch, points ordered by increasing xi."""

    m: int
    num_harmonics: int
    points: list
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "num_harmonics": self.num_harmonics,
            "points": [p.to_dict() for p in self.points],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WaveBranch":
        return cls(
            m=int(data["m"]),
            num_harmonics=int(data["num_harmonics"]),
            points=[WavePoint.from_dict(p) for p in data["points"]],
            provenance=dict(data["provenance"]),
        )


def _pair_grids(k: int):
    j = np.arange(1, k + 1)
    return j[:, None], j[None, :]


def _sin_cos_product(sin_coeffs: np.ndarray, cos_coeffs: np.ndarray) -> np.ndarray:
    """Sine coefficients of (sum a_j sin j t)(sum b_k cos k t), truncated.

    sin(jt) cos(kt) = (sin((j+k)t) + sin((j-k)t)) / 2; harmonics beyond the
    working truncation are dropped (Galerkin projection), which is alias-free
    by construction.
    """
    k = sin_coeffs.shape[0]
    jj, kk = _pair_grids(k)
    weights = 0.5 * sin_coeffs[:, None] * cos_coeffs[None, :]
    out = np.zeros(k + 1)
    total = (jj + kk).ravel()
    keep = total <= k
    np.add.at(out, total[keep], weights.ravel()[keep])
    diff = (jj - kk).ravel()
    signed = np.where(diff >= 0, weights.ravel(), -weights.ravel())
    np.add.at(out, np.abs(diff).ravel(), signed)
    return out[1:]


def residual(cos_coeffs: np.ndarray, speed: float, m: int) -> np.ndarray:
    """Sine coefficients of -(Ku)' + v u' + 2 u' (Ku) - u (Ku)'.

    The even (cosine) components vanish identically: both quadratic terms
    are odd*even products and the linear part differentiates an even
    function, so only sine modes are ever populated.
    """
    cos_coeffs = np.asarray(cos_coeffs, dtype=np.float64)
    k = cos_coeffs.shape[0]
    modes = m * np.arange(1, k + 1)
    freq = dispersion_float(modes)
    sig = smoothing_symbol_float(modes)
    du = -modes * cos_coeffs                 # u' sine coefficients
    ku = sig * cos_coeffs                    # K u cosine coefficients
    kdu = -freq * cos_coeffs                 # (K u)' sine coefficients
    linear = freq * cos_coeffs - speed * modes * cos_coeffs
    return (
        linear
        + 2.0 * _sin_cos_product(du, ku)
        - _sin_cos_product(kdu, cos_coeffs)
    )


def jacobian_apply(
    cos_coeffs: np.ndarray, speed: float, m: int, w: np.ndarray
) -> np.ndarray:
    """Directional derivative of ``residual`` in u along the cosine series w."""
    cos_coeffs = np.asarray(cos_coeffs, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    k = cos_coeffs.shape[0]
    modes = m * np.arange(1, k + 1)
    freq = dispersion_float(modes)
    sig = smoothing_symbol_float(modes)
    du = -modes * cos_coeffs
    ku = sig * cos_coeffs
    kdu = -freq * cos_coeffs
    dw = -modes * w
    kw = sig * w
    kdw = -freq * w
    linear = freq * w - speed * modes * w
    return (
        linear
        + 2.0 * _sin_cos_product(dw, ku)
        + 2.0 * _sin_cos_product(du, kw)
        - _sin_cos_product(kdu, w)
        - _sin_cos_product(kdw, cos_coeffs)
    )


def speed_derivative(cos_coeffs: np.ndarray, m: int) -> np.ndarray:
    """Derivative of ``residual`` in the speed: the sine series of u'."""
    cos_coeffs = np.asarray(cos_coeffs, dtype=np.float64)
    modes = m * np.arange(1, cos_coeffs.shape[0] + 1)
    return -modes * cos_coeffs


def default_harmonics(m: int) -> int:
    return max(8, 64 // m)


def newton_solve(
    m: int,
    xi: float,
    guess_coeffs: np.ndarray | None = None,
    guess_speed: float | None = None,
    num_harmonics: int | None = None,
    tol: float = 1e-12,
    max_iter: int = 50,
) -> WavePoint:
    """Solve for the wave with pinned fundamental amplitude xi.

    Unknowns are the higher cosine coefficients and the speed; equations are
    the sine components of the residual.  Full Newton steps with backtracking
    halving when the residual norm fails to decrease.  Raises NewtonError
    after ``max_iter`` iterations without reaching ``tol``.
    """
    if num_harmonics is None:
        num_harmonics = default_harmonics(m)
    k = num_harmonics
    if xi == 0.0:
        return WavePoint(
            m=m,
            xi=0.0,
            speed=float(bifurcation_speed(m)),
            cosine_coeffs=np.zeros(k),
            residual_norm=0.0,
        )
    coeffs = np.zeros(k)
    coeffs[0] = xi
    if guess_coeffs is not None:
        guess_coeffs = np.asarray(guess_coeffs, dtype=np.float64)
        coeffs[1 : min(k, guess_coeffs.shape[0])] = guess_coeffs[
            1 : min(k, guess_coeffs.shape[0])
        ]
    speed = float(bifurcation_speed(m)) if guess_speed is None else float(guess_speed)

    res = residual(coeffs, speed, m)
    res_norm = float(np.linalg.norm(res))
    for _ in range(max_iter):
        if res_norm <= tol:
            return WavePoint(
                m=m, xi=xi, speed=speed, cosine_coeffs=coeffs, residual_norm=res_norm
            )
        jac = np.empty((k, k))
        for col in range(1, k):
            basis = np.zeros(k)
            basis[col] = 1.0
            jac[:, col - 1] = jacobian_apply(coeffs, speed, m, basis)
        jac[:, k - 1] = speed_derivative(coeffs, m)
        try:
            delta = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as exc:
            raise NewtonError(f"singular Jacobian at xi={xi:g}") from exc

        scale = 1.0
        while scale >= 1.0 / 1024.0:
            trial = coeffs.copy()
            trial[1:] += scale * delta[:-1]
            trial_speed = speed + scale * delta[-1]
            trial_res = residual(trial, trial_speed, m)
            trial_norm = float(np.linalg.norm(trial_res))
            if trial_norm < res_norm:
                break
            scale *= 0.5
        else:
            raise NewtonError(f"backtracking stalled at xi={xi:g}")
        coeffs, speed, res, res_norm = trial, trial_speed, trial_res, trial_norm

    if res_norm <= tol:
        return WavePoint(
            m=m, xi=xi, speed=speed, cosine_coeffs=coeffs, residual_norm=res_norm
        )
    raise NewtonError(f"no convergence at xi={xi:g}: residual {res_norm:.3e}")


def continue_branch(
    m: int,
    xi_max: float,
    steps: int,
    num_harmonics: int | None = None,
    tol: float = 1e-12,
    max_iter: int = 50,
) -> WaveBranch:
    """March xi from xi_max/steps to xi_max; stop cleanly on Newton failure.

    The previous point (with the fundamental re-pinned) predicts the next;
    a partial branch is a valid result and records where the corrector gave
    up.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if xi_max <= 0:
        raise ValueError("xi_max must be positive")
    if num_harmonics is None:
        num_harmonics = default_harmonics(m)
    provenance = {
        "tol": tol,
        "max_iter": max_iter,
        "xi_max": xi_max,
        "steps": steps,
        "terminated_early": False,
    }
    points: list[WavePoint] = []
    prev_coeffs = None
    prev_speed = None
    for i in range(1, steps + 1):
        xi = xi_max * i / steps
        try:
            point = newton_solve(
                m,
                xi,
                guess_coeffs=prev_coeffs,
                guess_speed=prev_speed,
                num_harmonics=num_harmonics,
                tol=tol,
                max_iter=max_iter,
            )
        except NewtonError as exc:
            provenance["terminated_early"] = True
            provenance["termination"] = str(exc)
            break
        points.append(point)
        prev_coeffs = point.cosine_coeffs
        prev_speed = point.speed
    return WaveBranch(
        m=m, num_harmonics=num_harmonics, points=points, provenance=provenance
    )


def decay_rate(point: WavePoint, noise_floor: float = 1e-14) -> float:
    """Least-squares exponential decay rate of the cosine coefficients.

    Fits -log|a_k| against the mode k*m over coefficients above the noise
    floor; the slope estimates the width of the strip of analyticity.
    Raises ValueError when fewer than four coefficients are resolved.
    """
    amps = np.abs(point.cosine_coeffs)
    modes = point.m * np.arange(1, point.num_harmonics + 1)
    resolved = amps > noise_floor
    if np.count_nonzero(resolved) < 4:
        raise ValueError(
            f"only {np.count_nonzero(resolved)} coefficients above the noise "
            f"floor {noise_floor:g}; need at least 4"
        )
    slope = np.polyfit(modes[resolved], -np.log(amps[resolved]), 1)[0]
    return float(slope)
