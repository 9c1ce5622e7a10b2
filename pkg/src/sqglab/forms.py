"""Multilinear multiplier forms and the iterated normal-form energy chain.

A p-linear form acts on truncated admissible fields through a multiplier on
zero-sum mode tuples:

    M(u_1, ..., u_p) = sum_{n_1+...+n_p=0} m(n_1,...,n_p)
                       uhat_1(n_1) ... uhat_p(n_p),

every n_j on the m-fold lattice with 3 <= |n_j| <= n_max.  Forms are stored
as dense value tables over the ordered admissible tuples, symmetrized over
slot permutations so that parity and evaluation are canonical.

The operators implemented here drive the corrected-energy construction:

  normal_form_divide   divide the multiplier by the frequency sum (flips
                       parity; rejects nonzero values on resonant tuples);
  degenerate_projection  restrict to totally degenerate tuples (even arity);
  extend_stretching    arity p -> p+1 insertion of u * (d/da K u), the
                       stretching half of the quadratic term;
  extend_advection     symmetrized insertion of (d/da u) * (K u), the
                       advection half.

Along the truncated flow f' = -(Kf)' rotation + N(f), the time derivative
of the quadratic Sobolev energy is an exact cubic form, and each division /
re-extension round pushes the derivative of the corrected energy up one
degree: cubic -> quartic -> sextic.  ``build_chain`` packages the whole
ladder; the identities it relies on hold exactly for the truncated dynamics
because extensions drop merged modes beyond n_max, mirroring the Galerkin
product.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .dispersion import dispersion, dispersion_float, smoothing_symbol_float
from .field import SpectralField, sobolev_energy

#: Largest arity supported by the table representation.
MAX_ARITY = 6

#: Guard against accidentally huge tables ((2K)^(p-1) candidate rows).
MAX_TABLE_ROWS = 40_000_000

#: Float prefilter margin before exact confirmation of a resonant denominator.
FLOAT_MARGIN = 1e-6


class ResonanceError(ValueError):
    """Raised when a multiplier is nonzero on a tuple with zero frequency sum."""

    def __init__(self, resonant_tuple: tuple):
        self.resonant_tuple = tuple(int(n) for n in resonant_tuple)
        super().__init__(
            f"multiplier does not vanish on the resonant tuple {self.resonant_tuple}"
        )


class TupleSpace:
    """All ordered admissible zero-sum p-tuples for a fixed lattice.

    Modes are the nonzero multiples of m with |n| <= n_max, listed
    ascending; ``idx`` holds mode indices per tuple slot, ``mode_values``
    the actual modes.  Instances are immutable and cached per
    (m, n_max, p); derived per-tuple data (frequency sums, degeneracy) is
    computed lazily.
    """

    def __init__(self, m: int, n_max: int, p: int):
        if p < 3 or p > MAX_ARITY:
            raise ValueError(f"arity {p} outside supported range 3..{MAX_ARITY}")
        self.m = m
        self.n_max = n_max
        self.p = p
        self.num_harmonics = n_max // m
        k = self.num_harmonics
        self.modes = np.concatenate(
            [-m * np.arange(k, 0, -1), m * np.arange(1, k + 1)]
        ).astype(np.int64)
        size = 2 * k
        if size ** (p - 1) > MAX_TABLE_ROWS:
            raise ValueError(
                f"tuple table for m={m}, n_max={n_max}, p={p} would need "
                f"{size ** (p - 1)} candidate rows; reduce n_max or arity"
            )
        grids = np.meshgrid(*([np.arange(size)] * (p - 1)), indexing="ij")
        idx = np.empty((size ** (p - 1), p), dtype=np.int64)
        for j, g in enumerate(grids):
            idx[:, j] = g.ravel()
        last_mode = -self.modes[idx[:, :-1]].sum(axis=1)
        last_idx = self.index_of_mode(last_mode)
        keep = last_idx >= 0
        idx = idx[keep]
        idx[:, -1] = last_idx[keep]
        self.idx = idx
        self.mode_values = self.modes[idx]
        self.count = idx.shape[0]
        self._lamsum_exact = None
        self._lamsum_float = None
        self._resonant = None
        self._degenerate = None
        self._sorted_keys = None
        self._sorted_order = None

    # -- lattice helpers ---------------------------------------------------

    def index_of_mode(self, values) -> np.ndarray:
        """Mode -> index in ``self.modes``; -1 where off the lattice."""
        values = np.asarray(values, dtype=np.int64)
        k = values // self.m
        exact = values == k * self.m
        inside = exact & (k != 0) & (np.abs(k) <= self.num_harmonics)
        idx = np.where(k > 0, self.num_harmonics + k - 1, k + self.num_harmonics)
        return np.where(inside, idx, -1)

    def ravel_keys(self, idx: np.ndarray) -> np.ndarray:
        size = self.modes.shape[0]
        keys = idx[:, 0].astype(np.int64)
        for j in range(1, self.p):
            keys = keys * size + idx[:, j]
        return keys

    def rows_of(self, idx: np.ndarray) -> np.ndarray:
        """Row numbers of given tuples (index representation)."""
        if self._sorted_keys is None:
            keys = self.ravel_keys(self.idx)
            order = np.argsort(keys)
            self._sorted_keys = keys[order]
            self._sorted_order = order
        wanted = self.ravel_keys(idx)
        pos = np.searchsorted(self._sorted_keys, wanted)
        if np.any(pos >= self._sorted_keys.shape[0]) or np.any(
            self._sorted_keys[pos.clip(max=self._sorted_keys.shape[0] - 1)] != wanted
        ):
            raise KeyError("tuple not present in this space")
        return self._sorted_order[pos]

    # -- derived per-tuple data ---------------------------------------------

    @property
    def degenerate(self) -> np.ndarray:
        """Mask of totally degenerate tuples (all-false for odd arity)."""
        if self._degenerate is None:
            if self.p % 2 != 0:
                self._degenerate = np.zeros(self.count, dtype=bool)
            else:
                ordered = np.sort(self.mode_values, axis=1)
                ok = np.ones(self.count, dtype=bool)
                for i in range(self.p // 2):
                    ok &= ordered[:, i] == -ordered[:, -1 - i]
                self._degenerate = ok
        return self._degenerate

    def _compute_lamsum(self):
        per_mode = [dispersion(int(n)) for n in self.modes]
        exact = [
            sum((per_mode[i] for i in row), Fraction(0)) for row in self.idx
        ]
        self._lamsum_exact = exact
        self._lamsum_float = np.array([float(q) for q in exact])
        self._resonant = np.array([q == 0 for q in exact], dtype=bool)

    @property
    def frequency_sum(self) -> np.ndarray:
        """Per-tuple frequency sum, exact rationals rounded once to double."""
        if self._lamsum_float is None:
            self._compute_lamsum()
        return self._lamsum_float

    @property
    def resonant(self) -> np.ndarray:
        """Mask of tuples whose frequency sum is exactly zero."""
        if self._resonant is None:
            self._compute_lamsum()
        return self._resonant

    def dense_values(self, values: np.ndarray) -> np.ndarray:
        """Flat lookup table over all index combinations (missing -> 0)."""
        size = self.modes.shape[0]
        dense = np.zeros(size**self.p, dtype=np.complex128)
        dense[self.ravel_keys(self.idx)] = values
        return dense


_SPACE_CACHE: dict = {}


def tuple_space(m: int, n_max: int, p: int) -> TupleSpace:
    key = (m, n_max, p)
    space = _SPACE_CACHE.get(key)
    if space is None:
        space = _SPACE_CACHE[key] = TupleSpace(m, n_max, p)
    return space


_PARITY_FLIP = {"even": "odd", "odd": "even", "none": "none"}


@dataclass(frozen=True)
class MultilinearForm:
    """A p-linear form given by its value table over a TupleSpace.

    ``parity`` declares the behaviour of the multiplier under negating every
    mode; ``symmetric`` records that the table is invariant under slot
    permutations (all constructors in this module produce symmetric tables).
    """

    space: TupleSpace
    values: np.ndarray
    parity: str = "none"
    label: str = ""
    symmetric: bool = False

    def __post_init__(self):
        if self.parity not in ("even", "odd", "none"):
            raise ValueError(f"parity must be even/odd/none, got {self.parity!r}")
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != (self.space.count,):
            raise ValueError(
                f"value table shape {values.shape} does not match "
                f"{self.space.count} tuples"
            )
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def p(self) -> int:
        return self.space.p

    def scaled(self, factor: complex, label: str | None = None) -> "MultilinearForm":
        return MultilinearForm(
            self.space,
            self.values * factor,
            parity=self.parity,
            label=label if label is not None else self.label,
            symmetric=self.symmetric,
        )

    def plus(self, other: "MultilinearForm", label: str = "") -> "MultilinearForm":
        if other.space is not self.space:
            raise ValueError("cannot add forms over different tuple spaces")
        parity = self.parity if self.parity == other.parity else "none"
        return MultilinearForm(
            self.space,
            self.values + other.values,
            parity=parity,
            label=label or f"{self.label}+{other.label}",
            symmetric=self.symmetric and other.symmetric,
        )


def make_form(
    m: int,
    n_max: int,
    p: int,
    multiplier: Callable,
    parity: str = "none",
    label: str = "",
    symmetrize_table: bool = True,
) -> MultilinearForm:
    """Build a form from a vectorized multiplier on mode tuples.

    ``multiplier`` receives the (count, p) array of mode values and returns
    the per-tuple complex values.  Tables are symmetrized by default so the
    stored multiplier is canonical.
    """
    space = tuple_space(m, n_max, p)
    values = np.asarray(multiplier(space.mode_values), dtype=np.complex128)
    form = MultilinearForm(space, values, parity=parity, label=label)
    return symmetrize(form) if symmetrize_table else form


def symmetrize(form: MultilinearForm) -> MultilinearForm:
    """Average the value table over the permutation orbit of each tuple."""
    if form.symmetric:
        return form
    space = form.space
    ordered = np.sort(space.mode_values, axis=1)
    keys = ordered[:, 0].astype(np.int64)
    span = int(2 * space.n_max + 1)
    for j in range(1, space.p):
        keys = keys * span + ordered[:, j]
    _, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    sums = np.zeros(counts.shape[0], dtype=np.complex128)
    np.add.at(sums, inverse, form.values)
    means = sums / counts
    return MultilinearForm(
        space,
        means[inverse],
        parity=form.parity,
        label=form.label,
        symmetric=True,
    )


def _mode_amplitudes(f: SpectralField, space: TupleSpace) -> np.ndarray:
    if f.m != space.m or f.n_max != space.n_max:
        raise ValueError(
            f"field lattice (m={f.m}, n_max={f.n_max}) does not match form "
            f"lattice (m={space.m}, n_max={space.n_max})"
        )
    k = space.num_harmonics
    out = np.empty(2 * k, dtype=np.complex128)
    out[k:] = f.coeffs
    out[:k] = np.conj(f.coeffs[::-1])
    return out


def evaluate(form: MultilinearForm, fields: Sequence[SpectralField]) -> complex:
    """Direct truncated sum of the form over its active tuples."""
    if len(fields) != form.p:
        raise ValueError(f"expected {form.p} fields, got {len(fields)}")
    amplitudes = [_mode_amplitudes(f, form.space) for f in fields]
    prod = form.values.copy()
    for j, amp in enumerate(amplitudes):
        prod *= amp[form.space.idx[:, j]]
    return complex(prod.sum())


def evaluate_diagonal(form: MultilinearForm, f: SpectralField) -> complex:
    """The form on p copies of the same field."""
    amp = _mode_amplitudes(f, form.space)
    prod = form.values * amp[form.space.idx].prod(axis=1)
    return complex(prod.sum())


def parity_defect(form: MultilinearForm, sample: int | None = 200_000) -> float:
    """Worst violation of the declared parity over the table (or a sample)."""
    if form.parity == "none":
        return 0.0
    space = form.space
    rows = np.arange(space.count)
    if sample is not None and space.count > sample:
        rows = np.random.default_rng(0).choice(space.count, size=sample, replace=False)
    neg_idx = space.modes.shape[0] - 1 - space.idx[rows]
    neg_rows = space.rows_of(neg_idx)
    sign = 1.0 if form.parity == "even" else -1.0
    return float(np.max(np.abs(form.values[neg_rows] - sign * form.values[rows])))


def normal_form_divide(form: MultilinearForm) -> MultilinearForm:
    """Divide the multiplier by the per-tuple frequency sum.

    The divided form, scaled by i, integrates the original form along the
    linear flow; division by an odd quantity flips the declared parity.
    Tuples with exactly zero frequency sum must carry value zero (for even
    arity: project the degenerate set away first), otherwise a
    ResonanceError names the offending tuple.
    """
    space = form.space
    resonant = space.resonant
    bad = resonant & (form.values != 0)
    if np.any(bad):
        row = int(np.argmax(bad))
        raise ResonanceError(tuple(space.mode_values[row]))
    denom = np.where(resonant, 1.0, space.frequency_sum)
    return MultilinearForm(
        space,
        form.values / denom,
        parity=_PARITY_FLIP[form.parity],
        label=f"divide({form.label})",
        symmetric=form.symmetric,
    )


def degenerate_projection(form: MultilinearForm) -> MultilinearForm:
    """Restrict the multiplier to totally degenerate tuples (a projection)."""
    if form.p % 2 != 0:
        raise ValueError("degenerate projection requires even arity")
    return MultilinearForm(
        form.space,
        np.where(form.space.degenerate, form.values, 0.0),
        parity=form.parity,
        label=f"project({form.label})",
        symmetric=form.symmetric,
    )


def _pair_extension(
    form: MultilinearForm, weight: Callable, label: str
) -> MultilinearForm:
    """Common core of the arity-raising insertions.

    The output multiplier at a (p+1)-tuple sums, over ordered slot pairs
    (k, l), the input multiplier at the tuple with slots k, l merged into
    mode n_k + n_l, times ``weight(n_k, n_l)``; merged modes off the lattice
    (zero or beyond n_max) contribute nothing, matching the truncated
    product.  Normalized by 1/(p+1) so that on equal arguments the result
    agrees with the direct slot-by-slot insertion.
    """
    if form.p + 1 > MAX_ARITY:
        raise ValueError(f"extension beyond arity {MAX_ARITY} is not supported")
    src = symmetrize(form)
    space = src.space
    out_space = tuple_space(space.m, space.n_max, space.p + 1)
    dense = space.dense_values(src.values)
    size = space.modes.shape[0]
    q = out_space.p
    mv = out_space.mode_values
    idx = out_space.idx
    acc = np.zeros(out_space.count, dtype=np.complex128)
    for k in range(q):
        for l in range(q):
            if l == k:
                continue
            merged = mv[:, k] + mv[:, l]
            mi = space.index_of_mode(merged)
            valid = mi >= 0
            flat = np.where(valid, mi, 0).astype(np.int64)
            for j in range(q):
                if j == k or j == l:
                    continue
                flat = flat * size + idx[:, j]
            vals = dense[flat]
            vals[~valid] = 0.0
            acc += vals * weight(mv[:, k], mv[:, l])
    return MultilinearForm(
        out_space,
        acc / q,
        parity=_PARITY_FLIP[form.parity],
        label=label,
        symmetric=True,
    )


def extend_stretching(form: MultilinearForm) -> MultilinearForm:
    """Arity p -> p+1 insertion of u * (d/da K u) into each slot.

    On equal arguments this equals summing the form with one argument
    replaced by f * (d/da K f).  The inserted factor is the odd dispersion
    frequency, so the declared parity flips.
    """
    return _pair_extension(
        form,
        lambda nk, nl: 1j * dispersion_float(nl),
        label=f"stretch({form.label})",
    )


def extend_advection(form: MultilinearForm) -> MultilinearForm:
    """Arity p -> p+1 symmetrized insertion of (d/da u) * (K u)."""
    return _pair_extension(
        form,
        lambda nk, nl: 1j * nk.astype(np.float64) * smoothing_symbol_float(nl),
        label=f"advect({form.label})",
    )


def nonlinearity_extension(form: MultilinearForm) -> MultilinearForm:
    """Insertion of the full quadratic term 2 (Kf) f' - f (Kf)'."""
    two_adv = extend_advection(form).scaled(2.0)
    stretch = extend_stretching(form)
    return MultilinearForm(
        two_adv.space,
        two_adv.values - stretch.values,
        parity=stretch.parity,
        label=f"insert-quadratic({form.label})",
        symmetric=True,
    )


def build_energy_form(m: int, n_max: int, s: float) -> MultilinearForm:
    """The cubic form equal to d/dt of the H^s energy along the flow.

    Pairing the quadratic term against the field in H^s gives the symmetrized
    multiplier of i <n_3>^{2s} (2 n_1 sigma(n_2) - n_2 sigma(n_2)) on
    zero-sum triples; it is odd, so the energy derivative is real.
    """
    if s < 0:
        raise ValueError("Sobolev index s must be >= 0")
    space = tuple_space(m, n_max, 3)
    mv = space.mode_values.astype(np.float64)
    sig = smoothing_symbol_float(space.mode_values)
    total = np.zeros(space.count, dtype=np.float64)
    for a, b, c in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        weight = (1.0 + mv[:, c] ** 2) ** s
        total += weight * (2.0 * mv[:, a] * sig[:, b] - mv[:, b] * sig[:, b])
    return MultilinearForm(
        space,
        (1j / 6.0) * total,
        parity="odd",
        label=f"energy-derivative(s={s:g})",
        symmetric=True,
    )


@dataclass(frozen=True)
class CorrectedEnergy:
    """The H^s energy with its normal-form corrections and exact derivatives.

    ``corrections`` holds the three subtracted forms (cubic, quartic,
    quintic); ``derivatives`` the forms equal to d/dt of each successive
    corrected energy along the truncated flow (cubic, quartic, quintic,
    sextic).  All evaluations are real on admissible fields up to round-off.
    """

    m: int
    n_max: int
    s: float
    corrections: tuple
    derivatives: tuple

    def base(self, f: SpectralField) -> float:
        return sobolev_energy(f, self.s)

    def levels(self, f: SpectralField) -> np.ndarray:
        """[E, E - C3, E - C3 - C4, E - C3 - C4 - C5] at the state f."""
        out = np.empty(4)
        value = self.base(f)
        out[0] = value
        for i, form in enumerate(self.corrections):
            value -= evaluate_diagonal(form, f).real
            out[i + 1] = value
        return out

    def derivative_values(self, f: SpectralField) -> np.ndarray:
        """d/dt of each level at state f: [cubic, quartic, quintic, sextic]."""
        return np.array(
            [evaluate_diagonal(form, f).real for form in self.derivatives]
        )

    def imaginary_defect(self, f: SpectralField) -> float:
        """Largest imaginary part among all evaluations (reality check)."""
        values = [evaluate_diagonal(form, f) for form in self.corrections]
        values += [evaluate_diagonal(form, f) for form in self.derivatives]
        return float(max(abs(v.imag) for v in values))


def build_chain(m: int, n_max: int, s: float) -> CorrectedEnergy:
    """Construct the corrected energy by three normal-form rounds.

    Starting from the cubic energy derivative D3:

        C3 = i * divide(D3)            D4 = -insert-quadratic(C3)
        C4 = i * divide(D4 - P(D4))    D5 = -insert-quadratic(C4)
        C5 = i * divide(D5)            D6 = -insert-quadratic(C5)

    and d/dt (E - C3 - ... - Ck) = D_{k+1} on the diagonal, exactly for the
    truncated dynamics.  The degenerate projection P removes the only zero
    denominators (arity 4); its diagonal value vanishes because D4 is odd,
    so subtracting it changes no recorded energy.
    """
    d3 = build_energy_form(m, n_max, s)
    c3 = normal_form_divide(d3).scaled(1j, label="cubic-correction")
    d4 = nonlinearity_extension(c3).scaled(-1.0, label="quartic-derivative")
    d4_free = MultilinearForm(
        d4.space,
        np.where(d4.space.degenerate, 0.0, d4.values),
        parity=d4.parity,
        label="quartic-derivative-nonresonant",
        symmetric=True,
    )
    c4 = normal_form_divide(d4_free).scaled(1j, label="quartic-correction")
    d5 = nonlinearity_extension(c4).scaled(-1.0, label="quintic-derivative")
    c5 = normal_form_divide(d5).scaled(1j, label="quintic-correction")
    d6 = nonlinearity_extension(c5).scaled(-1.0, label="sextic-derivative")
    return CorrectedEnergy(
        m=m,
        n_max=n_max,
        s=float(s),
        corrections=(c3, c4, c5),
        derivatives=(d3.scaled(1.0, label="cubic-derivative"), d4, d5, d6),
    )


# -- binary export -----------------------------------------------------------

_FORM_MAGIC = "sqglab-form-v1"


def save_form(form: MultilinearForm, path) -> None:
    """Binary table with a JSON header line; reloadable bit-exactly."""
    space = form.space
    header = {
        "format": _FORM_MAGIC,
        "arity": space.p,
        "m": space.m,
        "n_max": space.n_max,
        "parity": form.parity,
        "label": form.label,
        "symmetric": form.symmetric,
        "count": space.count,
        "tuple_sha256": hashlib.sha256(np.ascontiguousarray(space.idx).tobytes()).hexdigest(),
    }
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as handle:
        handle.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        handle.write(np.ascontiguousarray(form.values).tobytes())
    os.replace(tmp, path)


def load_form(path) -> MultilinearForm:
    with open(path, "rb") as handle:
        header = json.loads(handle.readline().decode())
        blob = handle.read()
    if header.get("format") != _FORM_MAGIC:
        raise ValueError(f"{path} is not a form table")
    space = tuple_space(header["m"], header["n_max"], header["arity"])
    digest = hashlib.sha256(np.ascontiguousarray(space.idx).tobytes()).hexdigest()
    if digest != header["tuple_sha256"] or space.count != header["count"]:
        raise ValueError(f"{path}: tuple ordering does not match this build")
    values = np.frombuffer(blob, dtype=np.complex128)
    return MultilinearForm(
        space,
        values,
        parity=header["parity"],
        label=header["label"],
        symmetric=header["symmetric"],
    )


_CHAIN_STAGES = ("c3", "c4", "c5", "d3", "d4", "d5", "d6")


def _chain_paths(directory, m: int, n_max: int, s: float) -> dict:
    stem = f"chain_m{m}_N{n_max}_s{s:.6g}"
    return {
        stage: os.path.join(directory, f"{stem}_{stage}.form")
        for stage in _CHAIN_STAGES
    }


def cached_chain(m: int, n_max: int, s: float, cache_dir=None) -> CorrectedEnergy:
    """build_chain with an optional on-disk table cache."""
    if cache_dir is None:
        return build_chain(m, n_max, s)
    paths = _chain_paths(cache_dir, m, n_max, s)
    if all(os.path.exists(p) for p in paths.values()):
        loaded = {stage: load_form(p) for stage, p in paths.items()}
        return CorrectedEnergy(
            m=m,
            n_max=n_max,
            s=float(s),
            corrections=(loaded["c3"], loaded["c4"], loaded["c5"]),
            derivatives=(loaded["d3"], loaded["d4"], loaded["d5"], loaded["d6"]),
        )
    chain = build_chain(m, n_max, s)
    os.makedirs(cache_dir, exist_ok=True)
    for stage, form in zip(
        _CHAIN_STAGES, (*chain.corrections, *chain.derivatives)
    ):
        save_form(form, paths[stage])
    return chain
