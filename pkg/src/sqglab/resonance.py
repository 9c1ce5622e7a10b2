"""Exact small-denominator bounds and exhaustive resonance searches.

A resonance is a tuple (n_1, ..., n_p) of modes with |n_j| >= 3, zero sum,
and zero frequency sum.  Because the frequency is odd, every totally
degenerate tuple (one that splits into (k, -k) pairs) resonates; the
interesting question is whether any other tuple does.  Known answers within
reach of exact search:

  p = 3, 5   no resonances; the frequency sum stays above 2/5 resp. 9/35;
  p = 4      resonances are exactly the totally degenerate tuples, and the
             nondegenerate minimum decays like min(|n_j|)^-4;
  p = 6      open; the search below is evidence, never proof.

Every decision is made in exact rational arithmetic.  Floats appear only as
a pre-filter: candidates within 1e-6 of the float threshold are re-evaluated
exactly before anything is concluded.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .dispersion import MIN_MODE, dispersion, dispersion_float

#: Margin added to float pre-filters before exact confirmation.
FLOAT_MARGIN = 1e-6

#: Environment variable selecting the number of enumeration worker threads.
THREADS_ENV = "SQGLAB_THREADS"


def _num_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def check_tuple(entries: Sequence[int]) -> tuple:
    entries = tuple(int(n) for n in entries)
    if sum(entries) != 0:
        raise ValueError(f"tuple {entries} does not sum to zero")
    if any(abs(n) < MIN_MODE for n in entries):
        raise ValueError(f"tuple {entries} has an entry with |n| < {MIN_MODE}")
    return entries


def lambda_sum(entries: Sequence[int]) -> Fraction:
    """Exact frequency sum of a zero-sum tuple of admissible modes."""
    entries = check_tuple(entries)
    return sum((dispersion(n) for n in entries), Fraction(0))


def is_totally_degenerate(entries: Sequence[int]) -> bool:
    """True iff the tuple splits into (k, -k) pairs (multiset test)."""
    entries = tuple(int(n) for n in entries)
    if len(entries) % 2 != 0:
        return False
    ordered = sorted(entries)
    return all(ordered[i] == -ordered[-1 - i] for i in range(len(ordered) // 2))


def canonical_tuple(entries: Sequence[int]) -> tuple:
    """Deterministic representative of the permutation/sign-flip orbit."""
    entries = [int(n) for n in entries]
    a = tuple(sorted(entries, reverse=True))
    b = tuple(sorted((-n for n in entries), reverse=True))
    return max(a, b)


@dataclass
class ResonanceReport:
    """Outcome of an exhaustive search over |n_j| <= bound.

    ``min_value``/``argmin`` describe the nondegenerate minimum of the
    absolute frequency sum (exact); ``exact_zero_tuples`` lists any
    nondegenerate exact resonances found (canonical representatives).
    ``scaling_by_min`` (p = 4 only) maps each value v of min |n_j| to the
    exact minimum over nondegenerate tuples attaining it.
    """

    p: int
    bound: int
    min_value: Fraction | None
    argmin: tuple | None
    degenerate_count: int
    exact_zero_tuples: list = field(default_factory=list)
    scaling_by_min: dict | None = None
    tuples_scanned: int = 0

    def to_dict(self) -> dict:
        def frac(q):
            return {"numerator": str(q.numerator), "denominator": str(q.denominator)}

        data = {
            "p": self.p,
            "bound": self.bound,
            "min_value": frac(self.min_value) if self.min_value is not None else None,
            "argmin": list(self.argmin) if self.argmin is not None else None,
            "degenerate_count": self.degenerate_count,
            "exact_zero_tuples": [list(t) for t in self.exact_zero_tuples],
            "tuples_scanned": self.tuples_scanned,
        }
        if self.scaling_by_min is not None:
            data["scaling_by_min"] = {
                str(k): frac(v) for k, v in sorted(self.scaling_by_min.items())
            }
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ResonanceReport":
        def unfrac(d):
            return Fraction(int(d["numerator"]), int(d["denominator"]))

        scaling = None
        if data.get("scaling_by_min") is not None:
            scaling = {int(k): unfrac(v) for k, v in data["scaling_by_min"].items()}
        return cls(
            p=int(data["p"]),
            bound=int(data["bound"]),
            min_value=unfrac(data["min_value"]) if data["min_value"] is not None else None,
            argmin=tuple(data["argmin"]) if data["argmin"] is not None else None,
            degenerate_count=int(data["degenerate_count"]),
            exact_zero_tuples=[tuple(t) for t in data.get("exact_zero_tuples", [])],
            scaling_by_min=scaling,
            tuples_scanned=int(data.get("tuples_scanned", 0)),
        )


def _mode_values(bound: int) -> np.ndarray:
    """All admissible modes with |n| <= bound, ascending."""
    pos = np.arange(MIN_MODE, bound + 1, dtype=np.int64)
    return np.concatenate([-pos[::-1], pos])


def _degenerate_rows(rows: np.ndarray) -> np.ndarray:
    ordered = np.sort(rows, axis=1)
    half = rows.shape[1] // 2
    ok = np.ones(rows.shape[0], dtype=bool)
    for i in range(half):
        ok &= ordered[:, i] == -ordered[:, -1 - i]
    return ok


class _ChunkStats:
    """Reduction state for one enumeration pass (merge is associative)."""

    def __init__(self, p: int, bound: int, track_by_min: bool):
        self.count = 0
        self.degenerate = 0
        self.min_float = np.inf
        self.by_min = np.full(bound + 1, np.inf) if track_by_min else None
        self.zero_candidates: list[np.ndarray] = []

    def merge(self, other: "_ChunkStats"):
        self.count += other.count
        self.degenerate += other.degenerate
        self.min_float = min(self.min_float, other.min_float)
        if self.by_min is not None:
            np.minimum(self.by_min, other.by_min, out=self.by_min)
        self.zero_candidates.extend(other.zero_candidates)


def _enumerate_chunks(p: int, bound: int) -> Iterable[tuple]:
    """Yield (lead_value, free-slot grids) covering all ordered tuples once.

    The leading entry is fixed per chunk; slots 2..p-1 run over the full
    mode set and the last slot is determined by the zero-sum constraint.
    """
    values = _mode_values(bound)
    free = p - 2
    grids = np.meshgrid(*([values] * free), indexing="ij") if free else []
    flat = [g.ravel() for g in grids]
    for lead in values:
        yield int(lead), flat


def _chunk_rows(lead: int, flat: list, bound: int, p: int) -> np.ndarray | None:
    """Materialize the valid ordered tuples of one chunk, (rows, p)."""
    if p == 2:
        return None
    size = flat[0].shape[0] if flat else 1
    rows = np.empty((size, p), dtype=np.int64)
    rows[:, 0] = lead
    for j, col in enumerate(flat):
        rows[:, j + 1] = col
    rows[:, -1] = -rows[:, :-1].sum(axis=1)
    last = rows[:, -1]
    keep = (np.abs(last) >= MIN_MODE) & (np.abs(last) <= bound)
    return rows[keep]


def _scan(p: int, bound: int, zero_margin: float, track_by_min: bool) -> _ChunkStats:
    def work(args) -> _ChunkStats:
        lead, flat = args
        stats = _ChunkStats(p, bound, track_by_min)
        rows = _chunk_rows(lead, flat, bound, p)
        if rows is None or rows.shape[0] == 0:
            return stats
        stats.count = rows.shape[0]
        sums = np.abs(dispersion_float(rows).sum(axis=1))
        if p % 2 == 0:
            deg = _degenerate_rows(rows)
            stats.degenerate = int(np.count_nonzero(deg))
            live = ~deg
        else:
            live = np.ones(rows.shape[0], dtype=bool)
        live_sums = sums[live]
        if live_sums.size:
            stats.min_float = float(live_sums.min())
            if track_by_min:
                mins = np.abs(rows[live]).min(axis=1)
                np.minimum.at(stats.by_min, mins, live_sums)
            near = live_sums <= zero_margin
            if np.any(near):
                stats.zero_candidates.append(rows[live][near])
        return stats

    chunks = list(_enumerate_chunks(p, bound))
    total = _ChunkStats(p, bound, track_by_min)
    workers = _num_threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for stats in pool.map(work, chunks):
                total.merge(stats)
    else:
        for chunk in chunks:
            total.merge(work(chunk))
    return total


def _collect_candidates(p: int, bound: int, threshold, by_min_threshold=None):
    """Second pass: gather nondegenerate rows under float thresholds."""
    global_rows = []
    by_min_rows: dict[int, list] = {}
    for lead, flat in _enumerate_chunks(p, bound):
        rows = _chunk_rows(lead, flat, bound, p)
        if rows is None or rows.shape[0] == 0:
            continue
        sums = np.abs(dispersion_float(rows).sum(axis=1))
        if p % 2 == 0:
            live = ~_degenerate_rows(rows)
        else:
            live = np.ones(rows.shape[0], dtype=bool)
        near = live & (sums <= threshold)
        if np.any(near):
            global_rows.append(rows[near])
        if by_min_threshold is not None:
            mins = np.abs(rows).min(axis=1)
            near_local = live & (sums <= by_min_threshold[mins])
            if np.any(near_local):
                for row in rows[near_local]:
                    by_min_rows.setdefault(int(np.abs(row).min()), []).append(row)
    merged = np.concatenate(global_rows) if global_rows else np.empty((0, p), np.int64)
    return merged, by_min_rows


def _exact_min(rows: np.ndarray) -> tuple[Fraction, tuple] | None:
    """Exact minimum of |frequency sum| over rows, deterministic argmin."""
    best: Fraction | None = None
    best_tuple = None
    for row in rows:
        value = abs(sum((dispersion(int(n)) for n in row), Fraction(0)))
        rep = canonical_tuple(row)
        if best is None or value < best or (value == best and rep < best_tuple):
            best, best_tuple = value, rep
    if best is None:
        return None
    return best, best_tuple


def _exact_zeros(rows: np.ndarray) -> list[tuple]:
    zeros = set()
    for row in rows:
        if sum((dispersion(int(n)) for n in row), Fraction(0)) == 0:
            zeros.add(canonical_tuple(row))
    return sorted(zeros)


#: Proven lower bounds for the nondegenerate frequency-sum minimum.
KNOWN_LOWER_BOUNDS = {3: Fraction(2, 5), 5: Fraction(9, 35)}


def min_denominator(p: int, bound: int) -> ResonanceReport:
    """Exact nondegenerate minimum of |frequency sum| over |n_j| <= bound.

    For p = 3, 5 the result is checked against the proven constants 2/5 and
    9/35 (a violation raises).  For p = 4 the report also carries the exact
    minimum for each value of min |n_j|, exhibiting the fourth-power decay.
    """
    if p not in (3, 4, 5):
        raise ValueError(f"min_denominator supports p in {{3, 4, 5}}, got {p}")
    if bound < 9:
        raise ValueError(f"bound {bound} < 9 is too small to be informative")

    track = p == 4
    stats = _scan(p, bound, zero_margin=FLOAT_MARGIN, track_by_min=track)
    if stats.count == 0:
        raise ValueError(f"no admissible tuples with p={p}, bound={bound}")

    zero_rows = (
        np.concatenate(stats.zero_candidates)
        if stats.zero_candidates
        else np.empty((0, p), np.int64)
    )
    exact_zeros = _exact_zeros(zero_rows)

    by_min_threshold = None
    if track:
        by_min_threshold = stats.by_min + FLOAT_MARGIN
    candidates, by_min_rows = _collect_candidates(
        p, bound, stats.min_float + FLOAT_MARGIN, by_min_threshold
    )
    exact = _exact_min(candidates)
    assert exact is not None
    min_value, argmin = exact

    scaling = None
    if track:
        scaling = {}
        for v, rows in by_min_rows.items():
            result = _exact_min(np.asarray(rows))
            if result is not None:
                scaling[v] = result[0]

    known = KNOWN_LOWER_BOUNDS.get(p)
    if known is not None and not exact_zeros and min_value < known:
        raise AssertionError(
            f"p={p} minimum {min_value} violates the proven bound {known}"
        )

    return ResonanceReport(
        p=p,
        bound=bound,
        min_value=min_value,
        argmin=argmin,
        degenerate_count=stats.degenerate,
        exact_zero_tuples=exact_zeros,
        scaling_by_min=scaling,
        tuples_scanned=stats.count,
    )


def search_resonances_p6(bound: int = 20) -> ResonanceReport:
    """Exhaustive exact search for nondegenerate 6-tuples with zero frequency sum.

    An empty ``exact_zero_tuples`` list is evidence for non-existence within
    the searched radius, nothing more.
    """
    p = 6
    if bound < 9:
        raise ValueError(f"bound {bound} < 9 is too small to be informative")
    stats = _scan(p, bound, zero_margin=FLOAT_MARGIN, track_by_min=False)
    zero_rows = (
        np.concatenate(stats.zero_candidates)
        if stats.zero_candidates
        else np.empty((0, p), np.int64)
    )
    exact_zeros = _exact_zeros(zero_rows)
    candidates, _ = _collect_candidates(p, bound, stats.min_float + FLOAT_MARGIN)
    exact = _exact_min(candidates)
    min_value, argmin = exact if exact is not None else (None, None)
    return ResonanceReport(
        p=p,
        bound=bound,
        min_value=min_value,
        argmin=argmin,
        degenerate_count=stats.degenerate,
        exact_zero_tuples=exact_zeros,
        tuples_scanned=stats.count,
    )


def certify(report: ResonanceReport, path) -> None:
    """Write the report as a byte-reproducible JSON certificate."""
    payload = json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    tmp = f"{path}.tmp"
    with open(tmp, "w") as handle:
        handle.write(payload)
    os.replace(tmp, path)


def load_certificate(path) -> ResonanceReport:
    with open(path) as handle:
        return ResonanceReport.from_dict(json.load(handle))
