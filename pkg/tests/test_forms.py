"""Multilinear form algebra: evaluation, division, projection, extensions.

The direct-substitution oracles build the inserted product fields by
brute-force convolution (conftest) and evaluate the lower-arity form
slot by slot, independently of the table-level pair-merging code.
"""

import numpy as np
import pytest

from conftest import convolve_fields, random_field
from sqglab import forms as fm
from sqglab.field import SpectralField, differentiate, smooth


def random_form(m, n_max, p, rng, parity=None):
    space = fm.tuple_space(m, n_max, p)
    values = rng.normal(size=space.count) + 1j * rng.normal(size=space.count)
    form = fm.make_form(m, n_max, p, lambda mv: values, label="random")
    if parity is None:
        return form
    # project onto the requested parity sector, keeping the table symmetric
    neg_rows = space.rows_of(space.modes.shape[0] - 1 - space.idx)
    sign = 1.0 if parity == "even" else -1.0
    projected = 0.5 * (form.values + sign * form.values[neg_rows])
    return fm.MultilinearForm(space, projected, parity=parity, label="random",
                              symmetric=True)


def minus_transport_derivative(f):
    """-(d/da K f) as a field: the factor inserted by the division identity."""
    g = differentiate(smooth(f))
    return g.with_coeffs(-g.coeffs)


class TestEvaluate:
    def test_zero_field(self, rng):
        form = random_form(3, 12, 3, rng)
        assert fm.evaluate_diagonal(form, SpectralField.zero(3, 12)) == 0

    def test_hand_enumerated_unit_multiplier(self):
        # f = cos 3a + cos 6a: the six orderings of (+-3, +-3, -+6) each give
        # (1/2)^3, so the unit trilinear form evaluates to 6/8
        f = SpectralField.from_modes(3, 12, {3: 0.5, 6: 0.5})
        one = fm.make_form(3, 12, 3, lambda mv: np.ones(mv.shape[0]), parity="even")
        assert fm.evaluate_diagonal(one, f) == pytest.approx(0.75, rel=1e-14)

    def test_homogeneity(self, rng):
        form = random_form(3, 24, 4, rng)
        f = random_field(3, 24, rng)
        base = fm.evaluate_diagonal(form, f)
        scaled = fm.evaluate_diagonal(form, f.with_coeffs(0.37 * f.coeffs))
        assert scaled == pytest.approx(0.37**4 * base, rel=1e-12)

    def test_multilinearity_per_slot(self, rng):
        form = random_form(3, 12, 3, rng)
        u, v, w, x = (random_field(3, 12, rng) for _ in range(4))
        lhs = fm.evaluate(form, [u, v.with_coeffs(v.coeffs + 2.0 * x.coeffs), w])
        rhs = fm.evaluate(form, [u, v, w]) + 2.0 * fm.evaluate(form, [u, x, w])
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_lattice_mismatch_rejected(self, rng):
        form = random_form(3, 12, 3, rng)
        with pytest.raises(ValueError):
            fm.evaluate_diagonal(form, SpectralField.zero(3, 24))

    def test_table_matches_slow_summation(self, rng):
        # memoized table vs a from-scratch python loop over admissible tuples
        form = random_form(3, 12, 3, rng)
        f = random_field(3, 12, rng)
        total = 0.0 + 0.0j
        for row, value in zip(form.space.mode_values, form.values):
            term = value
            for n in row:
                term *= f.coeff(int(n))
            total += term
        assert fm.evaluate_diagonal(form, f) == pytest.approx(total, rel=1e-12)


class TestDivision:
    def test_identity_under_transport_insertion(self, rng):
        # sum_j divided(M)(u_1, .., -(d/da K u_j), .., u_p) = -i M(u_1, .., u_p)
        for p in (3, 4):
            form = random_form(3, 24, p, rng)
            if p % 2 == 0:
                form = form.plus(
                    fm.degenerate_projection(form).scaled(-1.0), label="projected"
                )
            divided = fm.normal_form_divide(form)
            fields = [random_field(3, 24, rng) for _ in range(p)]
            lhs = 0.0 + 0.0j
            for j in range(p):
                args = list(fields)
                args[j] = minus_transport_derivative(args[j])
                lhs += fm.evaluate(divided, args)
            rhs = -1j * fm.evaluate(form, fields)
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_rejects_degenerate_support(self, rng):
        space = fm.tuple_space(3, 12, 4)
        form = fm.make_form(3, 12, 4, lambda mv: np.ones(mv.shape[0]), parity="even")
        with pytest.raises(fm.ResonanceError) as info:
            fm.normal_form_divide(form)
        assert sum(info.value.resonant_tuple) == 0

    def test_cubic_never_resonates(self, rng):
        form = random_form(3, 24, 3, rng)
        divided = fm.normal_form_divide(form)
        # denominators at arity 3 stay above 2/5
        assert np.max(np.abs(divided.values)) <= 2.5 * np.max(np.abs(form.values))

    def test_parity_flip(self, rng):
        odd = random_form(3, 12, 3, rng, parity="odd")
        assert fm.parity_defect(odd) < 1e-12
        divided = fm.normal_form_divide(odd)
        assert divided.parity == "even"
        assert fm.parity_defect(divided) < 1e-12


class TestProjection:
    def test_idempotent(self, rng):
        form = random_form(3, 24, 4, rng)
        once = fm.degenerate_projection(form)
        twice = fm.degenerate_projection(once)
        assert np.array_equal(once.values, twice.values)

    def test_odd_form_annihilated_on_diagonal(self, rng):
        odd = random_form(3, 24, 4, rng, parity="odd")
        projected = fm.degenerate_projection(odd)
        for _ in range(5):
            f = random_field(3, 24, rng)
            scale = np.sum(np.abs(projected.values)) * np.max(np.abs(f.coeffs)) ** 4
            assert abs(fm.evaluate_diagonal(projected, f)) <= 1e-13 * scale

    def test_supported_off_degenerate_set_maps_to_zero(self, rng):
        form = random_form(3, 24, 4, rng)
        off = form.plus(fm.degenerate_projection(form).scaled(-1.0))
        assert np.all(fm.degenerate_projection(off).values == 0)

    def test_odd_arity_rejected(self, rng):
        with pytest.raises(ValueError):
            fm.degenerate_projection(random_form(3, 12, 3, rng))


class TestExtensions:
    def test_zero_form_maps_to_zero(self):
        zero = fm.make_form(3, 12, 3, lambda mv: np.zeros(mv.shape[0]))
        assert np.all(fm.extend_stretching(zero).values == 0)
        assert np.all(fm.extend_advection(zero).values == 0)

    @pytest.mark.parametrize("which", ["stretch", "advect"])
    def test_equal_argument_identity(self, which, rng):
        # oracle: replace one slot by the convolved product field directly
        form = random_form(3, 12, 3, rng)
        extended = (
            fm.extend_stretching(form) if which == "stretch" else fm.extend_advection(form)
        )
        for _ in range(3):
            f = random_field(3, 12, rng)
            if which == "stretch":
                inserted, _ = convolve_fields(f, differentiate(smooth(f)))
            else:
                inserted, _ = convolve_fields(differentiate(f), smooth(f))
            direct = 3.0 * fm.evaluate(form, [inserted, f, f])
            table = fm.evaluate_diagonal(extended, f)
            assert table == pytest.approx(direct, rel=1e-12)

    def test_parity_bookkeeping(self, rng):
        even = random_form(3, 12, 4, rng, parity="even")
        stretched = fm.extend_stretching(even)
        assert stretched.parity == "odd"
        assert fm.parity_defect(stretched) < 1e-12
        advected = fm.extend_advection(even)
        assert advected.parity == "odd"
        assert fm.parity_defect(advected) < 1e-12

    def test_arity_overflow(self, rng):
        form = random_form(3, 12, 6, rng)
        with pytest.raises(ValueError):
            fm.extend_stretching(form)

    def test_quadratic_combination(self, rng):
        form = random_form(3, 12, 3, rng)
        combined = fm.nonlinearity_extension(form)
        two_adv = fm.extend_advection(form).values * 2.0
        stretch = fm.extend_stretching(form).values
        assert np.allclose(combined.values, two_adv - stretch, rtol=1e-15)


class TestEnergyForm:
    def test_odd_parity_exact(self):
        d3 = fm.build_energy_form(3, 24, 3.0)
        assert d3.parity == "odd"
        assert fm.parity_defect(d3) == 0.0

    def test_real_on_real_fields(self, rng):
        d3 = fm.build_energy_form(3, 24, 2.0)
        for _ in range(5):
            f = random_field(3, 24, rng, decay=3.0)
            value = fm.evaluate_diagonal(d3, f)
            assert abs(value.imag) <= 1e-12 * max(abs(value.real), 1e-30)


class TestChain:
    def test_parity_ladder(self):
        chain = fm.build_chain(3, 12, 2.0)
        assert [c.parity for c in chain.corrections] == ["even", "even", "even"]
        assert [d.parity for d in chain.derivatives] == ["odd", "odd", "odd", "odd"]
        for form in chain.corrections + chain.derivatives:
            assert fm.parity_defect(form) < 1e-10

    def test_levels_real_and_finite(self, rng):
        chain = fm.build_chain(3, 12, 2.0)
        f = random_field(3, 12, rng, scale=0.05, decay=3.0)
        levels = chain.levels(f)
        assert np.all(np.isfinite(levels))
        assert chain.imaginary_defect(f) <= 1e-10


class TestPersistence:
    def test_form_round_trip_bit_exact(self, tmp_path, rng):
        form = random_form(3, 12, 4, rng, parity="odd")
        path = tmp_path / "table.form"
        fm.save_form(form, path)
        loaded = fm.load_form(path)
        assert np.array_equal(loaded.values, form.values)
        assert loaded.parity == form.parity
        assert loaded.space is form.space

    def test_cached_chain_matches_fresh_build(self, tmp_path):
        fresh = fm.build_chain(3, 12, 2.0)
        saved = fm.cached_chain(3, 12, 2.0, cache_dir=tmp_path)
        reloaded = fm.cached_chain(3, 12, 2.0, cache_dir=tmp_path)
        for a, b in zip(fresh.corrections + fresh.derivatives,
                        reloaded.corrections + reloaded.derivatives):
            assert np.array_equal(a.values, b.values)
        assert len(list(tmp_path.iterdir())) == 7
        del saved
