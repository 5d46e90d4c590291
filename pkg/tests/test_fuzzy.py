import itertools
import math

import mpmath
import numpy as np
import pytest

from oracles import naive_ifd, printed_divergence
from ttvdespeckle.core import ImageGrid
from ttvdespeckle.errors import ConfigurationError, ContractViolation, DomainError, ParameterError
from ttvdespeckle.fuzzy import (
    D_MAX,
    EdgeIndicatorField,
    FuzzyTemplate,
    default_templates,
    edge_indicator,
    edge_indicator_from_membership,
    format_templates,
    fuzzy_divergence,
    ifd_field,
    ifd_measure,
    load_templates,
    parse_templates,
    save_templates,
    sugeno_hesitation,
)
from ttvdespeckle.phantoms import circle_mask

GRID = np.linspace(0.0, 1.0, 200)


class TestFuzzyDivergence:
    def test_anchor_value(self):
        # 2 - 0.6 e^-0.4 - 1.4 e^0.4 ... evaluated at 50 digits with mpmath
        assert fuzzy_divergence(0.3, 0.7) == pytest.approx(0.16645711696534279, abs=1e-14)

    def test_anchor_against_live_mpmath(self):
        mpmath.mp.dps = 40
        p, q = mpmath.mpf("0.3"), mpmath.mpf("0.7")
        ref = 2 - (1 - p + q) * mpmath.exp(p - q) - (1 - q + p) * mpmath.exp(q - p)
        assert abs(fuzzy_divergence(0.3, 0.7) - float(ref)) <= 1e-15

    def test_d_max(self):
        assert D_MAX == pytest.approx(1.2642411176571154, abs=1e-15)
        assert fuzzy_divergence(0.0, 1.0) == pytest.approx(D_MAX, abs=1e-14)

    def test_grid_properties(self):
        for p in GRID[::5]:
            for q in GRID:
                d = fuzzy_divergence(p, q)
                assert d >= 0
                assert d == fuzzy_divergence(q, p)
                assert d <= D_MAX + 1e-12
                if p == q:
                    assert d == 0

    def test_matches_printed_form(self):
        for p, q in itertools.product(GRID[::10], GRID[::7]):
            assert fuzzy_divergence(p, q) == pytest.approx(printed_divergence(p, q), abs=1e-14)

    def test_monotone_in_gap(self):
        vals = [fuzzy_divergence(0.0, q) for q in GRID]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_tiny_gap_positive(self):
        # cancellation in the printed form would round this to zero
        assert fuzzy_divergence(0.5, 0.5 + 1e-6) > 0

    @pytest.mark.parametrize("p,q", [(-0.1, 0.5), (0.5, 1.2), (math.nan, 0.1)])
    def test_domain(self, p, q):
        with pytest.raises(DomainError):
            fuzzy_divergence(p, q)


class TestIfdMeasure:
    def test_zero_window_matches_zero_template(self):
        assert ifd_measure(np.zeros((3, 3)), [FuzzyTemplate(np.zeros((3, 3)))]) == 0.0

    def test_zero_window_default_templates(self):
        # every default template has a zero entry, so each min hits zero
        assert ifd_measure(np.zeros((3, 3)), default_templates()) == 0.0

    def test_complement_window_reaches_supremum(self):
        t = default_templates()[0].values
        assert ifd_measure(1.0 - t, default_templates()) == pytest.approx(D_MAX, abs=1e-14)

    def test_single_identical_template(self):
        w = np.full((3, 3), 0.4)
        assert ifd_measure(w, [FuzzyTemplate(w)]) == 0.0

    def test_vertical_step_matches_naive(self):
        w = np.array([[0.1, 0.1, 0.9]] * 3)
        ts = default_templates()
        got = ifd_measure(w, ts)
        assert got == pytest.approx(naive_ifd(w, [t.values for t in ts]), abs=1e-12)
        assert 0 < got <= D_MAX

    def test_random_windows_match_naive(self, rng):
        ts = default_templates()
        for _ in range(25):
            w = rng.random((3, 3))
            assert ifd_measure(w, ts) == pytest.approx(naive_ifd(w, [t.values for t in ts]), abs=1e-12)

    def test_template_order_irrelevant(self, rng):
        ts = default_templates()
        w = rng.random((3, 3))
        shuffled = [ts[i] for i in rng.permutation(len(ts))]
        assert ifd_measure(w, ts) == ifd_measure(w, shuffled)

    def test_errors(self):
        ts = default_templates()
        with pytest.raises(ContractViolation):
            ifd_measure(np.zeros((2, 3)), ts)
        with pytest.raises(DomainError):
            ifd_measure(np.full((3, 3), 1.5), ts)
        with pytest.raises(ConfigurationError):
            ifd_measure(np.zeros((3, 3)), [])

    def test_field_matches_pointwise(self, rng):
        mu = rng.random((6, 7))
        ts = default_templates()
        field = ifd_field(mu, ts)
        p = np.pad(mu, 1, mode="edge")
        for i in range(6):
            for j in range(7):
                assert field[i, j] == pytest.approx(ifd_measure(p[i:i + 3, j:j + 3], ts), abs=1e-14)


class TestTemplates:
    def test_default_set(self):
        ts = default_templates()
        assert len(ts) == 16
        assert len({t.label for t in ts}) == 16
        for t in ts:
            assert set(np.unique(t.values)) <= {0.0, 1.0}

    def test_invalid_template(self):
        with pytest.raises(ConfigurationError):
            FuzzyTemplate(np.zeros((2, 2)))
        with pytest.raises(ConfigurationError):
            FuzzyTemplate(np.full((3, 3), 2.0))

    def test_file_round_trip(self, tmp_path):
        ts = default_templates()[:3] + [FuzzyTemplate(np.full((3, 3), 0.125), "soft")]
        path = tmp_path / "t.txt"
        save_templates(ts, path)
        back = load_templates(path)
        assert [t.label for t in back] == [t.label for t in ts]
        for a, b in zip(ts, back):
            assert np.array_equal(a.values, b.values)
        assert format_templates(back) == path.read_text()

    @pytest.mark.parametrize(
        "text,line",
        [
            ("a\n0 0 0\n0 0\n0 0 0\n", 3),
            ("a\n0 0 0\n0 x 0\n0 0 0\n", 3),
            ("a\n0 0 0\n0 0 0\n", 1),
            ("ok\n0 0 0\n0 0 0\n0 0 0\n\nbad\n0 0 0\n0 0 0\n0 0 7\n", 6),
        ],
    )
    def test_parse_errors_carry_line(self, text, line):
        with pytest.raises(ConfigurationError, match=f"line {line}"):
            parse_templates(text)

    def test_empty_file(self):
        with pytest.raises(ConfigurationError):
            parse_templates("\n\n")


class TestEdgeIndicator:
    def test_bounds_on_clean_and_noisy(self, circle, circle_l10):
        for img in (circle, circle_l10):
            theta = edge_indicator(img).theta
            assert theta.min() >= 0.05 and theta.max() <= 1.0

    def test_constant_image_is_uniform(self):
        field = edge_indicator(ImageGrid(np.full((8, 8), 120.0)))
        # a flat window still differs from every binary step template
        assert np.all(field.theta < 1.0)
        assert np.ptp(field.theta) == 0

    def test_boundary_lower_than_interior(self, circle):
        theta = edge_indicator(circle).theta
        inside = circle_mask(128)
        grown = np.zeros_like(inside)
        shrunk = np.ones_like(inside)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                s = np.roll(np.roll(inside, di, 0), dj, 1)
                grown |= s
                shrunk &= s
        band = grown & ~shrunk
        interior = circle_mask(128, 20)
        assert theta[band].mean() < theta[interior].mean()

    def test_zero_image_is_all_one(self):
        assert np.array_equal(edge_indicator(ImageGrid(np.zeros((6, 6)))).theta, np.ones((6, 6)))

    def test_floor_where_divergence_saturates(self):
        # a lone vertical step whose window is the complement of a template
        mu = np.zeros((3, 3))
        mu[:, 0] = 1.0
        theta = edge_indicator(mu, delta=0.07).theta
        assert theta[1, 1] == 0.07

    def test_ndarray_defaults_to_unit_scale(self):
        mu = np.full((4, 4), 0.5)
        assert np.array_equal(edge_indicator(mu).theta, edge_indicator_from_membership(mu).theta)

    def test_bad_delta(self):
        with pytest.raises(ParameterError):
            edge_indicator_from_membership(np.zeros((3, 3)), delta=0)

    def test_field_validation(self):
        with pytest.raises(ParameterError):
            EdgeIndicatorField(np.array([[0.01]]), 0.05)


class TestHesitation:
    def test_lambda_zero_is_identity(self):
        mu = np.linspace(0, 1, 11)
        assert np.allclose(sugeno_hesitation(mu, 0.0), mu, rtol=0, atol=1e-15)

    def test_positive_lambda_raises_memberships(self):
        mu = np.linspace(0.05, 0.95, 10)
        out = sugeno_hesitation(mu, 2.0)
        assert np.all(out >= mu) and np.all(out <= 1)

    def test_endpoints_fixed(self):
        assert np.array_equal(sugeno_hesitation(np.array([0.0, 1.0]), 3.0), [0.0, 1.0])

    def test_invalid_lambda(self):
        with pytest.raises(ParameterError):
            sugeno_hesitation(np.zeros(2), -1.0)
