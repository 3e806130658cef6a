"""Polynomial arithmetic, monomial ordering, moments, and the parser."""
from __future__ import annotations

import math

import numpy as np
import pytest

from roacert import Box, box_moments, lie_derivative, monomial_basis, parse_polynomial
from roacert.poly import Polynomial, PolynomialParseError


def random_poly(rng, arity, degree, n_terms=6):
    basis = monomial_basis(arity, degree)
    picks = rng.choice(len(basis), size=min(n_terms, len(basis)), replace=False)
    coeffs = rng.integers(-5, 6, size=len(picks))
    terms = {basis[i]: float(c) for i, c in zip(picks, coeffs) if c != 0}
    return Polynomial(arity, terms)


class TestMonomialBasis:
    def test_two_vars_degree_two_order(self):
        assert monomial_basis(2, 2) == (
            (0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0),
        )

    def test_counts(self):
        assert len(monomial_basis(1, 3)) == 4
        assert len(monomial_basis(2, 2)) == 6
        assert len(monomial_basis(5, 10)) == 3003

    def test_count_formula(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            arity = int(rng.integers(1, 5))
            degree = int(rng.integers(0, 7))
            assert len(monomial_basis(arity, degree)) == math.comb(
                arity + degree, degree
            )

    def test_graded_then_lex_within_grade(self):
        basis = monomial_basis(3, 4)
        degrees = [sum(e) for e in basis]
        assert degrees == sorted(degrees)
        for a, b in zip(basis, basis[1:]):
            if sum(a) == sum(b):
                assert a < b


class TestArithmetic:
    def test_difference_of_squares(self):
        x = Polynomial.variable(1, 0)
        one = Polynomial.constant(1, 1.0)
        assert (x + one) * (x - one) == Polynomial(1, {(2,): 1.0, (0,): -1.0})

    def test_additive_inverse_prunes_to_zero(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            p = random_poly(rng, int(rng.integers(1, 4)), 5)
            assert (p + p * (-1.0)).is_zero()

    def test_binomial_square(self):
        x1 = Polynomial.variable(2, 0)
        x2 = Polynomial.variable(2, 1)
        sq = (x1 + x2) ** 2
        assert sq == Polynomial(2, {(2, 0): 1.0, (1, 1): 2.0, (0, 2): 1.0})

    def test_ring_axioms_on_random_polynomials(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            arity = int(rng.integers(1, 4))
            p = random_poly(rng, arity, 3)
            q = random_poly(rng, arity, 3)
            r = random_poly(rng, arity, 3)
            assert p * q == q * p
            assert (p * q) * r == p * (q * r)
            assert (p + q) * r == p * r + q * r

    def test_arity_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Polynomial.variable(1, 0) + Polynomial.variable(2, 0)

    def test_no_zero_coefficients_stored(self):
        p = Polynomial(2, {(1, 0): 1.0, (0, 1): 0.0})
        assert (0, 1) not in p.terms


class TestCalculus:
    def test_power_rule(self):
        x = Polynomial.variable(1, 0)
        assert (x ** 2).differentiate(0) == x * 2.0

    def test_partial_in_first_variable(self):
        t = Polynomial.variable(3, 0)
        x1 = Polynomial.variable(3, 1)
        assert (t * x1 ** 2).differentiate(0) == x1 ** 2

    def test_absent_variable_gives_zero(self):
        x1 = Polynomial.variable(2, 0)
        assert x1.differentiate(1).is_zero()

    def test_leibniz_rule_exactly(self):
        rng = np.random.default_rng(19)
        for _ in range(25):
            arity = int(rng.integers(1, 4))
            var = int(rng.integers(0, arity))
            p = random_poly(rng, arity, 4)
            q = random_poly(rng, arity, 4)
            lhs = (p * q).differentiate(var)
            rhs = p.differentiate(var) * q + p * q.differentiate(var)
            assert lhs == rhs


class TestFlowDerivative:
    """The time-plus-velocity derivative of a space-time polynomial."""

    def test_time_plus_square(self):
        # v(t, x1) = t + x1^2 has rate 1 + 2 x1 y1
        v = Polynomial(2, {(1, 0): 1.0, (0, 2): 1.0})
        assert lie_derivative(v, 1) == Polynomial(
            3, {(0, 0, 0): 1.0, (0, 1, 1): 2.0}
        )

    def test_cross_term(self):
        v = Polynomial(3, {(0, 1, 1): 1.0})  # x1 x2 over (t, x1, x2)
        expected = Polynomial(5, {(0, 0, 1, 1, 0): 1.0, (0, 1, 0, 0, 1): 1.0})
        assert lie_derivative(v, 2) == expected

    def test_constant_vanishes(self):
        assert lie_derivative(Polynomial.constant(2, 4.0), 1).is_zero()

    def test_degree_never_grows(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            n = int(rng.integers(1, 3))
            v = random_poly(rng, 1 + n, 5)
            assert lie_derivative(v, n).degree <= v.degree

    def test_matches_finite_difference_along_linear_path(self):
        rng = np.random.default_rng(23)
        for _ in range(15):
            n = int(rng.integers(1, 3))
            v = random_poly(rng, 1 + n, 4)
            lv = lie_derivative(v, n)
            t0 = rng.uniform(0.1, 0.9)
            x0 = rng.uniform(-1, 1, size=n)
            y = rng.uniform(-1, 1, size=n)
            h = 1e-6

            def along(s):
                return v.evaluate(np.concatenate(([t0 + s], x0 + s * y)))

            fd = (along(h) - along(-h)) / (2 * h)
            exact = lv.evaluate(np.concatenate(([t0], x0, y)))
            assert abs(fd - exact) <= 1e-6 * (1 + abs(exact))


class TestEvaluation:
    def test_pointwise(self):
        p = Polynomial(1, {(2,): 1.0, (0,): -1.0})
        assert p.evaluate([2.0]) == 3.0
        assert Polynomial.constant(3, 1.0).evaluate([4.0, 5.0, 6.0]) == 1.0
        q = Polynomial(2, {(2, 0): 1.0, (1, 1): 2.0, (0, 2): 1.0})
        assert q.evaluate([1.0, -1.0]) == 0.0

    def test_evaluate_many_matches_scalar(self):
        rng = np.random.default_rng(31)
        p = random_poly(rng, 3, 5)
        pts = rng.uniform(-2, 2, size=(50, 3))
        vals = p.evaluate_many(pts)
        for point, val in zip(pts, vals):
            assert abs(val - p.evaluate(point)) <= 1e-12 * (1 + abs(val))

    def test_partial_substitution(self):
        # fixing t = 1 in t + x^2 leaves 1 + x^2 over x alone
        v = Polynomial(2, {(1, 0): 1.0, (0, 2): 1.0})
        fixed = v.eval_partial({0: 1.0})
        assert fixed == Polynomial(1, {(0,): 1.0, (2,): 1.0})


class TestBoxMoments:
    def test_symmetric_interval(self):
        box = Box((-1.0,), (1.0,))
        vals = box_moments(box, [(0,), (1,), (2,)])
        assert vals == pytest.approx([2.0, 0.0, 2.0 / 3.0], abs=1e-15)

    def test_unit_square_mass(self):
        assert box_moments(Box((0.0, 0.0), (1.0, 1.0)), [(0, 0)])[0] == 1.0

    def test_even_fourth_moment(self):
        box = Box((-0.8, -0.8), (0.8, 0.8))
        val = box_moments(box, [(2, 2)])[0]
        assert val == pytest.approx(0.1165084, abs=5e-7)

    def test_monte_carlo_agreement(self):
        rng = np.random.default_rng(41)
        box = Box((-1.0, 0.5), (2.0, 1.5))
        for _ in range(4):
            exps = tuple(int(e) for e in rng.integers(0, 4, size=2))
            if sum(exps) > 6:
                continue
            exact = box_moments(box, [exps])[0]
            pts = box.sample(rng, 1_000_000)
            est = np.mean(pts[:, 0] ** exps[0] * pts[:, 1] ** exps[1])
            est *= box.volume()
            assert est == pytest.approx(exact, rel=0.01)


class TestParser:
    def test_disk_target(self):
        p = parse_polynomial("0.0625 - x1^2 - x2^2", ["x1", "x2"])
        assert p == Polynomial(
            2, {(0, 0): 0.0625, (2, 0): -1.0, (0, 2): -1.0}
        )

    def test_half_plane(self):
        p = parse_polynomial("x1 + x2", ["x1", "x2"])
        assert p == Polynomial(2, {(1, 0): 1.0, (0, 1): 1.0})

    def test_products_powers_parens(self):
        p = parse_polynomial("(x + 1)^2 - 2*x", ["x"])
        assert p == Polynomial(1, {(2,): 1.0, (0,): 1.0})

    def test_whitespace_insensitive(self):
        names = ["x1", "x2"]
        a = parse_polynomial("x1+2*x2^3", names)
        b = parse_polynomial("  x1 +  2 * x2 ^ 3 ", names)
        assert a == b

    def test_dangling_power_is_an_error(self):
        with pytest.raises(PolynomialParseError) as info:
            parse_polynomial("x1^", ["x1"])
        assert info.value.position >= 2

    def test_unknown_variable(self):
        with pytest.raises(PolynomialParseError):
            parse_polynomial("x3 + 1", ["x1", "x2"])

    def test_fractional_exponent_rejected(self):
        with pytest.raises(PolynomialParseError):
            parse_polynomial("x1^1.5", ["x1"])

    def test_round_trip_random(self):
        rng = np.random.default_rng(47)
        for _ in range(25):
            arity = int(rng.integers(1, 4))
            p = random_poly(rng, arity, 5)
            text = p.to_string()
            assert parse_polynomial(text, _default_names(arity)) == p


def _default_names(arity):
    return [f"x{i + 1}" for i in range(arity)]
