from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from app.exact import (
    QUAD_INF,
    QUAD_ZERO,
    Quad,
    TorusPoint,
    ball_test,
    circle_gap,
    mod_one,
    operator_norm_sq_bound,
    parse_point,
    quad_cmp,
    quad_min,
    rat,
    rat_to_str,
    sq_dist,
    sq_dist_float,
    sqrt_ceil,
    sqrt_floor,
)

rationals = st.fractions(min_value=-4, max_value=4, max_denominator=64)
dyadic = st.integers(min_value=0, max_value=1023).map(lambda i: Fraction(i, 1024))


def test_rat_parses_strings_and_refuses_floats():
    assert rat("3/8") == Fraction(3, 8)
    assert rat(2) == Fraction(2)
    assert rat_to_str(Fraction(6, 4)) == "3/2"
    assert rat_to_str(Fraction(5)) == "5/1"
    with pytest.raises(TypeError):
        rat(0.5)


def test_mod_one_and_circle_gap():
    assert mod_one(Fraction(-1, 4)) == Fraction(3, 4)
    assert mod_one(Fraction(7, 4)) == Fraction(3, 4)
    assert circle_gap(Fraction(1, 8), Fraction(7, 8)) == Fraction(1, 4)
    assert circle_gap(Fraction(0), Fraction(1, 2)) == Fraction(1, 2)


@given(st.fractions(min_value=0, max_value=16, max_denominator=1000))
def test_sqrt_enclosure(value):
    lo, hi = sqrt_floor(value), sqrt_ceil(value)
    assert lo * lo <= value <= hi * hi
    assert hi - lo <= Fraction(1, 2 ** 64)


def test_quad_arithmetic():
    r2 = Quad.root2(1)
    assert r2 * r2 == Quad(2)
    assert (Quad(1) + r2) * (Quad(1) - r2) == Quad(-1)
    assert Quad(3) - Quad(3) == QUAD_ZERO


def test_quad_sign_is_exact():
    assert Quad(Fraction(3, 2), -1).sign() == 1    # 3/2 > sqrt 2
    assert Quad(Fraction(7, 5), -1).sign() == -1   # 7/5 < sqrt 2
    assert Quad(0, 0).sign() == 0
    assert QUAD_INF.sign() == 1


@given(rationals, rationals, rationals, rationals)
def test_quad_cmp_agrees_with_difference_sign(a, b, c, d):
    u, v = Quad(a, b), Quad(c, d)
    assert quad_cmp(u, v) == (u - v).sign()
    assert quad_cmp(u, v) == -quad_cmp(v, u)


@given(rationals, rationals)
def test_quad_bounds_enclose_float_value(a, b):
    q = Quad(a, b)
    lo, hi = q.bounds()
    assert lo <= hi
    assert float(lo) <= float(q) + 1e-12
    assert float(q) <= float(hi) + 1e-12


@pytest.mark.parametrize("bits", [8, 16, 64, 128])
def test_quad_bounds_tighten_with_bits(bits):
    q = Quad.root2(1)
    lo, hi = q.bounds(bits)
    assert lo * lo < 2 < hi * hi
    assert hi - lo == Fraction(1, 1 << bits)
    coarse_lo, coarse_hi = q.bounds(bits // 2)
    assert coarse_lo <= lo and hi <= coarse_hi


def test_quad_infinity_orders_above_everything():
    assert quad_cmp(QUAD_INF, Quad(10 ** 9)) == 1
    assert quad_cmp(QUAD_INF, QUAD_INF) == 0
    assert quad_min([QUAD_INF, Quad(Fraction(1, 4)), Quad.root2(Fraction(1, 8))]) == Quad.root2(Fraction(1, 8))
    assert quad_min([]) == QUAD_INF
    assert Quad.from_dict(QUAD_INF.to_dict()) == QUAD_INF


def test_quad_dict_form():
    q = Quad(Fraction(1, 3), Fraction(-2, 5))
    assert q.to_dict() == {"a": "1/3", "b": "-2/5"}
    assert Quad.from_dict(q.to_dict()) == q
    assert hash(Quad(Fraction(1, 2))) == hash(Quad.of("1/2"))


def test_torus_point_reduces_coordinates():
    p = TorusPoint.of("5/4", "-1/8")
    assert p == TorusPoint(Fraction(1, 4), Fraction(7, 8))
    assert repr(p) == "(1/4, 7/8)"
    assert p.shifted(Fraction(3, 4), 0).x == 0
    assert TorusPoint.from_dict(p.to_dict()) == p


def test_parse_point():
    assert parse_point(" 1/2, 1/3 ") == TorusPoint.of("1/2", "1/3")
    with pytest.raises(ValueError):
        parse_point("1/2")


@given(dyadic, dyadic, dyadic, dyadic)
def test_sq_dist_matches_float_twin(x1, y1, x2, y2):
    p, q = TorusPoint(x1, y1), TorusPoint(x2, y2)
    exact = sq_dist(p, q)
    assert exact == sq_dist(q, p)
    assert exact <= Fraction(1, 2)
    assert sq_dist_float(np.array([float(x1)]), np.array([float(y1)]), float(x2), float(y2))[0] == pytest.approx(
        float(exact), abs=1e-12)


def test_sq_dist_wraps_around():
    assert sq_dist(TorusPoint.of("1/16", 0), TorusPoint.of("15/16", 0)) == Fraction(1, 64)


def test_ball_test_open_and_closed():
    center = TorusPoint.of(0, 0)
    edge = TorusPoint.of("1/2", 0)
    assert ball_test(edge, center, Quad(Fraction(1, 4)), closed=True)
    assert not ball_test(edge, center, Quad(Fraction(1, 4)), closed=False)
    # r^2 = sqrt 2 / 8 is irrational, so no rational point sits on the sphere
    r_sq = Quad.root2(Fraction(1, 8))
    inside = TorusPoint.of("1/4", "1/4")   # d^2 = 1/8 < 0.1767...
    outside = TorusPoint.of("1/4", "1/2")  # d^2 = 5/16
    assert ball_test(inside, center, r_sq) and ball_test(inside, center, r_sq, closed=True)
    assert not ball_test(outside, center, r_sq, closed=True)
    with pytest.raises(ValueError):
        ball_test(inside, center, QUAD_ZERO)


def test_operator_norm_bound():
    assert operator_norm_sq_bound(((1, 0), (0, 1))) == 1
    assert operator_norm_sq_bound(((1, 4), (0, 1))) >= 17
    # the cat map stretches by its larger eigenvalue, (3 + sqrt 5) / 2
    bound = operator_norm_sq_bound(((2, 1), (1, 1)))
    assert float(bound) == pytest.approx(((3 + 5 ** 0.5) / 2) ** 2, rel=1e-12)
