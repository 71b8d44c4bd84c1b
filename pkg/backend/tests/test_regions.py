from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.exact import QUAD_INF, Quad, TorusPoint, quad_cmp, sq_dist, sq_dist_float
from app.exceptions import UnsupportedRegion
from app.pseudogroup import BiSeq, CantorPoint, LevelPoint, LinePoint
from app.regions import (
    EMPTY,
    FULL,
    INSIDE,
    OUTSIDE,
    STRADDLES,
    Arc,
    Ball,
    BallUnion,
    Band,
    Box,
    Complement,
    Cylinder,
    IntervalSet,
    LevelRegion,
    Strip,
    ball_relation,
    complement,
    containment_margin_sq,
    difference,
    horizontal_band,
    intersection,
    parse_arc,
    region_at,
    region_from_dict,
    union,
    vertical_band,
)

CAT = ((2, 1), (1, 1))

# odd multiples of 2^-10 never sit on a boundary built from multiples of 1/8
odd_dyadic = st.integers(min_value=0, max_value=511).map(lambda i: Fraction(2 * i + 1, 1024))
coords = st.fractions(min_value=0, max_value=Fraction(98, 99), max_denominator=97)
nudges = st.fractions(min_value=Fraction(-1, 8), max_value=Fraction(1, 8), max_denominator=211)
arcs = st.tuples(coords, coords, st.booleans()).filter(lambda t: t[0] < t[1])
leaf_regions = st.one_of(
    arcs.map(lambda t: horizontal_band(t[0], t[1], closed=t[2])),
    arcs.map(lambda t: vertical_band(t[0], t[1], closed=t[2])),
    st.tuples(arcs, arcs).map(lambda ab: Box.open(ab[0][0], ab[0][1], ab[1][0], ab[1][1])),
)


def region_trees(depth: int):
    """Boolean trees of boxes and axis bands, at most ``depth`` combinators deep."""
    if depth == 0:
        return leaf_regions
    kids = region_trees(depth - 1)
    return st.one_of(
        leaf_regions,
        st.tuples(kids, kids).map(lambda ab: union(*ab)),
        st.tuples(kids, kids).map(lambda ab: intersection(*ab)),
        kids.map(complement),
    )



def P(x, y):
    return TorusPoint.of(x, y)


# -----------------------------
# Arcs
# -----------------------------
def test_arc_complement_wraps_through_zero():
    arc = Arc.between(Fraction(1, 4), Fraction(3, 4))
    comp = arc.complement()
    assert comp.wraps
    assert comp.contains(0)
    assert not comp.contains(Fraction(1, 4))
    assert not comp.contains(Fraction(1, 2))
    assert comp.length == Fraction(1, 2)


def test_arc_margin_and_gap():
    arc = Arc.between(Fraction(1, 4), Fraction(3, 4))
    assert arc.margin(Fraction(1, 2)) == Fraction(1, 4)
    assert arc.margin(0) == 0
    assert arc.gap(0) == Fraction(1, 4)
    assert arc.gap(Fraction(1, 3)) == 0


def test_arc_interior_overlap_allows_shared_endpoint():
    left = Arc.between(0, Fraction(1, 4))
    right = Arc.between(Fraction(1, 4), Fraction(1, 2))
    assert not left.interior_overlaps(right)
    assert not right.interior_overlaps(left)
    assert Arc.between(0, Fraction(1, 2)).interior_overlaps(Arc.between(Fraction(1, 4), Fraction(3, 4)))


def test_parse_arc_notations():
    half_open = parse_arc("(0,1/8]")
    assert not half_open.lo_closed and half_open.hi_closed
    assert not half_open.contains(0) and half_open.contains(Fraction(1, 8))
    assert parse_arc("[1/4,3/4]") == Arc.between(Fraction(1, 4), Fraction(3, 4))
    with pytest.raises(ValueError):
        Arc.between(0, 2)


def test_point_arc_is_a_circle():
    circle = Arc.point(Fraction(5, 4))
    assert circle.contains(Fraction(1, 4))
    assert not circle.contains(Fraction(1, 3))
    assert circle.length == 0


# -----------------------------
# Shapes
# -----------------------------
def test_band_distances():
    band = horizontal_band(Fraction(1, 4), Fraction(3, 4))
    assert band.contains(P(0, "1/4"))
    assert band.sq_dist_to(P(0, 0)) == Quad(Fraction(1, 16))
    assert band.sq_dist_to_complement(P(0, "1/2")) == Quad(Fraction(1, 16))
    assert isinstance(complement(band), Band)
    assert not complement(band).contains(P(0, "1/4"))


def test_slanted_strip_distance_scales_with_normal():
    strip = Strip((1, 1), 0, Arc.between(0, Fraction(1, 4)))
    assert strip.contains(P("1/8", 0))
    assert strip.contains(P("7/8", "1/4"))  # 7/8 + 1/4 = 9/8 = 1/8 mod 1
    assert strip.sq_dist_to(P("1/2", 0)) == Quad(Fraction(1, 32))


@given(odd_dyadic, odd_dyadic)
def test_band_preimage_under_cat_map(x, y):
    band = vertical_band(Fraction(1, 4), Fraction(3, 4))
    pre = band.preimage(CAT, (0, 0))
    p = TorusPoint(x, y)
    assert pre.contains(p) == band.contains(TorusPoint(2 * x + y, x + y))


def test_preimage_needs_integer_matrix():
    with pytest.raises(UnsupportedRegion):
        vertical_band(0, Fraction(1, 2)).preimage(((1, Fraction(1, 2)), (0, 1)), (0, 0))


def test_open_box_around_point():
    box = Box.around(P("1/4", "1/4"), Fraction(1, 16))
    assert box.contains(P("1/4", "1/4"))
    assert not box.contains(P("5/16", "1/4"))
    assert box.sq_dist_to(P("1/2", "1/4")) == Quad(Fraction(9, 256))
    assert box.sq_dist_to_complement(P("1/4", "1/4")) == Quad(Fraction(1, 256))


def test_ball_membership_wraps():
    ball = Ball(P(0, 0), Fraction(1, 16))
    assert ball.contains(P("1/8", "1/8"))
    assert ball.contains(P("15/16", 0))
    assert not ball.contains(P("1/4", 0))
    assert Ball(P(0, 0), Fraction(1, 16), closed=True).contains(P("1/4", 0))
    with pytest.raises(ValueError):
        Ball(P(0, 0), 0)


def test_ball_union_matches_members():
    centers = [P("1/4", "1/4"), P("3/4", "3/4"), P("1/2", 0)]
    balls = BallUnion(centers, Fraction(1, 64), closed=True)
    assert balls.contains(P("1/4", "3/8"))
    assert balls.contains(P("1/2", "31/32"))
    assert not balls.contains(P("1/2", "1/2"))


# -----------------------------
# Combinators
# -----------------------------
def test_union_and_intersection_simplify():
    band = horizontal_band(Fraction(1, 4), Fraction(3, 4))
    assert union(FULL, band) is FULL
    assert union(EMPTY, band) is band
    assert intersection(EMPTY, band) is EMPTY
    assert intersection(FULL, band) is band
    assert complement(FULL) is EMPTY
    ball = Ball(P(0, 0), Fraction(1, 16))
    assert isinstance(complement(ball), Complement)
    assert complement(complement(ball)) is ball


def test_nested_unions_flatten():
    a, b, c = (vertical_band(Fraction(i, 8), Fraction(i + 1, 8), closed=False) for i in (0, 2, 4))
    u = union(union(a, b), c)
    assert len(u.members) == 3
    assert (a | b).contains(P("3/16", 0)) is False
    assert (a | b).contains(P("5/16", 0))
    assert (~a).contains(P("3/16", 0))


def test_difference():
    band = horizontal_band(0, Fraction(1, 2))
    ball = Ball(P(0, "1/4"), Fraction(1, 64))
    d = difference(band, ball)
    assert not d.contains(P(0, "1/4"))
    assert d.contains(P("1/2", "1/4"))
    assert not d.contains(P("1/2", "3/4"))


@settings(max_examples=1000)
@given(odd_dyadic, odd_dyadic)
def test_batch_membership_agrees_with_exact(x, y):
    region = union(
        intersection(horizontal_band(Fraction(1, 8), Fraction(5, 8)), complement(Ball(P("1/2", "1/2"), Fraction(1, 16)))),
        Box.open(Fraction(3, 4), Fraction(7, 8), 0, Fraction(1, 4)),
    )
    batch = region.contains_batch(np.array([float(x)]), np.array([float(y)]))
    assert bool(batch[0]) == region.contains(TorusPoint(x, y))


def test_region_dict_form_rebuilds():
    region = union(Box.open(0, Fraction(1, 2), 0, Fraction(1, 2)),
                   complement(Ball(P("3/4", "3/4"), Quad.root2(Fraction(1, 64)))))
    rebuilt = region_from_dict(region.to_dict())
    for p in (P("1/4", "1/4"), P("3/4", "3/4"), P("5/8", "3/4")):
        assert rebuilt.contains(p) == region.contains(p)


# -----------------------------
# Levels, line and Cantor sets
# -----------------------------
def test_level_region_defaults_to_empty():
    region = LevelRegion({0: FULL})
    assert region.contains(LevelPoint.of(0, 0, 0))
    assert not region.contains(LevelPoint.of(0, 0, 1))
    assert region_at(region, 3) is EMPTY
    assert region_at(FULL, 3) is FULL


def test_interval_set_parsing():
    U = IntervalSet.parse("0:3/2")
    assert not U.contains(LinePoint(0))
    assert U.contains(LinePoint(1))
    assert not U.contains(LinePoint(Fraction(3, 2)))
    assert U.bounds() == (0, Fraction(3, 2))
    closed = IntervalSet.parse("[0,1]; (2,3)")
    assert closed.contains(LinePoint(0)) and closed.contains(LinePoint(1))
    assert not closed.contains(LinePoint(2))
    with pytest.raises(ValueError):
        IntervalSet.parse("2:1")


def test_cylinder_membership():
    cyl = Cylinder(0, 0, [0, 1])
    assert cyl.contains(CantorPoint(0, BiSeq.periodic("01")))
    assert not cyl.contains(CantorPoint(0, BiSeq.periodic("10")))
    assert not Cylinder(1, 0, [0, 1]).contains(CantorPoint(0, BiSeq.periodic("01")))


# -----------------------------
# Balls against regions
# -----------------------------
def test_ball_relation():
    band = horizontal_band(Fraction(1, 4), Fraction(3, 4))
    assert ball_relation(band, P(0, "1/2"), Fraction(1, 16)) == INSIDE
    assert ball_relation(band, P(0, "1/2"), Fraction(1, 8)) == STRADDLES
    assert ball_relation(band, P(0, 0), Fraction(1, 16)) == OUTSIDE
    assert ball_relation(FULL, P(0, 0), Fraction(1, 4)) == INSIDE


def test_containment_margin_of_nested_boxes():
    inner = Box.open(Fraction(1, 4), Fraction(3, 4), Fraction(1, 4), Fraction(3, 4))
    outer = Box.open(Fraction(1, 8), Fraction(7, 8), Fraction(1, 8), Fraction(7, 8))
    assert containment_margin_sq(inner, outer) == Quad(Fraction(1, 64))
    assert containment_margin_sq(outer, inner) == Quad(0)
    assert containment_margin_sq(inner, FULL) == QUAD_INF


def test_containment_margin_of_nested_balls():
    inner = Ball(P("1/2", "1/2"), Fraction(1, 64))
    outer = Ball(P("1/2", "1/2"), Fraction(1, 16))
    margin = containment_margin_sq(inner, outer)
    assert float(margin) == pytest.approx(1 / 64, rel=1e-9)
    assert float(margin) <= 1 / 64


def test_ball_relation_on_a_union_of_boxes():
    region = union(Box.open(Fraction(1, 10), Fraction(1, 2), Fraction(1, 10), Fraction(9, 10)),
                   Box.open(Fraction(2, 5), Fraction(9, 10), Fraction(1, 10), Fraction(9, 10)))
    p = P("9/20", "1/2")
    # neither box alone keeps more than 1/20 around p
    assert region.sq_dist_to_complement(p) == Quad(Fraction(49, 400))
    assert ball_relation(region, p, Fraction(1, 25)) == INSIDE
    assert ball_relation(region, p, Fraction(1, 8)) == STRADDLES


def test_distance_to_an_intersection_of_bands():
    square = intersection(horizontal_band(Fraction(1, 4), Fraction(3, 4)), vertical_band(Fraction(1, 4), Fraction(3, 4)))
    assert square.sq_dist_to(P(0, 0)) == Quad(Fraction(1, 8))
    assert square.sq_dist_to(P(0, "1/2")) == Quad(Fraction(1, 16))
    assert square.sq_dist_to(P("1/2", "1/2")) == Quad(0)
    assert ball_relation(square, P(0, 0), Fraction(1, 10)) == OUTSIDE


def test_exact_distances_refuse_ball_trees():
    balls = union(Ball(P("1/4", "1/4"), Fraction(1, 64)), Ball(P("3/4", "3/4"), Fraction(1, 64)))
    with pytest.raises(UnsupportedRegion):
        balls.sq_dist_to_complement(P("1/4", "1/4"))
    assert balls.lower_sq_dist_to_complement(P("1/4", "1/4")) == Quad(Fraction(1, 64))
    assert ball_relation(balls, P("1/4", "1/4"), Fraction(1, 128)) == INSIDE
    cut = intersection(horizontal_band(0, Fraction(1, 2)), Ball(P("1/2", "3/4"), Fraction(1, 64)))
    with pytest.raises(UnsupportedRegion):
        cut.sq_dist_to(P("1/2", 0))
    assert ball_relation(cut, P("1/2", 0), Fraction(1, 64)) == OUTSIDE


def test_distance_to_a_ball_matches_sampled_boundary():
    ball = Ball(P(0, 0), Quad.root2(Fraction(1, 64)), closed=True)
    p = P("1/2", "1/2")
    d = complement(ball).sq_dist_to_complement(p)
    r = float(ball.r_sq) ** 0.5
    theta = np.linspace(0.0, 2 * np.pi, 1 << 16, endpoint=False)
    sampled = sq_dist_float((r * np.cos(theta)) % 1.0, (r * np.sin(theta)) % 1.0, 0.5, 0.5).min()
    assert float(d) <= sampled + 1e-12
    assert float(d) == pytest.approx(sampled, abs=1e-9)


@settings(max_examples=1000, deadline=None)
@given(region_trees(4), coords, coords, nudges, nudges)
def test_points_closer_than_the_distance_share_membership(region, x, y, dx, dy):
    p = TorusPoint(x, y)
    q = p.shifted(dx, dy)
    inside = region.contains(p)
    bound = region.sq_dist_to_complement(p) if inside else region.sq_dist_to(p)
    if quad_cmp(Quad(sq_dist(p, q)), bound) < 0:
        assert region.contains(q) == inside


@settings(max_examples=1000, deadline=None)
@given(region_trees(4), region_trees(4), coords, coords)
def test_de_morgan_on_region_trees(a, b, x, y):
    p = TorusPoint(x, y)
    left = complement(union(a, b))
    right = intersection(complement(a), complement(b))
    assert left.contains(p) == right.contains(p)
    assert quad_cmp(left.sq_dist_to(p), right.sq_dist_to(p)) == 0
    assert quad_cmp(left.sq_dist_to_complement(p), right.sq_dist_to_complement(p)) == 0
