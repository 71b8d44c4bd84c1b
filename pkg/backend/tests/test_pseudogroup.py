from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from app.exact import QUAD_INF, Quad, TorusPoint
from app.exceptions import BadParams, CompatibilityError, PointOutsideU, SpaceMismatch, UnsupportedRegion
from app.pseudogroup import (
    ZERO_SEQUENCE,
    AffinePiece,
    BiSeq,
    CantorPoint,
    CompactGenSystem,
    ComposedMap,
    LevelPoint,
    LinePoint,
    OrbitStatus,
    PiecewiseAffine,
    Word,
    affine_rule,
    apply_generator,
    apply_word,
    combine,
    compose,
    enumerate_words,
    identity_rule,
    invert,
    orbit_bfs,
    partial_map,
    point_from_dict,
    point_sq_distance,
    point_to_dict,
    restricted_orbit,
    sigma_of_system,
    word_germ,
)
from app.regions import FULL, Arc, Ball, Band, Box, IntervalSet, Strip, horizontal_band, vertical_band
from app.systems import build_cat_map, cat_map_box_system

odd_dyadic = st.integers(min_value=0, max_value=511).map(lambda i: Fraction(2 * i + 1, 1024))
rationals = st.fractions(min_value=0, max_value=1, max_denominator=97).filter(lambda v: v < 1)
bits = st.text(alphabet="01", min_size=1, max_size=4)
cat_letters = st.lists(st.sampled_from([("f", 1), ("f", -1)]), max_size=6)


def P(x, y):
    return TorusPoint.of(x, y)


# -----------------------------
# Sequences
# -----------------------------
def test_periodic_sequences_are_canonical():
    assert BiSeq.periodic("0101") == BiSeq.periodic("01")
    assert BiSeq.periodic("01").shift(1) == BiSeq.periodic("10")
    assert BiSeq.periodic("01").shift(2) == BiSeq.periodic("01")
    assert str(BiSeq.periodic("0110")) == "(0110)"
    assert BiSeq.parse("01") == BiSeq.periodic("01")


def test_parse_sequence_with_center_block():
    seq = BiSeq.parse("0|1|0")
    assert seq.at(0) == 1
    assert seq.at(1) == 0 and seq.at(-1) == 0
    assert seq.zero_radius() == 0
    assert seq.in_U(0) and not seq.in_U(1)
    assert seq.shift(1).at(-1) == 1
    assert ZERO_SEQUENCE.is_zero
    assert ZERO_SEQUENCE.zero_radius() is None


@given(bits, bits, st.text(alphabet="01", max_size=4), st.integers(-5, 5), st.integers(-6, 6))
def test_shift_reads_the_next_coordinate(left, right, center, start, k):
    seq = BiSeq(left, center, right, start)
    moved = seq.shift(k)
    for i in range(-12, 13):
        assert moved.at(i) == seq.at(i + k)
    assert moved.shift(-k) == seq


@given(bits)
def test_periodic_shift_by_period_is_identity(word):
    seq = BiSeq.periodic(word)
    assert seq.shift(len(word)) == seq


def test_cantor_point_requires_zero_block():
    CantorPoint(1, BiSeq.periodic("01"))
    with pytest.raises(BadParams):
        CantorPoint(1, BiSeq.periodic("10"))


# -----------------------------
# Points
# -----------------------------
def test_point_distances_across_levels_and_spaces():
    a, b = LevelPoint.of(0, 0, 1), LevelPoint.of("1/4", 0, 1)
    assert point_sq_distance(a, b) == Quad(Fraction(1, 16))
    assert point_sq_distance(a, LevelPoint.of(0, 0, 2)) == QUAD_INF
    assert point_sq_distance(LinePoint(1), LinePoint(Fraction(5, 2))) == Quad(Fraction(9, 4))
    with pytest.raises(SpaceMismatch):
        point_sq_distance(a, P(0, 0))


def test_point_dict_forms_rebuild():
    points = [P("1/3", "2/5"), LevelPoint.of("1/2", "1/8", -2), LinePoint(Fraction(-7, 3)),
              CantorPoint(1, BiSeq.periodic("001"))]
    for p in points:
        data = point_to_dict(p)
        assert data["space"] == p.space
        assert point_from_dict(data) == p


# -----------------------------
# Words
# -----------------------------
def test_words_are_freely_reduced():
    assert Word.parse("f f^-1 g") == Word.parse("g")
    assert str(Word.parse("f^2 g^-1")) == "f f g^-1"
    assert Word.parse("f g").inverse() == Word.parse("g^-1 f^-1")
    assert str(Word.parse("f") * Word.parse("f^-1")) == "id"
    assert len(Word.parse("f^3")) == 3


def test_enumerate_words_counts_reduced_words():
    letters = [("a", 1), ("a", -1), ("b", 1), ("b", -1)]
    words = list(enumerate_words(letters, 3))
    assert len(words) == 4 + 12 + 36
    assert [str(w) for w in words[:4]] == ["a", "a^-1", "b", "b^-1"]
    assert len(list(enumerate_words([("a", 1), ("a", -1)], 3))) == 6


def test_apply_word_reports_failed_step(cantor):
    mu = CantorPoint(0, ZERO_SEQUENCE)
    ev = apply_word(cantor, Word.parse("g g^-1 f"), mu)
    # g g^-1 reduces away, and f is undefined at mu
    assert not ev.defined
    assert ev.failed_step == 1
    assert ev.trace == [mu]


@settings(max_examples=500)
@given(rationals, rationals)
def test_generator_then_inverse_is_identity(x, y):
    p = TorusPoint(x, y)
    f = build_cat_map()["f"]
    assert apply_generator(f, -1, apply_generator(f, 1, p)) == p


def test_cantor_f_is_undefined_at_mu(cantor):
    assert apply_generator(cantor["f"], 1, CantorPoint(2, ZERO_SEQUENCE)) is None


# -----------------------------
# Generators
# -----------------------------
def test_cat_map_generator(cat_map):
    f = build_cat_map()["f"]
    assert f.apply(P("1/2", 0)) == P(0, "1/2")
    assert f.apply(P(0, "1/2"), -1) == P("1/2", 0)
    action = f.local_action(P("1/3", "1/7"))
    assert action.matrix == ((2, 1), (1, 1))
    assert not action.isometric
    with pytest.raises(SpaceMismatch):
        f.apply(LinePoint(0))
    with pytest.raises(BadParams):
        cat_map["nope"]


@settings(max_examples=500)
@given(rationals, rationals, cat_letters)
def test_word_then_inverse_returns_home(x, y, letters):
    gens = build_cat_map()
    p = TorusPoint(x, y)
    w = Word(tuple(letters))
    there = apply_word(gens, w, p)
    assert there.defined
    back = apply_word(gens, w.inverse(), there.point)
    assert back.point == p


@settings(max_examples=500)
@given(odd_dyadic, odd_dyadic, st.integers(-2, 2))
def test_family_a_sigma_has_an_inverse(family_a2, x, y, level):
    sigma = family_a2.gens["sigma"]
    p = LevelPoint(level, TorusPoint(x, y))
    q = sigma.apply(p)
    assert q is not None and q.level == level
    assert sigma.apply(q, -1) == p


def test_level_shift_stops_at_the_built_range(family_a2):
    tau = family_a2.gens["tau"]
    top = LevelPoint.of(0, 0, 2)
    assert tau.apply(top) is None
    assert tau.reaches_beyond(top)
    assert tau.apply(LevelPoint.of(0, 0, 1)) == top
    assert tau.local_action(LevelPoint.of(0, 0, 0)).isometric


def test_cantor_generators_at_mu(cantor):
    for n in range(4):
        mu = CantorPoint(n, ZERO_SEQUENCE)
        assert cantor["f"].apply(mu) is None
        assert cantor["f"].apply(mu, -1) is None
        assert cantor["g"].apply(mu) == CantorPoint(n + 1, ZERO_SEQUENCE)


def test_piecewise_rule_takes_first_piece():
    band = vertical_band(0, Fraction(1, 2))
    rule = PiecewiseAffine([AffinePiece(band, offset=(Fraction(1, 4), 0), label="shift"), AffinePiece(FULL)], "r")
    assert rule(P("1/4", 0)) == P("1/2", 0)
    assert rule(P("3/4", 0)) == P("3/4", 0)
    composed = ComposedMap([rule, affine_rule(((1, 1), (0, 1)))], "c")
    assert composed(P("1/4", "1/8")) == P("5/8", "1/8")
    assert composed.flatten()(P("1/4", "1/8")) == P("5/8", "1/8")
    assert composed.inverse()(P("5/8", "1/8")) == P("1/4", "1/8")


# -----------------------------
# Orbits
# -----------------------------
def test_cat_map_three_cycle(cat_map):
    graph = orbit_bfs(cat_map, P("1/2", 0))
    assert graph.status == OrbitStatus.COMPLETE
    assert graph.node_set() == {P("1/2", 0), P(0, "1/2"), P("1/2", "1/2")}
    assert graph.verify_closure(cat_map)
    assert list(graph.edges_frame().columns) == ["from_index", "gen", "exp", "to_index"]


def test_rational_cat_orbits_are_finite(cat_map):
    graph = orbit_bfs(cat_map, P("1/5", 0), max_nodes=1000)
    assert graph.complete
    assert all(p.x.denominator in (1, 5) and p.y.denominator in (1, 5) for p in graph.nodes)


def test_cantor_orbit_of_period_two(cantor):
    graph = orbit_bfs(cantor, CantorPoint(0, BiSeq.periodic("01")))
    assert graph.complete
    assert graph.node_set() == {
        CantorPoint(0, BiSeq.periodic("01")),
        CantorPoint(0, BiSeq.periodic("10")),
        CantorPoint(1, BiSeq.periodic("01")),
    }


def test_line_orbit_hits_the_node_bound(line):
    graph = orbit_bfs(line, LinePoint(Fraction(1, 2)), max_nodes=50)
    assert graph.status == OrbitStatus.TRUNCATED_BY_NODE_BOUND
    assert len(graph) == 50


def test_restricted_orbit_on_the_line(line):
    U = IntervalSet.parse("0:3/2")
    quarter = restricted_orbit(line, U, LinePoint(Fraction(1, 4)))
    assert quarter.finite and quarter.count == 2
    assert quarter.method == "translation-subgroup"
    assert restricted_orbit(line, U, LinePoint(Fraction(1, 2))).count == 1
    with pytest.raises(PointOutsideU):
        restricted_orbit(line, U, LinePoint(2))


# -----------------------------
# Partial maps
# -----------------------------
SHEAR = ((1, 1), (0, 1))
LOWER = ((1, 0), (1, 1))


@settings(max_examples=500)
@given(rationals, rationals)
def test_composition_domain_is_preimage_of_outer_domain(x, y):
    f = partial_map(Box.open(0, Fraction(1, 2), 0, Fraction(1, 2)), affine_rule(SHEAR, label="s"))
    g = partial_map(vertical_band(Fraction(1, 4), Fraction(3, 4), closed=False), affine_rule(LOWER, label="l"))
    h = compose(g, f)
    p = TorusPoint(x, y)
    fp = f(p)
    expected = None if fp is None else g(fp)
    assert h(p) == expected


@settings(max_examples=500)
@given(rationals, rationals)
def test_inverse_undoes_the_map(x, y):
    f = partial_map(Box.open(0, Fraction(1, 2), 0, Fraction(1, 2)), affine_rule(SHEAR, label="s"))
    p = TorusPoint(x, y)
    q = f(p)
    if q is not None:
        assert invert(f)(q) == p
        assert f.then(invert(f))(p) == p


def test_combine_agreeing_maps():
    a = partial_map(Box.open(0, Fraction(1, 2), 0, Fraction(1, 2)), identity_rule())
    b = partial_map(Box.open(Fraction(1, 4), Fraction(3, 4), Fraction(1, 4), Fraction(3, 4)), identity_rule())
    both = combine([a, b])
    assert both(P("1/8", "1/8")) == P("1/8", "1/8")
    assert both(P("5/8", "5/8")) == P("5/8", "5/8")
    assert both(P("7/8", "1/8")) is None


def test_combine_rejects_disagreement_with_witness():
    box_a = Box.open(0, Fraction(1, 2), 0, Fraction(1, 2))
    box_b = Box.open(Fraction(1, 4), Fraction(3, 4), Fraction(1, 4), Fraction(3, 4))
    a = partial_map(box_a, identity_rule(), "id")
    b = partial_map(box_b, affine_rule(((1, 0), (0, 1)), (Fraction(1, 8), 0), label="push"), "push")
    with pytest.raises(CompatibilityError) as err:
        combine([a, b])
    witness = err.value.witness
    assert box_a.contains(witness) and box_b.contains(witness)
    assert err.value.status_code == 422


def test_combine_decides_a_tiny_box_exactly():
    lo, hi = Fraction(3334, 10000), Fraction(33341, 100000)
    box = Box.open(lo, hi, lo, hi)
    a = partial_map(box, identity_rule())
    b = partial_map(box, affine_rule(((2, 1), (1, 1))))
    with pytest.raises(CompatibilityError) as err:
        combine([a, b])
    witness = err.value.witness
    assert box.contains(witness)
    assert a(witness) != b(witness)


def test_combine_accepts_maps_that_agree_on_a_line():
    line = Band("horizontal", Arc.point(0))
    shear = partial_map(line, affine_rule(SHEAR))
    both = combine([partial_map(line, identity_rule()), shear])
    assert both(P("1/3", 0)) == P("1/3", 0)
    thick = horizontal_band(0, Fraction(1, 1000))
    with pytest.raises(CompatibilityError):
        combine([partial_map(thick, identity_rule()), partial_map(thick, affine_rule(SHEAR))])


def test_combine_on_balls():
    push = affine_rule(((1, 0), (0, 1)), (Fraction(1, 8), 0), label="push")
    left = Ball(P("1/4", "1/2"), Fraction(1, 16))
    touching = Ball(P("3/4", "1/2"), Fraction(1, 16))
    both = combine([partial_map(left, identity_rule()), partial_map(touching, push)])
    assert both(P("1/4", "1/2")) == P("1/4", "1/2")
    assert both(P("3/4", "1/2")) == P("7/8", "1/2")
    overlapping = Ball(P("1/2", "1/2"), Fraction(1, 16))
    with pytest.raises(CompatibilityError) as err:
        combine([partial_map(left, identity_rule()), partial_map(overlapping, push)])
    assert left.contains(err.value.witness) and overlapping.contains(err.value.witness)


def test_combine_on_slanted_strips():
    # (2x + y, y) is the identity wherever x + y is an integer
    lift = ((2, 1), (0, 1))
    diagonal = Strip((1, 1), 0, Arc.point(0))
    both = combine([partial_map(diagonal, identity_rule()), partial_map(diagonal, affine_rule(lift))])
    assert both(P("1/3", "2/3")) == P("1/3", "2/3")
    thick = Strip((1, 1), 0, Arc.between(0, Fraction(1, 1000)))
    with pytest.raises(CompatibilityError) as err:
        combine([partial_map(thick, identity_rule()), partial_map(thick, affine_rule(lift))])
    assert thick.contains(err.value.witness)
    rising = Strip((1, 1), 0, Arc.between(0, Fraction(1, 4)))
    falling = Strip((1, -1), 0, Arc.between(0, Fraction(1, 4)))
    with pytest.raises(CompatibilityError) as err:
        combine([partial_map(rising, identity_rule()), partial_map(falling, affine_rule(((2, 1), (1, 1))))])
    assert rising.contains(err.value.witness) and falling.contains(err.value.witness)


def test_combine_refuses_a_ball_against_a_slanted_strip():
    strip = Strip((1, 1), 0, Arc.between(0, Fraction(1, 4)))
    push = affine_rule(((1, 0), (0, 1)), (Fraction(1, 8), 0), label="push")
    ball = Ball(P("1/8", 0), Fraction(1, 64))
    with pytest.raises(UnsupportedRegion):
        combine([partial_map(strip, identity_rule()), partial_map(ball, push)])


open_arcs = st.tuples(
    st.fractions(min_value=0, max_value=1, max_denominator=1000),
    st.fractions(min_value=0, max_value=1, max_denominator=1000),
).filter(lambda t: t[0] < t[1])


@settings(max_examples=1000, deadline=None)
@given(open_arcs, open_arcs, open_arcs, open_arcs)
def test_identity_and_cat_map_clash_exactly_where_boxes_meet(ax, ay, bx, by):
    box_a = Box.open(ax[0], ax[1], ay[0], ay[1])
    box_b = Box.open(bx[0], bx[1], by[0], by[1])
    meet = max(ax[0], bx[0]) < min(ax[1], bx[1]) and max(ay[0], by[0]) < min(ay[1], by[1])
    maps = [partial_map(box_a, identity_rule()), partial_map(box_b, affine_rule(((2, 1), (1, 1))))]
    if not meet:
        combine(maps)
        return
    with pytest.raises(CompatibilityError) as err:
        combine(maps)
    assert box_a.contains(err.value.witness) and box_b.contains(err.value.witness)


def test_restricting_a_map():
    f = partial_map(FULL, affine_rule(SHEAR))
    band = horizontal_band(0, Fraction(1, 4), closed=False)
    g = f.restrict(band)
    assert g(P(0, "1/8")) == P("1/8", "1/8")
    assert g(P(0, "1/2")) is None


def test_word_germ_of_the_cat_map(cat_map):
    center = P("1/4", "1/4")
    germ = word_germ(cat_map, Word.parse("f f"), center, Fraction(1, 1024))
    assert germ is not None
    assert germ(center) == cat_map["f"].apply(cat_map["f"].apply(center))
    assert germ(P("1/2", "1/2")) is None


# -----------------------------
# Compact generation
# -----------------------------
def test_box_system_margin():
    assert sigma_of_system(cat_map_box_system()) == Quad(Fraction(1, 64))


def test_pairing_must_cover_f(cat_map):
    with pytest.raises(BadParams):
        CompactGenSystem(FULL, cat_map, cat_map, {"x": "f"})
