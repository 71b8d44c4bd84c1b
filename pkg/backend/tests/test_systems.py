from fractions import Fraction

import pytest

from app.exact import Quad, TorusPoint, quad_cmp
from app.exceptions import BadParams, OverlappingIntervals, UnknownSystem, VerificationFailed
from app.pseudogroup import BiSeq, CantorPoint, LevelPoint
from app.regions import Arc, Band
from app.systems import (
    SYSTEM_NAMES,
    TwistInterval,
    _check_band_union,
    build_system,
    cantor_orbit_oracle,
    family_a_breakpoint,
    grid_denominator,
    l_minus,
    l_plus,
    level_slice,
    parse_twist_interval,
    r_minus,
    r_plus,
    with_extra_vertical_twist,
)


def P(x, y):
    return TorusPoint.of(x, y)


# -----------------------------
# Linked twists
# -----------------------------
def test_parse_twist_interval():
    iv = parse_twist_interval("[1/8,7/8]:9/2@1/6")
    assert iv.multiple == Fraction(9, 2)
    assert iv.phase == Fraction(1, 6)
    assert iv.slope == 6
    assert parse_twist_interval("[1/4,3/4]:1").start == Fraction(1, 4)
    with pytest.raises(BadParams):
        parse_twist_interval("1/4,3/4")
    with pytest.raises(BadParams):
        parse_twist_interval("[0,1]:1")
    with pytest.raises(BadParams):
        TwistInterval(Arc.between(0, Fraction(1, 2)), 0)


def test_linked_twist_moves_the_center():
    system = build_system("linked-twist", h=["[1/4,3/4]:1"], v=["[1/4,3/4]:1"])
    T = system.generators["T"]
    assert T.apply(P("1/2", "1/2")) == P(0, "1/2")
    # off the bands the twist is the identity
    assert T.apply(P(0, 0)) == P(0, 0)
    # the horizontal band boundary is a discontinuity line
    assert T.apply(P("1/8", "1/4")) is None
    assert system.target.contains(P("1/2", 0))


def test_overlapping_twist_intervals_are_rejected():
    with pytest.raises(OverlappingIntervals):
        build_system("linked-twist", h=["[0,1/2]:1", "[1/4,3/4]:1"])
    # sharing an endpoint is fine
    build_system("linked-twist", v=["[0,1/2]:1", "[1/2,3/4]:1"])


# -----------------------------
# Family A
# -----------------------------
def test_family_a_breakpoints():
    assert family_a_breakpoint(0) == Fraction(1, 4)
    assert family_a_breakpoint(1) == Fraction(3, 4)
    assert family_a_breakpoint(2) == Fraction(7, 8)
    assert family_a_breakpoint(-1) == Fraction(1, 8)
    assert family_a_breakpoint(-2) == Fraction(1, 16)


def test_family_a_build(family_a2):
    assert list(family_a2.levels) == [-2, -1, 0, 1, 2]
    assert family_a2.gens.ids == ["sigma", "tau"]
    assert family_a2.union_check
    assert family_a2.restricted.F.ids == ["sigma~", "tau_O", "tau_U"]
    assert family_a2.M(-1) is family_a2.M(1)


def test_band_union_check_raises_on_a_wrong_union(family_a2):
    assert _check_band_union(family_a2.M(2), 2)
    with pytest.raises(VerificationFailed):
        _check_band_union(Band("vertical", Arc(Fraction(1, 4), Fraction(3, 4))), 2)


def test_family_a_orbit_stays_on_its_grid(family_a2):
    p = P("1/3", "1/5")
    D = grid_denominator(p, 2)
    assert D == 240
    T = family_a2.T(2)
    for _ in range(40):
        p = T(p)
        assert D % p.x.denominator == 0 and D % p.y.denominator == 0


# -----------------------------
# Family B
# -----------------------------
def test_family_b_band_ends():
    assert l_minus(1) == Fraction(1, 12) and r_minus(1) == Fraction(1, 6)
    assert l_plus(1) == Fraction(5, 6) and r_plus(1) == Fraction(11, 12)
    assert r_minus(2) == l_minus(1)


def test_family_b_grid_sets(family_b4):
    assert set(family_b4.Q[1]) == {P(0, "1/2"), P("1/2", "1/2"), P("1/2", 0)}
    assert family_b4.Q_tilde[1] == family_b4.Q[1]
    assert len(family_b4.Q[2]) == 15
    assert len(family_b4.Q_tilde[2]) == 12
    for n in range(2, 5):
        previous = set(family_b4.Q[n - 1])
        assert previous <= set(family_b4.Q[n])
        assert not previous & set(family_b4.Q_tilde[n])


def test_family_b_radii_shrink(family_b4):
    exps = family_b4.radii.exponents
    assert len(exps) == 5
    assert all(a < b for a, b in zip(exps, exps[1:]))
    r_sq = family_b4.r_sq
    assert all(quad_cmp(a, b) > 0 for a, b in zip(r_sq, r_sq[1:]))
    assert all(not r.is_rational for r in r_sq)


def test_family_b_generators_near_centers(family_b4):
    g = family_b4.g
    for n in range(1, 5):
        for q in family_b4.Q_tilde[n]:
            assert g.apply(LevelPoint(n, q)) is None
    f = family_b4.f
    # y = 1/8 is a horizontal boundary, so f is undefined there
    assert f.apply(LevelPoint.of("1/3", "1/8", 2)) is None


def test_extra_twist_control(family_b4):
    interval = TwistInterval(Arc.between(Fraction(-1, 64), Fraction(1, 64)), 1, 0)
    gens = with_extra_vertical_twist(family_b4, interval)
    assert gens.ids == ["f", "g"]
    p = LevelPoint.of("1/128", "1/2", 1)
    assert gens["f"].apply(p) != family_b4.f.apply(p)


# -----------------------------
# Cantor and registry
# -----------------------------
def test_cantor_orbit_oracle():
    oracle = cantor_orbit_oracle(BiSeq.periodic("01"), 6)
    assert oracle == {
        CantorPoint(0, BiSeq.periodic("01")),
        CantorPoint(0, BiSeq.periodic("10")),
        CantorPoint(1, BiSeq.periodic("01")),
    }


def test_build_system_registry():
    assert SYSTEM_NAMES == ("linked-twist", "family-a", "family-b", "cat-map", "cantor", "line")
    cat = build_system("cat-map")
    manifest = cat.manifest()
    assert manifest["constants"]["det"] == 1
    assert manifest["compact_generation"]["sigma_sq"] == Quad(Fraction(1, 64)).to_dict()
    line = build_system("line", step=Fraction(1, 2), n_max=3)
    assert line.manifest()["params"] == {"step": "1/2"}
    assert build_system("cantor").space == "cantor"
    with pytest.raises(UnknownSystem):
        build_system("nope")
    with pytest.raises(BadParams):
        build_system("family-b", n_max=0)
    with pytest.raises(BadParams):
        build_system("line", step=0)


def test_level_slice(family_a_system):
    sliced = level_slice(family_a_system, 1)
    assert sliced.generators.ids == ["T"]
    assert sliced.space == "torus"
    assert sliced.params["level"] == 1
    with pytest.raises(BadParams):
        level_slice(family_a_system, 9)
    with pytest.raises(BadParams):
        level_slice(build_system("cat-map"), 0)
