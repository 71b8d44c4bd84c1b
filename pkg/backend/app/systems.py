"""
Builders for the concrete systems: generic toral linked twists, the two
level-indexed twist families, the cat map, the Cantor shift pseudogroup and
line translations.

Family A lives on torus levels z in [-m_max, m_max] and is generated by
sigma (the level-z twist T_|z|) and tau (level shift). Family B lives on
levels 0..n_max; its generator f acts by T_n off the discontinuity set and
g shifts levels outside the balls cut around the periodic sets Q_n.
"""

import logging
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .exact import Quad, TorusPoint, rat, rat_to_str, sq_dist
from .exceptions import (
    BadParams,
    OverlappingIntervals,
    RadiusSearchExhausted,
    UnknownSystem,
    UnsupportedRegion,
    VerificationFailed,
)
from .pseudogroup import (
    AffinePiece,
    BiSeq,
    CantorLevelGenerator,
    CantorPoint,
    CompactGenSystem,
    ComposedMap,
    GeneratorSet,
    PiecewiseAffine,
    SequenceShiftGenerator,
    TorusGenerator,
    TranslationGenerator,
    affine_rule,
    identity_rule,
    is_integer_matrix,
    matrix_to_list,
    sigma_of_system,
)
from .regions import (
    EMPTY,
    FULL,
    Arc,
    Ball,
    BallUnion,
    Band,
    Box,
    LevelRegion,
    Region,
    complement,
    intersection,
    parse_arc,
    union,
)

logger = logging.getLogger(__name__)

ORIGIN = TorusPoint(Fraction(0), Fraction(0))


# -----------------------------
# Generic linked twists
# -----------------------------
@dataclass(frozen=True)
class TwistInterval:
    """A closed band with twist t -> s (t - phase), s = multiple / width.

    Without a phase the twist starts at the lower end of the band, so an
    integer multiple is continuous across the band boundary.
    """

    arc: Arc
    multiple: Fraction
    phase: Optional[Fraction] = None

    def __post_init__(self):
        object.__setattr__(self, "multiple", rat(self.multiple))
        if self.phase is not None:
            object.__setattr__(self, "phase", rat(self.phase))
        if not (0 < self.arc.length < 1):
            raise BadParams(f"twist band must have length in (0, 1), got {self.arc.length}")
        if self.multiple == 0:
            raise BadParams("twist multiple must be nonzero")

    @property
    def slope(self) -> Fraction:
        return self.multiple / self.arc.length

    @property
    def start(self) -> Fraction:
        return self.arc.lo if self.phase is None else self.phase

    def to_dict(self) -> dict:
        out = {"arc": self.arc.to_dict(), "multiple": rat_to_str(self.multiple)}
        if self.phase is not None:
            out["phase"] = rat_to_str(self.phase)
        return out


_TWIST_RE = re.compile(r"^\s*([\[\(][^\]\)]*[\]\)])\s*:\s*([^@\s]+)\s*(?:@\s*(\S+))?\s*$")


def parse_twist_interval(text: str) -> TwistInterval:
    """``"[1/4,3/4]:1"`` or, with a phase, ``"[1/8,7/8]:9/2@1/6"``."""
    match = _TWIST_RE.match(text)
    if not match:
        raise BadParams(f"not a twist interval: {text!r} (expected e.g. [1/4,3/4]:1)")
    arc_text, multiple, phase = match.groups()
    try:
        return TwistInterval(parse_arc(arc_text), rat(multiple), rat(phase) if phase else None)
    except ValueError as exc:
        raise BadParams(f"bad twist interval {text!r}: {exc}") from exc


@dataclass(frozen=True)
class LinkedTwistSpec:
    h_intervals: Tuple[TwistInterval, ...] = ()
    v_intervals: Tuple[TwistInterval, ...] = ()

    def validate(self) -> None:
        for name, items in (("horizontal", self.h_intervals), ("vertical", self.v_intervals)):
            for i, j in combinations(range(len(items)), 2):
                if items[i].arc.interior_overlaps(items[j].arc):
                    raise OverlappingIntervals(
                        f"{name} intervals {i} and {j} share more than an endpoint: "
                        f"{items[i].arc} and {items[j].arc}"
                    )

    def to_dict(self) -> dict:
        return {"h": [iv.to_dict() for iv in self.h_intervals], "v": [iv.to_dict() for iv in self.v_intervals]}


def _trim_shared_endpoints(arcs: Sequence[Arc]) -> List[Arc]:
    """Open every endpoint already claimed by an earlier arc, making the arcs disjoint."""
    taken: Set[Fraction] = set()
    out = []
    for arc in arcs:
        lo, hi = arc.endpoints()
        out.append(Arc(arc.lo, arc.hi, arc.lo_closed and lo not in taken, arc.hi_closed and hi not in taken, arc.wraps))
        if arc.lo_closed:
            taken.add(lo)
        if arc.hi_closed:
            taken.add(hi)
    return out


def _twist_piece(interval: TwistInterval, arc: Arc, axis: str, label: str) -> AffinePiece:
    s = interval.slope
    shift = -s * interval.start
    if axis == "horizontal":
        matrix, offset, anchor = ((1, s), (0, 1)), (shift, 0), (Fraction(0), interval.arc.lo)
    else:
        matrix, offset, anchor = ((1, 0), (s, 1)), (0, shift), (interval.arc.lo, Fraction(0))
    if s.denominator == 1:
        anchor = None
    return AffinePiece(Band(axis, arc), matrix, offset, anchor, label=label, invariant=True)


def twist_rule(intervals: Sequence[TwistInterval], axis: str, label: str) -> PiecewiseAffine:
    """Band twists on ``intervals`` combined with the identity elsewhere."""
    arcs = _trim_shared_endpoints([iv.arc for iv in intervals])
    pieces = [_twist_piece(iv, arc, axis, f"{label}{i}") for i, (iv, arc) in enumerate(zip(intervals, arcs))]
    rest = complement(union(*(Band(axis, iv.arc) for iv in intervals)))
    if rest is not EMPTY:
        pieces.append(AffinePiece(rest, label="id", invariant=True))
    return PiecewiseAffine(pieces, label)


@dataclass
class LinkedTwistSystem:
    """T = T_v after T_h with its support M and discontinuity set Delta."""

    spec: LinkedTwistSpec
    T_h: PiecewiseAffine
    T_v: PiecewiseAffine
    T: ComposedMap
    M: Region
    H: Region
    delta: Optional[Region]

    def generator(self, gid: str = "T") -> TorusGenerator:
        domain = FULL if self.delta is None else complement(self.delta)
        return TorusGenerator.on_torus(gid, self.T, domain, description="linked twist T_v * T_h")

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "T": self.T.to_dict(),
            "M": self.M.to_dict(),
            "delta": self.delta.to_dict() if self.delta is not None else None,
        }

    constants = to_dict


def twist_delta(spec: LinkedTwistSpec, T_h: PiecewiseAffine) -> Region:
    """Boundary lines of the horizontal bands plus T_h-preimages of the vertical band boundaries.

    Lines are kept for every vertical interval, so the boundary of the first
    vertical band V_0 is in the set even where T is continuous across it.
    """
    parts: List[Region] = []
    for iv in spec.h_intervals:
        for e in sorted(set(iv.arc.endpoints())):
            parts.append(Band("horizontal", Arc.point(e)))
    H = union(*(Band("horizontal", iv.arc) for iv in spec.h_intervals))
    outside = complement(H)
    twisted = [pc for pc in T_h.pieces if pc.label != "id"]
    for iv in spec.v_intervals:
        for v in sorted(set(iv.arc.endpoints())):
            line = Band("vertical", Arc.point(v))
            parts.append(intersection(outside, line))
            for piece in twisted:
                if not is_integer_matrix(piece.matrix):
                    raise UnsupportedRegion("discontinuity set of a rational-slope horizontal twist")
                parts.append(intersection(piece.region, line.preimage(piece.matrix, piece.offset)))
    return union(*parts)


def build_linked_twist(spec: LinkedTwistSpec) -> LinkedTwistSystem:
    spec.validate()
    T_h = twist_rule(spec.h_intervals, "horizontal", "h")
    T_v = twist_rule(spec.v_intervals, "vertical", "v")
    H = union(*(Band("horizontal", iv.arc) for iv in spec.h_intervals))
    M = union(H, *(Band("vertical", iv.arc) for iv in spec.v_intervals))
    try:
        delta = twist_delta(spec, T_h)
    except UnsupportedRegion:
        logger.warning("discontinuity set not representable for %s; the twist is left total", spec)
        delta = None
    return LinkedTwistSystem(spec, T_h, T_v, ComposedMap([T_h, T_v], "T"), M, H, delta)


# -----------------------------
# Family A: sigma / tau on torus levels indexed by Z
# -----------------------------
def family_a_breakpoint(z: int) -> Fraction:
    """p_z: 1 - 2^(-1-z) for z >= 1, 2^(z-2) for z <= 0."""
    if z >= 1:
        return 1 - Fraction(1, 2 ** (1 + z))
    return Fraction(1, 2 ** (2 - z))


def family_a_spec(m: int) -> LinkedTwistSpec:
    h = TwistInterval(Arc.between(Fraction(1, 4), Fraction(3, 4)), 1)
    vs = []
    for z in range(-m, m + 1):
        lo, hi = family_a_breakpoint(z), family_a_breakpoint(z + 1)
        vs.append(TwistInterval(Arc.between(lo, hi), 2 ** (2 + abs(z)) * (hi - lo)))
    return LinkedTwistSpec((h,), tuple(vs))


def grid_denominator(point: TorusPoint, m: int) -> int:
    """Denominator of the dyadic-rational grid holding the T_m orbit of a rational point."""
    return math.lcm(point.x.denominator, point.y.denominator, 2 ** (m + 2))


def _open_band_union(spec: LinkedTwistSpec) -> Region:
    def opened(arc: Arc) -> Arc:
        return Arc(arc.lo, arc.hi, False, False, arc.wraps)

    return union(*(Band("horizontal", opened(iv.arc)) for iv in spec.h_intervals),
                 *(Band("vertical", opened(iv.arc)) for iv in spec.v_intervals))


def _check_band_union(M: Region, m_max: int) -> bool:
    """Union of all M_m misses exactly {0} x ([0,1/4) u (3/4,1)), checked on a dyadic grid.

    Every grid point with x >= 2^-(k) lies in M_(k-2), so the grid only uses
    the levels that were built.
    """
    k = min(m_max, 6) + 2
    g = 2 ** k
    for i in range(g):
        for j in range(g):
            p = TorusPoint(Fraction(i, g), Fraction(j, g))
            missing = p.x == 0 and (p.y < Fraction(1, 4) or p.y > Fraction(3, 4))
            if M.contains(p) == missing:
                logger.error("band union check failed at %r", p)
                raise VerificationFailed(f"union of the twist bands is wrong at {p!r}")
    return True


@dataclass
class FamilyAData:
    m_max: int
    twists: Dict[int, LinkedTwistSystem]
    gens: GeneratorSet
    restricted: CompactGenSystem
    union_check: bool

    @property
    def levels(self) -> range:
        return range(-self.m_max, self.m_max + 1)

    def T(self, m: int) -> ComposedMap:
        return self.twists[abs(m)].T

    def M(self, m: int) -> Region:
        return self.twists[abs(m)].M

    def constants(self) -> dict:
        return {
            "m_max": self.m_max,
            "levels": [-self.m_max, self.m_max],
            "breakpoints": {str(z): rat_to_str(family_a_breakpoint(z)) for z in range(-self.m_max, self.m_max + 2)},
            "sigma_sq": sigma_of_system(self.restricted).to_dict(),
            "band_union_check": self.union_check,
            "restricted_generators": self.restricted.F.ids,
            "extensions": dict(sorted(self.restricted.pairing.items())),
        }


def _ball_sq(k: int) -> Fraction:
    return Fraction(1, 4 ** k)


def build_family_A(m_max: int) -> FamilyAData:
    if m_max < 0:
        raise BadParams("m_max must be non-negative")
    twists = {m: build_linked_twist(family_a_spec(m)) for m in range(m_max + 1)}
    levels = range(-m_max, m_max + 1)
    ends = (True, True)
    space = "torus-level"

    def per_level(fn: Callable[[int], object]) -> Dict[int, object]:
        return {z: fn(z) for z in levels}

    identity = identity_rule()
    sigma_rules = per_level(lambda z: twists[abs(z)].T)
    sigma = TorusGenerator("sigma", sigma_rules, per_level(lambda z: FULL), space=space, open_ends=ends,
                           description="(p, z) -> (T_|z| p, z)")
    tau = TorusGenerator("tau", per_level(lambda z: identity), per_level(lambda z: FULL), level_shift=1,
                         space=space, open_ends=ends, description="(p, z) -> (p, z + 1)")

    interiors = {m: _open_band_union(family_a_spec(m)) for m in range(m_max + 1)}
    sigma_m = TorusGenerator("sigma~", sigma_rules, per_level(lambda z: interiors[abs(z)]), space=space,
                             open_ends=ends, description="sigma on the interior of M_|z|")
    tau_u = TorusGenerator("tau_U", per_level(lambda z: identity),
                           per_level(lambda z: complement(Ball(ORIGIN, _ball_sq(abs(z) + 5), closed=True))),
                           level_shift=1, space=space, open_ends=ends,
                           description="tau off the closed ball of radius 2^-(|z|+5) at the origin")
    tau_o = TorusGenerator("tau_O", per_level(lambda z: identity),
                           per_level(lambda z: Ball(ORIGIN, _ball_sq(abs(z) + 4))),
                           level_shift=1, space=space, open_ends=ends,
                           description="tau on the open ball of radius 2^-(|z|+4) at the origin")
    tau_u_ext = TorusGenerator("tau_U+", per_level(lambda z: identity),
                               per_level(lambda z: complement(Ball(ORIGIN, _ball_sq(abs(z) + 6), closed=True))),
                               level_shift=1, space=space, open_ends=ends, extension_of="tau_U")
    tau_o_ext = TorusGenerator("tau_O+", per_level(lambda z: identity),
                               per_level(lambda z: Ball(ORIGIN, _ball_sq(abs(z) + 3))),
                               level_shift=1, space=space, open_ends=ends, extension_of="tau_O")
    restricted = CompactGenSystem(
        U=LevelRegion({z: FULL for z in levels}),
        F=GeneratorSet([sigma_m, tau_u, tau_o]),
        Ftilde=GeneratorSet([sigma, tau_u_ext, tau_o_ext]),
        pairing={"sigma~": "sigma", "tau_U": "tau_U+", "tau_O": "tau_O+"},
        label="family-a restricted",
    )
    union_check = _check_band_union(twists[m_max].M, m_max)
    logger.info("family A built on levels %d..%d (band union check %s)", -m_max, m_max, union_check)
    return FamilyAData(m_max, twists, GeneratorSet([sigma, tau]), restricted, union_check)


# -----------------------------
# Family B: f~ / g~ on torus levels 0..n_max
# -----------------------------
def l_minus(n: int) -> Fraction:
    return Fraction(1, 3 * 2 ** (1 + n))


def r_minus(n: int) -> Fraction:
    return Fraction(1, 3 * 2 ** n)


def l_plus(n: int) -> Fraction:
    return 1 - r_minus(n)


def r_plus(n: int) -> Fraction:
    return 1 - l_minus(n)


H_B = (Fraction(1, 8), Fraction(7, 8))
V0_B = (Fraction(1, 6), Fraction(5, 6))


def family_b_spec(m: int) -> LinkedTwistSpec:
    """H with x + 6(y - 1/6), V_0 with y + 6(x - 1/6), and the V_n^-/V_n^+ bands for n <= m."""
    h = TwistInterval(Arc.between(*H_B), 6 * (H_B[1] - H_B[0]), Fraction(1, 6))
    vs = [TwistInterval(Arc.between(*V0_B), 6 * (V0_B[1] - V0_B[0]), Fraction(1, 6))]
    for n in range(1, m + 1):
        vs.append(TwistInterval(Arc.between(l_minus(n), r_minus(n)), 1))
        vs.append(TwistInterval(Arc.between(l_plus(n), r_plus(n)), 1))
    return LinkedTwistSpec((h,), tuple(vs))


def _common_denominator(n_max: int) -> int:
    return 3 * 2 ** (n_max + 3)


def _scaled_bands(n: int, D: int) -> List[Tuple[str, int, int]]:
    out = [("horizontal", int(H_B[0] * D), int(H_B[1] * D))]
    for iv in family_b_spec(n).v_intervals:
        lo, hi = iv.arc.endpoints()
        out.append(("vertical", int(lo * D), int(hi * D)))
    return out


def grid_masks(n_max: int) -> Tuple[Dict[int, np.ndarray], Dict[int, np.ndarray]]:
    """Boolean masks of Q_n and Q~_n on the 2^n grid, index [i, j] for (i/2^n, j/2^n)."""
    D = _common_denominator(n_max)
    q: Dict[int, np.ndarray] = {0: np.zeros((1, 1), dtype=bool)}
    qt: Dict[int, np.ndarray] = {0: np.zeros((1, 1), dtype=bool)}
    for n in range(1, n_max + 1):
        g = 2 ** n
        coords = np.arange(g, dtype=np.int64) * (D // g)
        X, Y = np.meshgrid(coords, coords, indexing="ij")
        mask = np.zeros((g, g), dtype=bool)
        for axis, lo, hi in _scaled_bands(n, D):
            t = Y if axis == "horizontal" else X
            mask |= (t >= lo) & (t <= hi)
        q[n] = mask
        previous = np.zeros((g, g), dtype=bool)
        if n > 1:
            previous[::2, ::2] = q[n - 1]
        qt[n] = mask & ~previous
    return q, qt


def mask_points(mask: np.ndarray) -> List[TorusPoint]:
    g = mask.shape[0]
    return [TorusPoint(Fraction(int(i), g), Fraction(int(j), g)) for i, j in np.argwhere(mask)]


@dataclass
class RadiusChoice:
    exponents: List[int]
    boundary_centers: Dict[int, List[TorusPoint]]

    @property
    def r_sq(self) -> List[Quad]:
        return [radius_sq(k) for k in self.exponents]


def radius_sq(k: int) -> Quad:
    """r^2 = 4^-k * sqrt 2; irrational, so no rational point lies on a sphere of this radius."""
    return Quad.root2(Fraction(1, 4 ** k))


def _circular(t: np.ndarray, D: int) -> np.ndarray:
    t = t % D
    return np.minimum(t, D - t)


def _pair_fails(d_sq: Fraction, k_m: int, k: int) -> bool:
    # r_m - r_n < d < r_m + r_n with r = 2^-k 2^(1/4); compared through fourth powers
    a, b = Fraction(1, 2 ** k_m), Fraction(1, 2 ** k)
    u, w = (a - b) ** 2, (a + b) ** 2
    d4 = d_sq * d_sq
    return 2 * u * u < d4 < 2 * w * w


def choose_radii(qt_masks: Dict[int, np.ndarray], n_max: int, radius_cap: int = 64) -> RadiusChoice:
    """Smallest dyadic exponents k_n with r_n^2 = 4^-k_n sqrt 2 meeting the radius conditions.

    For every center c in Q~_n: the ball B(c, r_n) stays inside one band of
    M_n, its distance to Delta_n is positive, and for m < n and c' in Q~_m,
    d(c, c') > r_m - r_n implies d(c, c') > r_m + r_n. All comparisons are
    exact (integers scaled by a common denominator, or Fractions); the
    distance to Delta_n uses whole boundary lines, which only makes the
    radii smaller. Centers on the horizontal boundary lines lie in Delta_n
    themselves; they get balls but are excluded from the first two conditions
    and reported in ``boundary_centers``.
    """
    D = _common_denominator(n_max)
    SQ = 37 * D * D
    exponents = [0]
    boundary: Dict[int, List[TorusPoint]] = {}
    h_lo, h_hi = int(H_B[0] * D), int(H_B[1] * D)

    def minimal_k(start: int, ok: Callable[[int], bool], what: str, n: int) -> int:
        k = start
        while not ok(k):
            k += 1
            if k > radius_cap:
                raise RadiusSearchExhausted(f"no radius exponent <= {radius_cap} for level {n} ({what})")
        return k

    for n in range(1, n_max + 1):
        k_start = exponents[-1] + 1
        idx = np.argwhere(qt_masks[n])
        if len(idx) == 0:
            exponents.append(k_start)
            continue
        step = D // 2 ** n
        X = idx[:, 0].astype(np.int64) * step
        Y = idx[:, 1].astype(np.int64) * step
        on_boundary = (Y == h_lo) | (Y == h_hi)
        boundary[n] = [TorusPoint(Fraction(int(i), 2 ** n), Fraction(int(j), 2 ** n)) for i, j in idx[on_boundary]]

        bands = _scaled_bands(n, D)
        margin = np.zeros(len(idx), dtype=np.int64)
        for axis, lo, hi in bands:
            t = Y if axis == "horizontal" else X
            inside = (t >= lo) & (t <= hi)
            margin = np.where(inside, np.maximum(margin, np.minimum(t - lo, hi - t)), margin)
        safe = 37 * margin * margin
        for h in (h_lo, h_hi):
            d = _circular(Y - h, D)
            safe = np.minimum(safe, 37 * d * d)
        for axis, lo, hi in bands[1:]:
            for v in (lo, hi):
                d = _circular(X - v, D)
                safe = np.minimum(safe, 37 * d * d)
                d = _circular(X + 6 * Y - v, D)
                safe = np.minimum(safe, d * d)
        interior = safe[~on_boundary]
        if len(interior):
            s_min = int(interior.min())
            if s_min <= 0:
                raise RadiusSearchExhausted(f"a center of level {n} touches its band boundary")
            k_start = minimal_k(k_start, lambda k: s_min * s_min * 16 ** k > 2 * SQ * SQ, "band margin", n)

        k_n = k_start
        r_n_hi = 2.0 ** (-k_start) * 2 ** 0.25
        for m in range(1, n):
            if not qt_masks[m].any():
                continue
            g_m = 2 ** m
            r_m = 2.0 ** (-exponents[m]) * 2 ** 0.25
            reach = r_m + r_n_hi
            units = int(math.ceil(reach * g_m)) + 1
            cx = idx[:, 0] / 2 ** n
            cy = idx[:, 1] / 2 ** n
            base_i = np.floor(cx * g_m).astype(np.int64)
            base_j = np.floor(cy * g_m).astype(np.int64)
            seen: Set[Tuple[int, int, int, int]] = set()
            for a in range(-units, units + 1):
                for b in range(-units, units + 1):
                    ci = (base_i + a) % g_m
                    cj = (base_j + b) % g_m
                    present = qt_masks[m][ci, cj]
                    dx = np.abs(cx - ci / g_m) % 1.0
                    dy = np.abs(cy - cj / g_m) % 1.0
                    dx = np.minimum(dx, 1.0 - dx)
                    dy = np.minimum(dy, 1.0 - dy)
                    d = np.sqrt(dx * dx + dy * dy)
                    near = present & (d < reach * (1 + 1e-9)) & (d > (r_m - r_n_hi) * (1 - 1e-9))
                    for t in np.flatnonzero(near):
                        key = (int(idx[t, 0]), int(idx[t, 1]), int(ci[t]), int(cj[t]))
                        if key in seen:
                            continue
                        seen.add(key)
                        c = TorusPoint(Fraction(key[0], 2 ** n), Fraction(key[1], 2 ** n))
                        c2 = TorusPoint(Fraction(key[2], g_m), Fraction(key[3], g_m))
                        d_sq = sq_dist(c, c2)
                        k_m = exponents[m]
                        k_n = max(k_n, minimal_k(k_start, lambda k: not _pair_fails(d_sq, k_m, k), "separation", n))
        exponents.append(k_n)
        logger.info("level %d: %d centers, radius exponent %d (%d on the horizontal boundary)",
                    n, len(idx), k_n, len(boundary[n]))
    return RadiusChoice(exponents, boundary)


@dataclass
class FamilyBData:
    n_max: int
    twists: Dict[int, LinkedTwistSystem]
    Q: Dict[int, List[TorusPoint]]
    Q_tilde: Dict[int, List[TorusPoint]]
    radii: RadiusChoice
    U: Dict[int, Region]
    V: Dict[int, Region]
    gens: GeneratorSet
    q_masks: Dict[int, np.ndarray] = field(repr=False, default_factory=dict)

    @property
    def levels(self) -> range:
        return range(0, self.n_max + 1)

    @property
    def r_sq(self) -> List[Quad]:
        return self.radii.r_sq

    def T(self, m: int) -> ComposedMap:
        return self.twists[m].T

    def M(self, m: int) -> Region:
        return self.twists[m].M

    def delta(self, m: int) -> Region:
        return self.twists[m].delta

    @property
    def f(self) -> TorusGenerator:
        return self.gens["f"]

    @property
    def g(self) -> TorusGenerator:
        return self.gens["g"]

    def constants(self) -> dict:
        return {
            "n_max": self.n_max,
            "levels": [0, self.n_max],
            "bands": {
                str(n): {"l-": rat_to_str(l_minus(n)), "r-": rat_to_str(r_minus(n)),
                         "l+": rat_to_str(l_plus(n)), "r+": rat_to_str(r_plus(n))}
                for n in range(1, self.n_max + 1)
            },
            "Q_counts": {str(n): len(self.Q[n]) for n in range(1, self.n_max + 1)},
            "Q_tilde_counts": {str(n): len(self.Q_tilde[n]) for n in range(1, self.n_max + 1)},
            "radius_exponents": self.radii.exponents,
            "r_sq": [r.to_dict() for r in self.r_sq],
            "boundary_centers": {str(n): [p.to_dict() for p in pts]
                                 for n, pts in sorted(self.radii.boundary_centers.items()) if pts},
        }


def build_family_B(n_max: int, radius_cap: int = 64) -> FamilyBData:
    if n_max < 1:
        raise BadParams("n_max must be at least 1")
    twists = {m: build_linked_twist(family_b_spec(m)) for m in range(n_max + 1)}
    q_masks, qt_masks = grid_masks(n_max)
    Q = {n: mask_points(q_masks[n]) for n in range(1, n_max + 1)}
    Q_tilde = {n: mask_points(qt_masks[n]) for n in range(1, n_max + 1)}
    radii = choose_radii(qt_masks, n_max, radius_cap)
    r_sq = radii.r_sq
    U: Dict[int, Region] = {0: EMPTY}
    for n in range(1, n_max + 1):
        U[n] = BallUnion(Q_tilde[n], r_sq[n], closed=True) if Q_tilde[n] else EMPTY
    V = {n: union(*(U[m] for m in range(n + 1))) for n in range(n_max + 1)}
    levels = range(n_max + 1)
    ends = (False, True)
    identity = identity_rule()
    f = TorusGenerator("f", {n: twists[n].T for n in levels}, {n: complement(twists[n].delta) for n in levels},
                       space="torus-level", open_ends=ends, description="(p, n) -> (T_n p, n) off Delta_n")
    g = TorusGenerator("g", {n: identity for n in levels}, {n: complement(V[n]) for n in levels}, level_shift=1,
                       space="torus-level", open_ends=ends, description="(p, n) -> (p, n + 1) off V_n")
    for n in range(1, n_max + 1):
        logger.info("family B level %d: |Q_n| = %d, |Q~_n| = %d", n, len(Q[n]), len(Q_tilde[n]))
    return FamilyBData(n_max, twists, Q, Q_tilde, radii, U, V, GeneratorSet([f, g]), q_masks)


def with_extra_vertical_twist(data: FamilyBData, interval: TwistInterval) -> GeneratorSet:
    """Family B generators with one more vertical twist placed in front of every T_v.

    The added piece wins on its band (pieces are matched in order); it is a
    negative control for isometry certificates.
    """
    piece = _twist_piece(interval, interval.arc, "vertical", "extra")
    rules = {}
    for n in data.levels:
        T = data.T(n)
        T_h, T_v = T.factors
        rules[n] = ComposedMap([T_h, PiecewiseAffine((piece,) + T_v.pieces, T_v.label)], "T'")
    f = data.f
    mutated = TorusGenerator("f", rules, {n: f.domain_at(n) for n in data.levels}, space=f.space,
                             open_ends=f.open_ends, description="f with an extra vertical twist")
    return GeneratorSet([mutated, data.g])


# -----------------------------
# Cat map, Cantor shift, line translations
# -----------------------------
CAT_MATRIX = ((2, 1), (1, 1))


def build_cat_map() -> GeneratorSet:
    rule = affine_rule(CAT_MATRIX, label="cat")
    return GeneratorSet([TorusGenerator.on_torus("f", rule, description="(x, y) -> (2x + y, x + y)")])


def cat_map_box_system(inner: Tuple[Fraction, Fraction] = (Fraction(1, 4), Fraction(3, 4)),
                       outer: Tuple[Fraction, Fraction] = (Fraction(1, 8), Fraction(7, 8))) -> CompactGenSystem:
    """F = {cat map on an open box}, F~ = {cat map on a larger open box}."""
    rule = affine_rule(CAT_MATRIX, label="cat")
    inner_box = Box.open(inner[0], inner[1], inner[0], inner[1])
    outer_box = Box.open(outer[0], outer[1], outer[0], outer[1])
    f = TorusGenerator.on_torus("f", rule, inner_box)
    f_ext = TorusGenerator.on_torus("f+", rule, outer_box, extension_of="f")
    return CompactGenSystem(inner_box, GeneratorSet([f]), GeneratorSet([f_ext]), {"f": "f+"}, "cat-map boxed")


def cat_map_total_system() -> CompactGenSystem:
    gens = build_cat_map()
    return CompactGenSystem(FULL, gens, gens, {"f": "f"}, "cat-map total")


def build_cantor() -> GeneratorSet:
    return GeneratorSet([
        SequenceShiftGenerator("f", description="(n, a) -> (n, shift a) when shift a is not in U_(n+2)"),
        CantorLevelGenerator("g", description="(n, a) -> (n + 1, a) when a is in U_(n+1)"),
    ])


def cantor_orbit_oracle(alpha: BiSeq, max_level: int, window: int = 16) -> Set[CantorPoint]:
    """{(m, b) : b in the shift orbit of alpha, b in U_m, m <= max_level}.

    For a periodic alpha the shift orbit is finite and the set is exact; otherwise
    only the shifts by at most ``window`` are listed.
    """
    out: Set[CantorPoint] = set()
    for beta in alpha.orbit_representatives(window):
        top = beta.zero_radius()
        top = max_level if top is None else min(top, max_level)
        for m in range(top + 1):
            out.add(CantorPoint(m, beta))
    return out


def build_line(step=1) -> GeneratorSet:
    step = rat(step)
    if step == 0:
        raise BadParams("translation length must be nonzero")
    return GeneratorSet([TranslationGenerator("t", step, description=f"t -> t + {step}")])


# -----------------------------
# Registry
# -----------------------------
@dataclass
class BuiltSystem:
    """A named generator set with whatever a probe needs to know about it."""

    name: str
    params: Dict[str, object]
    generators: GeneratorSet
    data: object = None
    target: Optional[Region] = None
    compact: Optional[CompactGenSystem] = None

    @property
    def space(self) -> str:
        return self.generators.space

    def constants(self) -> dict:
        if hasattr(self.data, "constants"):
            return self.data.constants()
        if self.name == "cat-map":
            return {"matrix": matrix_to_list(tuple(tuple(Fraction(v) for v in row) for row in CAT_MATRIX)),
                    "det": 1}
        if self.name == "line":
            return {"steps": [rat_to_str(g.step) for g in self.generators]}
        return {}

    def manifest(self) -> dict:
        out = {
            "name": self.name,
            "params": {k: (rat_to_str(v) if isinstance(v, Fraction) else v) for k, v in sorted(self.params.items())},
            "space": self.space,
            "generators": self.generators.describe(),
            "constants": self.constants(),
        }
        if self.compact is not None:
            out["compact_generation"] = {
                "F": self.compact.F.ids,
                "F~": self.compact.Ftilde.ids,
                "sigma_sq": sigma_of_system(self.compact).to_dict(),
            }
        return out


SYSTEM_NAMES = ("linked-twist", "family-a", "family-b", "cat-map", "cantor", "line")


def _int_param(params: dict, key: str, default: int, low: int = 0) -> int:
    try:
        value = int(params.get(key, default))
    except (TypeError, ValueError):
        raise BadParams(f"{key} must be an integer") from None
    if value < low:
        raise BadParams(f"{key} must be >= {low}")
    return value


def build_system(name: str, **params) -> BuiltSystem:
    """Build a system by name; ``params`` are the CLI/HTTP parameters for it."""
    if name == "linked-twist":
        h = tuple(parse_twist_interval(t) for t in _as_list(params.get("h")))
        v = tuple(parse_twist_interval(t) for t in _as_list(params.get("v")))
        system = build_linked_twist(LinkedTwistSpec(h, v))
        return BuiltSystem(name, {"h": [str(t) for t in _as_list(params.get("h"))],
                                  "v": [str(t) for t in _as_list(params.get("v"))]},
                           GeneratorSet([system.generator()]), system, target=system.M)
    if name == "family-a":
        m_max = _int_param(params, "m_max", 4)
        data = build_family_A(m_max)
        return BuiltSystem(name, {"m_max": m_max}, data.gens, data, compact=data.restricted)
    if name == "family-b":
        n_max = _int_param(params, "n_max", 4, low=1)
        radius_cap = _int_param(params, "radius_cap", 64, low=1)
        data = build_family_B(n_max, radius_cap)
        return BuiltSystem(name, {"n_max": n_max}, data.gens, data)
    if name == "cat-map":
        return BuiltSystem(name, {}, build_cat_map(), target=FULL, compact=cat_map_box_system())
    if name == "cantor":
        return BuiltSystem(name, {}, build_cantor())
    if name == "line":
        step = rat(str(params.get("step", 1)))
        return BuiltSystem(name, {"step": step}, build_line(step))
    raise UnknownSystem(f"unknown system {name!r}; expected one of {', '.join(SYSTEM_NAMES)}")


def _as_list(value) -> List[str]:
    if value is None:
        return []
    if isinstance(value, str):
        return [value]
    return list(value)


def level_slice(system: BuiltSystem, level: int) -> BuiltSystem:
    """The single linked twist a level-indexed family uses at ``level``, as a torus system."""
    data = system.data
    if not isinstance(data, (FamilyAData, FamilyBData)):
        raise BadParams(f"{system.name} has no levels")
    if level not in data.levels:
        raise BadParams(f"level {level} is outside the built range {data.levels.start}..{data.levels.stop - 1}")
    twist = data.twists[abs(level)]
    return BuiltSystem(f"{system.name}[{level}]", dict(system.params, level=level),
                       GeneratorSet([twist.generator("T")]), twist, target=twist.M)

