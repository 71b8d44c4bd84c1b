"""
Region algebra on torus levels (plus the small interval and cylinder sets
used by the line and Cantor spaces).

Every region answers exact membership. Torus regions also answer two
distance questions with exact rational or Q(sqrt 2) values:

* ``sq_dist_to(p)``: squared distance from p to the region,
* ``sq_dist_to_complement(p)``: squared distance from p to its complement.

Both are exact for any boolean tree of boxes and axis bands (the answer is
read off the cell grid cut out by their edges), for single strips, and for
unions and complements of balls up to a 2**-BOUND_BITS enclosure of the
square roots. Trees outside that class raise ``UnsupportedRegion``.

``lower_sq_dist_to`` and ``lower_sq_dist_to_complement`` accept every tree
and return certified lower bounds; ``ball_relation`` works from those, so a
bound that is too small can only turn ``inside`` into ``straddles``.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .exact import (
    QUAD_INF,
    QUAD_ZERO,
    Quad,
    TorusPoint,
    ball_test,
    circle_gap,
    mod_one,
    quad_cmp,
    rat,
    rat_to_str,
    sq_dist,
    sq_dist_float,
)
from .exceptions import UnsupportedRegion

logger = logging.getLogger(__name__)

Matrix = Tuple[Tuple[int, int], Tuple[int, int]]
Offset = Tuple[Fraction, Fraction]


@dataclass(frozen=True)
class Arc:
    """A circular interval of R/Z starting at ``lo`` and ending at ``hi``.

    ``wraps`` is set when the arc passes through 0. A zero-length closed arc
    is a single point (used for boundary circles).
    """

    lo: Fraction
    hi: Fraction
    lo_closed: bool = True
    hi_closed: bool = True
    wraps: bool = False

    def __post_init__(self):
        lo, hi = rat(self.lo), rat(self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if self.wraps:
            if not (0 <= hi <= lo < 1):
                raise ValueError(f"bad wrapping arc [{lo}, {hi}]")
        elif not (0 <= lo <= hi <= 1) or (lo == hi and not (self.lo_closed or self.hi_closed)):
            raise ValueError(f"bad arc [{lo}, {hi}]")

    @classmethod
    def between(cls, lo, hi, lo_closed: bool = True, hi_closed: bool = True) -> "Arc":
        """Arc from ``lo`` to ``hi`` given as real lifts with 0 <= hi - lo <= 1."""
        lo, hi = rat(lo), rat(hi)
        length = hi - lo
        if not (0 <= length <= 1):
            raise ValueError(f"arc length must lie in [0, 1], got {length}")
        start = mod_one(lo)
        end = start + length
        if end <= 1:
            return cls(start, end, lo_closed, hi_closed, False)
        return cls(start, end - 1, lo_closed, hi_closed, True)

    @classmethod
    def point(cls, t) -> "Arc":
        t = mod_one(t)
        return cls(t, t, True, True, False)

    @property
    def length(self) -> Fraction:
        return self.hi - self.lo + (1 if self.wraps else 0)

    def _offset(self, t: Fraction) -> Fraction:
        return mod_one(t - self.lo)

    def contains(self, t) -> bool:
        u = self._offset(t)
        length = self.length
        if 0 < u < length:
            return True
        if u == 0:
            return self.lo_closed or (length == 0 and self.hi_closed) or (length == 1 and self.hi_closed)
        return u == length and self.hi_closed

    def contains_batch(self, t: np.ndarray) -> np.ndarray:
        u = (np.asarray(t, dtype=float) - float(self.lo)) % 1.0
        length = float(self.length)
        inside = (u > 0) & (u < length)
        if self.lo_closed:
            inside |= u == 0
        if self.hi_closed:
            inside |= u == length
        return inside

    def margin(self, t) -> Fraction:
        """Circular distance from t to the complement (0 outside the arc)."""
        if not self.contains(t):
            return Fraction(0)
        u = self._offset(t)
        return min(u, self.length - u)

    def gap(self, t) -> Fraction:
        """Circular distance from t to the arc."""
        u = self._offset(t)
        length = self.length
        if u <= length:
            return Fraction(0)
        return min(u - length, 1 - u)

    def complement(self) -> "Arc":
        return Arc.between(self.lo + self.length, self.lo + 1, not self.hi_closed, not self.lo_closed)

    def interior_overlaps(self, other: "Arc") -> bool:
        """True when the open arcs meet (sharing an endpoint is allowed)."""
        if self.length == 0 or other.length == 0:
            return False
        u = mod_one(other.lo - self.lo)
        v = mod_one(self.lo - other.lo)
        return u == 0 or u < self.length or v < other.length

    def endpoints(self) -> Tuple[Fraction, Fraction]:
        return self.lo, mod_one(self.lo + self.length)

    def to_dict(self) -> dict:
        return {
            "lo": rat_to_str(self.lo),
            "hi": rat_to_str(self.hi),
            "lo_closed": self.lo_closed,
            "hi_closed": self.hi_closed,
            "wraps": self.wraps,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Arc":
        return cls(rat(data["lo"]), rat(data["hi"]), data["lo_closed"], data["hi_closed"], data["wraps"])


def parse_arc(text: str) -> Arc:
    """Parse interval notation such as ``[1/4,3/4]``, ``(0,1/8]`` or ``0:3/2``."""
    text = text.strip()
    lo_closed = text.startswith("[")
    hi_closed = text.endswith("]")
    body = text.strip("[]()")
    sep = "," if "," in body else ":"
    lo, hi = (part.strip() for part in body.split(sep))
    return Arc.between(rat(lo), rat(hi), lo_closed, hi_closed)


class Region(ABC):
    """A subset of a torus level with exact membership."""

    kind = "region"

    @abstractmethod
    def contains(self, p) -> bool:
        ...

    def contains_batch(self, x, y, level=None) -> np.ndarray:
        raise UnsupportedRegion(f"{self.kind} has no float membership")

    def sq_dist_to(self, p) -> Quad:
        raise UnsupportedRegion(f"no distance bound for {self.kind}")

    def sq_dist_to_complement(self, p) -> Quad:
        raise UnsupportedRegion(f"no distance bound for {self.kind}")

    def lower_sq_dist_to(self, p) -> Quad:
        return self.sq_dist_to(p)

    def lower_sq_dist_to_complement(self, p) -> Quad:
        return self.sq_dist_to_complement(p)

    def preimage(self, matrix: Matrix, offset: Offset) -> "Region":
        """Preimage under p -> matrix*p + offset (integer matrix)."""
        raise UnsupportedRegion(f"affine preimage of {self.kind} is not supported")

    @abstractmethod
    def to_dict(self) -> dict:
        ...

    def __and__(self, other):
        return intersection(self, other)

    def __or__(self, other):
        return union(self, other)

    def __invert__(self):
        return complement(self)


class _Full(Region):
    kind = "full"

    def contains(self, p) -> bool:
        return True

    def contains_batch(self, x, y, level=None):
        return np.ones(np.shape(x), dtype=bool)

    def sq_dist_to(self, p):
        return QUAD_ZERO

    def sq_dist_to_complement(self, p):
        return QUAD_INF

    def preimage(self, matrix, offset):
        return self

    def to_dict(self):
        return {"kind": self.kind}

    def __repr__(self):
        return "FULL"


class _Empty(Region):
    kind = "empty"

    def contains(self, p) -> bool:
        return False

    def contains_batch(self, x, y, level=None):
        return np.zeros(np.shape(x), dtype=bool)

    def sq_dist_to(self, p):
        return QUAD_INF

    def sq_dist_to_complement(self, p):
        return QUAD_ZERO

    def preimage(self, matrix, offset):
        return self

    def to_dict(self):
        return {"kind": self.kind}

    def __repr__(self):
        return "EMPTY"


FULL = _Full()
EMPTY = _Empty()


def _is_integer_matrix(matrix) -> bool:
    return all(Fraction(v).denominator == 1 for row in matrix for v in row)


class Strip(Region):
    """Points whose coordinate a*x + b*y + c (mod 1) lies in an arc.

    ``normal`` is an integer vector, so the set is well defined on the torus.
    Horizontal and vertical bands are the strips with normals (0,1) and (1,0);
    preimages of bands under integer affine maps are slanted strips.
    """

    kind = "strip"

    def __init__(self, normal: Tuple[int, int], shift, arc: Arc):
        a, b = (int(v) for v in normal)
        if a == 0 and b == 0:
            raise ValueError("strip normal must be nonzero")
        self.normal = (a, b)
        self.shift = mod_one(shift)
        self.arc = arc
        self._norm_sq = a * a + b * b

    def coordinate(self, p) -> Fraction:
        a, b = self.normal
        return mod_one(a * p.x + b * p.y + self.shift)

    def contains(self, p) -> bool:
        return self.arc.contains(self.coordinate(p))

    def contains_batch(self, x, y, level=None):
        a, b = self.normal
        t = a * np.asarray(x, dtype=float) + b * np.asarray(y, dtype=float) + float(self.shift)
        return self.arc.contains_batch(t)

    def sq_dist_to(self, p) -> Quad:
        g = self.arc.gap(self.coordinate(p))
        return Quad(g * g / self._norm_sq)

    def sq_dist_to_complement(self, p) -> Quad:
        m = self.arc.margin(self.coordinate(p))
        return Quad(m * m / self._norm_sq)

    def preimage(self, matrix, offset):
        if not _is_integer_matrix(matrix):
            raise UnsupportedRegion("strip preimage needs an integer linear part")
        a, b = self.normal
        (m00, m01), (m10, m11) = matrix
        normal = (a * m00 + b * m10, a * m01 + b * m11)
        shift = a * Fraction(offset[0]) + b * Fraction(offset[1]) + self.shift
        return Strip(normal, shift, self.arc)

    def complement(self) -> "Strip":
        return Strip(self.normal, self.shift, self.arc.complement())

    def to_dict(self):
        return {
            "kind": self.kind,
            "normal": list(self.normal),
            "shift": rat_to_str(self.shift),
            "arc": self.arc.to_dict(),
        }

    def __repr__(self):
        return f"Strip({self.normal}, {self.shift}, {self.arc})"


class Band(Strip):
    """Horizontal band {y in arc} or vertical band {x in arc}."""

    kind = "band"

    def __init__(self, axis: str, arc: Arc):
        if axis not in ("horizontal", "vertical"):
            raise ValueError(f"unknown band axis {axis!r}")
        super().__init__((0, 1) if axis == "horizontal" else (1, 0), 0, arc)
        self.axis = axis

    def coordinate(self, p) -> Fraction:
        return p.y if self.axis == "horizontal" else p.x

    def complement(self) -> "Band":
        return Band(self.axis, self.arc.complement())

    def to_dict(self):
        return {"kind": self.kind, "axis": self.axis, "arc": self.arc.to_dict()}

    def __repr__(self):
        return f"Band({self.axis}, {self.arc})"


def horizontal_band(lo, hi, closed: bool = True) -> Band:
    return Band("horizontal", Arc.between(lo, hi, closed, closed))


def vertical_band(lo, hi, closed: bool = True) -> Band:
    return Band("vertical", Arc.between(lo, hi, closed, closed))


class Box(Region):
    """Product of an x-arc and a y-arc."""

    kind = "box"

    def __init__(self, x_arc: Arc, y_arc: Arc):
        self.x_arc = x_arc
        self.y_arc = y_arc

    @classmethod
    def open(cls, x_lo, x_hi, y_lo, y_hi) -> "Box":
        return cls(Arc.between(x_lo, x_hi, False, False), Arc.between(y_lo, y_hi, False, False))

    @classmethod
    def around(cls, center: TorusPoint, half_width) -> "Box":
        h = rat(half_width)
        return cls.open(center.x - h, center.x + h, center.y - h, center.y + h)

    def contains(self, p) -> bool:
        return self.x_arc.contains(p.x) and self.y_arc.contains(p.y)

    def contains_batch(self, x, y, level=None):
        return self.x_arc.contains_batch(x) & self.y_arc.contains_batch(y)

    def sq_dist_to(self, p) -> Quad:
        gx, gy = self.x_arc.gap(p.x), self.y_arc.gap(p.y)
        return Quad(gx * gx + gy * gy)

    def sq_dist_to_complement(self, p) -> Quad:
        m = min(self.x_arc.margin(p.x), self.y_arc.margin(p.y))
        return Quad(m * m)

    def preimage(self, matrix, offset):
        return intersection(Band("vertical", self.x_arc).preimage(matrix, offset),
                            Band("horizontal", self.y_arc).preimage(matrix, offset))

    def to_dict(self):
        return {"kind": self.kind, "x": self.x_arc.to_dict(), "y": self.y_arc.to_dict()}

    def __repr__(self):
        return f"Box({self.x_arc}, {self.y_arc})"


def _ball_gap(d_sq: Fraction, r_sq: Quad, outside: bool) -> Quad:
    """Lower bound of (sqrt d_sq - sqrt r_sq)^2 on the given side of the sphere."""
    if d_sq == 0 and not outside:
        return r_sq
    if r_sq.is_rational and d_sq == r_sq.a:
        return QUAD_ZERO
    r_lo, r_hi = r_sq.sqrt_bounds()
    d_lo, d_hi = Quad(d_sq).sqrt_bounds()
    gap = (d_lo - r_hi) if outside else (r_lo - d_hi)
    if gap <= 0:
        return QUAD_ZERO
    return Quad(gap * gap)


class Ball(Region):
    """Metric ball on the torus with a squared radius in Q(sqrt 2)."""

    kind = "ball"

    def __init__(self, center: TorusPoint, r_sq, closed: bool = False):
        r_sq = Quad.of(r_sq)
        if r_sq.sign() <= 0:
            raise ValueError("ball radius must be positive")
        self.center = center
        self.r_sq = r_sq
        self.closed = closed
        self._r_float = float(r_sq)

    def contains(self, p) -> bool:
        return ball_test(_torus(p), self.center, self.r_sq, self.closed)

    def contains_batch(self, x, y, level=None):
        d = sq_dist_float(x, y, float(self.center.x), float(self.center.y))
        return d <= self._r_float if self.closed else d < self._r_float

    def sq_dist_to(self, p) -> Quad:
        if self.contains(p):
            return QUAD_ZERO
        return _ball_gap(sq_dist(_torus(p), self.center), self.r_sq, outside=True)

    def sq_dist_to_complement(self, p) -> Quad:
        if not self.contains(p):
            return QUAD_ZERO
        return _ball_gap(sq_dist(_torus(p), self.center), self.r_sq, outside=False)

    def to_dict(self):
        return {
            "kind": self.kind,
            "center": self.center.to_dict(),
            "r_sq": self.r_sq.to_dict(),
            "closed": self.closed,
        }

    def __repr__(self):
        return f"Ball({self.center}, r^2={self.r_sq!r}, closed={self.closed})"


def _torus(p) -> TorusPoint:
    return p if isinstance(p, TorusPoint) else p.point


class Union(Region):
    kind = "union"

    def __init__(self, members: Sequence[Region]):
        self.members = tuple(members)

    def contains(self, p) -> bool:
        return any(m.contains(p) for m in self.members)

    def contains_batch(self, x, y, level=None):
        out = np.zeros(np.shape(x), dtype=bool)
        for m in self.members:
            out |= m.contains_batch(x, y, level)
        return out

    def sq_dist_to(self, p) -> Quad:
        return quad_min_of(m.sq_dist_to(p) for m in self.members)

    def lower_sq_dist_to(self, p) -> Quad:
        return quad_min_of(m.lower_sq_dist_to(p) for m in self.members)

    def sq_dist_to_complement(self, p) -> Quad:
        if not self.contains(p):
            return QUAD_ZERO
        if not is_axis_aligned(self):
            raise UnsupportedRegion("exact margin of a union needs boxes and axis bands")
        return grid_sq_dist(self, p, inside=False)

    def lower_sq_dist_to_complement(self, p) -> Quad:
        if is_axis_aligned(self):
            return self.sq_dist_to_complement(p)
        # the complement of the union lies in the complement of each member
        best = QUAD_ZERO
        for m in self.members:
            if m.contains(p):
                d = m.lower_sq_dist_to_complement(p)
                if quad_cmp(d, best) > 0:
                    best = d
        return best

    def preimage(self, matrix, offset):
        return union(*(m.preimage(matrix, offset) for m in self.members))

    def to_dict(self):
        return {"kind": self.kind, "members": [m.to_dict() for m in self.members]}

    def __repr__(self):
        return f"Union({list(self.members)})"


class BallUnion(Union):
    """Union of equal-radius balls with a bucket index over the centers."""

    def __init__(self, centers: Iterable[TorusPoint], r_sq, closed: bool = True):
        r_sq = Quad.of(r_sq)
        centers = sorted(set(centers))
        super().__init__([Ball(c, r_sq, closed) for c in centers])
        self.r_sq = r_sq
        self.closed = closed
        r = float(r_sq) ** 0.5
        buckets = 1
        while buckets < 1024 and 1.0 / (2 * buckets) >= r:
            buckets *= 2
        self._buckets = buckets
        self._index: Dict[Tuple[int, int], List[Ball]] = {}
        for ball in self.members:
            key = (int(ball.center.x * buckets), int(ball.center.y * buckets))
            self._index.setdefault(key, []).append(ball)
        # flat float index for contains_batch: balls sorted by bucket id
        order = sorted(self.members, key=lambda b: int(b.center.x * buckets) * buckets + int(b.center.y * buckets))
        keys = np.array([int(b.center.x * buckets) * buckets + int(b.center.y * buckets) for b in order], dtype=np.int64)
        self._cx = np.array([float(b.center.x) for b in order])
        self._cy = np.array([float(b.center.y) for b in order])
        cells = np.arange(buckets * buckets)
        self._starts = np.searchsorted(keys, cells, side="left")
        self._counts = np.searchsorted(keys, cells, side="right") - self._starts
        self._max_count = int(self._counts.max()) if len(order) else 0
        self._r_float = float(r_sq)

    def _near(self, p) -> List[Ball]:
        if self._buckets < 4:
            return list(self.members)
        n = self._buckets
        q = _torus(p)
        i, j = int(q.x * n), int(q.y * n)
        found = []
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                found.extend(self._index.get(((i + di) % n, (j + dj) % n), ()))
        return found

    def contains(self, p) -> bool:
        return any(ball.contains(p) for ball in self._near(p))

    def contains_batch(self, x, y, level=None):
        if self._buckets < 4 or not self.members:
            return super().contains_batch(x, y, level)
        n = self._buckets
        x = np.asarray(x, dtype=float) % 1.0
        y = np.asarray(y, dtype=float) % 1.0
        bi = np.floor(x * n).astype(np.int64) % n
        bj = np.floor(y * n).astype(np.int64) % n
        out = np.zeros(x.shape, dtype=bool)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                cell = ((bi + di) % n) * n + (bj + dj) % n
                start, count = self._starts[cell], self._counts[cell]
                for t in range(self._max_count):
                    has = count > t
                    if not has.any():
                        break
                    idx = start[has] + t
                    d = sq_dist_float(x[has], y[has], self._cx[idx], self._cy[idx])
                    out[has] |= (d <= self._r_float) if self.closed else (d < self._r_float)
        return out

    def lower_sq_dist_to_complement(self, p) -> Quad:
        best = QUAD_ZERO
        for ball in self._near(p):
            d = ball.sq_dist_to_complement(p)
            if quad_cmp(d, best) > 0:
                best = d
        return best


class Intersection(Region):
    kind = "intersection"

    def __init__(self, members: Sequence[Region]):
        self.members = tuple(members)

    def contains(self, p) -> bool:
        return all(m.contains(p) for m in self.members)

    def contains_batch(self, x, y, level=None):
        out = np.ones(np.shape(x), dtype=bool)
        for m in self.members:
            out &= m.contains_batch(x, y, level)
        return out

    def sq_dist_to(self, p) -> Quad:
        if self.contains(p):
            return QUAD_ZERO
        if not is_axis_aligned(self):
            raise UnsupportedRegion("exact distance to an intersection needs boxes and axis bands")
        return grid_sq_dist(self, p, inside=True)

    def lower_sq_dist_to(self, p) -> Quad:
        if is_axis_aligned(self):
            return self.sq_dist_to(p)
        best = QUAD_ZERO
        for m in self.members:
            d = m.lower_sq_dist_to(p)
            if quad_cmp(d, best) > 0:
                best = d
        return best

    def sq_dist_to_complement(self, p) -> Quad:
        return quad_min_of(m.sq_dist_to_complement(p) for m in self.members)

    def lower_sq_dist_to_complement(self, p) -> Quad:
        return quad_min_of(m.lower_sq_dist_to_complement(p) for m in self.members)

    def preimage(self, matrix, offset):
        return intersection(*(m.preimage(matrix, offset) for m in self.members))

    def to_dict(self):
        return {"kind": self.kind, "members": [m.to_dict() for m in self.members]}

    def __repr__(self):
        return f"Intersection({list(self.members)})"


class Complement(Region):
    kind = "complement"

    def __init__(self, child: Region):
        self.child = child

    def contains(self, p) -> bool:
        return not self.child.contains(p)

    def contains_batch(self, x, y, level=None):
        return ~self.child.contains_batch(x, y, level)

    def sq_dist_to(self, p) -> Quad:
        return self.child.sq_dist_to_complement(p)

    def sq_dist_to_complement(self, p) -> Quad:
        return self.child.sq_dist_to(p)

    def lower_sq_dist_to(self, p) -> Quad:
        return self.child.lower_sq_dist_to_complement(p)

    def lower_sq_dist_to_complement(self, p) -> Quad:
        return self.child.lower_sq_dist_to(p)

    def preimage(self, matrix, offset):
        return complement(self.child.preimage(matrix, offset))

    def to_dict(self):
        return {"kind": self.kind, "child": self.child.to_dict()}

    def __repr__(self):
        return f"Complement({self.child!r})"


def union(*regions: Region) -> Region:
    members: List[Region] = []
    for r in regions:
        if r is FULL:
            return FULL
        if r is EMPTY:
            continue
        if type(r) is Union:
            members.extend(r.members)
        else:
            members.append(r)
    if not members:
        return EMPTY
    if len(members) == 1:
        return members[0]
    return Union(members)


def intersection(*regions: Region) -> Region:
    members: List[Region] = []
    for r in regions:
        if r is EMPTY:
            return EMPTY
        if r is FULL:
            continue
        if type(r) is Intersection:
            members.extend(r.members)
        else:
            members.append(r)
    if not members:
        return FULL
    if len(members) == 1:
        return members[0]
    return Intersection(members)


def complement(region: Region) -> Region:
    if region is FULL:
        return EMPTY
    if region is EMPTY:
        return FULL
    if isinstance(region, Complement):
        return region.child
    if isinstance(region, Strip):
        return region.complement()
    return Complement(region)


def difference(region: Region, removed: Region) -> Region:
    return intersection(region, complement(region=removed))


# -----------------------------
# Cell grid of axis-aligned trees
# -----------------------------
def is_axis_aligned(region: Region) -> bool:
    """True for boolean trees whose leaves are boxes and horizontal or vertical bands."""
    if region is FULL or region is EMPTY or isinstance(region, (Box, Band)):
        return True
    if isinstance(region, (Union, Intersection)) and not isinstance(region, BallUnion):
        return all(is_axis_aligned(m) for m in region.members)
    if isinstance(region, Complement):
        return is_axis_aligned(region.child)
    return False


def _collect_breaks(region: Region, xs: set, ys: set) -> None:
    if isinstance(region, Box):
        xs.update(region.x_arc.endpoints())
        ys.update(region.y_arc.endpoints())
    elif isinstance(region, Band):
        (xs if region.axis == "vertical" else ys).update(region.arc.endpoints())
    elif isinstance(region, (Union, Intersection)):
        for m in region.members:
            _collect_breaks(m, xs, ys)
    elif isinstance(region, Complement):
        _collect_breaks(region.child, xs, ys)


def axis_cells(breaks) -> List[Tuple[Arc, Fraction]]:
    """Cut R/Z at ``breaks``: every break point and every open arc between
    neighbours, each paired with a representative coordinate."""
    pts = sorted(set(mod_one(b) for b in breaks))
    if not pts:
        return [(Arc(Fraction(0), Fraction(1)), Fraction(0))]
    cells = []
    for i, b in enumerate(pts):
        nxt = pts[i + 1] if i + 1 < len(pts) else pts[0] + 1
        cells.append((Arc.point(b), b))
        cells.append((Arc.between(b, nxt, False, False), mod_one((b + nxt) / 2)))
    return cells


def grid_sq_dist(region: Region, p, inside: bool) -> Quad:
    """Exact squared distance from p to ``region`` (``inside``) or to its complement.

    Membership is constant on every cell of the grid cut by the edges of the
    leaves, so the distance is the smallest distance to the closure of a cell
    on the wanted side.
    """
    q = _torus(p)
    xs: set = set()
    ys: set = set()
    _collect_breaks(region, xs, ys)
    x_cells = sorted(((arc.gap(q.x) ** 2, rep) for arc, rep in axis_cells(xs)), key=lambda c: c[0])
    y_cells = sorted(((arc.gap(q.y) ** 2, rep) for arc, rep in axis_cells(ys)), key=lambda c: c[0])
    best: Optional[Fraction] = None
    for gx, rx in x_cells:
        if best is not None and gx >= best:
            break
        for gy, ry in y_cells:
            d = gx + gy
            if best is not None and d >= best:
                break
            if region.contains(TorusPoint(rx, ry)) == inside:
                best = d
                break
    return QUAD_INF if best is None else Quad(best)


def _exact_root(r_sq: Quad) -> Optional[Fraction]:
    if not r_sq.is_rational:
        return None
    num, den = r_sq.a.numerator, r_sq.a.denominator
    rn, rd = math.isqrt(num), math.isqrt(den)
    if rn * rn == num and rd * rd == den:
        return Fraction(rn, rd)
    return None


def _nearest_on_arc(arc: Arc, t: Fraction) -> Fraction:
    gap = arc.gap(t)
    if gap == 0:
        return t
    lo, end = arc.endpoints()
    return lo if circle_gap(lo, t) == gap else end


def _toward_middle(arc: Arc, t: Fraction) -> Fraction:
    """Signed step from t (a point of the closed arc) to the middle of the arc."""
    if arc.length == 0 or arc.length == 1:
        return Fraction(0)
    return arc.length / 2 - mod_one(t - arc.lo)


def _ball_cell_point(ball: Ball, cx: Arc, cy: Arc) -> Optional[TorusPoint]:
    """A point of the cell cx x cy inside ``ball``, or None when they miss."""
    c = ball.center
    gx, gy = cx.gap(c.x), cy.gap(c.y)
    side = quad_cmp(Quad(gx * gx + gy * gy), ball.r_sq)
    if side > 0:
        return None
    if side == 0:
        if not ball.closed:
            return None
        raise UnsupportedRegion(f"closed ball around {c!r} touches a cell edge")
    nx, ny = _nearest_on_arc(cx, c.x), _nearest_on_arc(cy, c.y)
    dx, dy = _toward_middle(cx, nx), _toward_middle(cy, ny)
    step = Fraction(1)
    for _ in range(128):
        q = TorusPoint(nx + step * dx, ny + step * dy)
        if cx.contains(q.x) and cy.contains(q.y) and ball.contains(q):
            return q
        step /= 2
    raise UnsupportedRegion(f"no point of the cell found inside the ball around {c!r}")


def _lens_point(a: Ball, b: Ball) -> Optional[TorusPoint]:
    """A point of two open or closed balls, or None when they are disjoint."""
    dx = mod_one(b.center.x - a.center.x + Fraction(1, 2)) - Fraction(1, 2)
    dy = mod_one(b.center.y - a.center.y + Fraction(1, 2)) - Fraction(1, 2)
    d_sq = dx * dx + dy * dy
    if d_sq == 0:
        return a.center
    ra, rb = _exact_root(a.r_sq), _exact_root(b.r_sq)
    d_lo, d_hi = Quad(d_sq).sqrt_bounds()
    if ra is not None and rb is not None:
        side = d_sq - (ra + rb) ** 2
        if side > 0 or (side == 0 and not (a.closed and b.closed)):
            return None
        if side == 0:
            raise UnsupportedRegion("closed balls touching at one point")
        ra_lo, rb_lo = ra, rb
    else:
        ra_lo, ra_hi = a.r_sq.sqrt_bounds()
        rb_lo, rb_hi = b.r_sq.sqrt_bounds()
        if d_lo >= ra_hi + rb_hi:
            return None
        if d_hi >= ra_lo + rb_lo:
            raise UnsupportedRegion("ball overlap is too thin to decide")
    # t*|ab| inside a and (1 - t)*|ab| inside b
    t_min = max(Fraction(0), 1 - rb_lo / d_hi)
    t_max = min(Fraction(1), ra_lo / d_hi)
    t = (t_min + t_max) / 2
    q = TorusPoint(a.center.x + t * dx, a.center.y + t * dy)
    if a.contains(q) and b.contains(q):
        return q
    raise UnsupportedRegion("ball overlap is too thin to decide")


def _spread_points(base: TorusPoint, direction: Optional[Tuple[Fraction, Fraction]], count: int, inside,
                   bend: bool = False) -> List[TorusPoint]:
    """``base`` plus ``count`` points on a short segment along ``direction``,
    or on a small parabola through ``base`` when ``bend`` is set.

    A line meets a parabola in at most two points, so at most two of them
    share any line.
    """
    if direction is None:
        return [base]
    u, v = direction
    scale = Fraction(1, 4)
    for _ in range(128):
        pts = [base]
        for k in range(1, count + 1):
            t = scale * Fraction(k, count)
            pts.append(base.shifted(t, t * t / scale) if bend else base.shifted(t * u, t * v))
        if all(inside(p) for p in pts):
            return pts
        scale /= 2
    raise UnsupportedRegion(f"no room for sample points around {base!r}")


def is_linear(region: Region) -> bool:
    """True for boolean trees whose leaves are boxes and strips of any integer normal."""
    if region is FULL or region is EMPTY or isinstance(region, (Box, Strip)):
        return True
    if isinstance(region, (Union, Intersection)) and not isinstance(region, BallUnion):
        return all(is_linear(m) for m in region.members)
    if isinstance(region, Complement):
        return is_linear(region.child)
    return False


def _collect_lines(region: Region, lines: set) -> None:
    """Edges of the leaves as triples (a, b, c), the torus lines a*x + b*y = c (mod 1)."""
    if isinstance(region, Box):
        lines.update((1, 0, mod_one(e)) for e in region.x_arc.endpoints())
        lines.update((0, 1, mod_one(e)) for e in region.y_arc.endpoints())
    elif isinstance(region, Strip):
        a, b = region.normal
        lines.update((a, b, mod_one(e - region.shift)) for e in region.arc.endpoints())
    elif isinstance(region, (Union, Intersection)):
        for m in region.members:
            _collect_lines(m, lines)
    elif isinstance(region, Complement):
        _collect_lines(region.child, lines)


def _x_cuts(lines) -> set:
    """x-coordinates of every vertical line and every crossing of two lines."""
    cuts = set()
    for a, b, c in lines:
        if b == 0:
            cuts.update(mod_one(Fraction(c + k, a)) for k in range(abs(a)))
    for (a1, b1, c1), (a2, b2, c2) in combinations(lines, 2):
        det = a1 * b2 - a2 * b1
        if det:
            base = b2 * c1 - b1 * c2
            cuts.update(mod_one((base + j) / det) for j in range(abs(det)))
    return cuts


def _y_breaks(lines, x: Fraction) -> set:
    """Where the non-vertical lines cross the vertical line through x."""
    out = set()
    for a, b, c in lines:
        if b:
            out.update(mod_one((c - a * x + k) / b) for k in range(abs(b)))
    return out


def _line_direction(lines, p: TorusPoint) -> Tuple[Fraction, Fraction]:
    for a, b, c in lines:
        if b and mod_one(a * p.x + b * p.y - c) == 0:
            size = max(abs(a), abs(b))
            return Fraction(b, size), Fraction(-a, size)
    raise UnsupportedRegion(f"no edge through {p!r}")


def overlap_points(region: Region, count: int, extra_x=(), extra_y=()) -> Iterator[TorusPoint]:
    """Sample points of ``region``, face by face, ``count`` + 1 per face.

    ``region`` is an intersection of a tree of boxes and strips with at most
    one ball (or with two balls and nothing else); a ball needs the tree to be
    axis-aligned. Faces come from the arrangement of the leaf edges plus the
    ``extra_x`` / ``extra_y`` cuts: the torus is cut into vertical slabs at
    every crossing, and inside a slab the edges no longer cross, so each face
    meets the middle line of its slab. No points means the region is empty.
    Open faces come first.
    """
    members = list(region.members) if isinstance(region, Intersection) else [region]
    balls = [m for m in members if isinstance(m, Ball)]
    rest = intersection(*(m for m in members if not isinstance(m, Ball)))
    if rest is EMPTY:
        return
    if not is_linear(rest):
        raise UnsupportedRegion(f"cannot decide a {rest.kind} overlap exactly")
    lines = {(1, 0, mod_one(e)) for e in extra_x} | {(0, 1, mod_one(e)) for e in extra_y}
    _collect_lines(rest, lines)
    if len(balls) > 2 or (len(balls) == 2 and lines):
        raise UnsupportedRegion("overlap of several balls with other regions")
    if len(balls) == 2:
        base = _lens_point(balls[0], balls[1])
        if base is not None:
            yield from _spread_points(base, (Fraction(1), Fraction(0)), count, region.contains, bend=True)
        return
    aligned = all(a == 0 or b == 0 for a, b, _ in lines)
    if balls and not aligned:
        raise UnsupportedRegion("ball overlap with a slanted strip")
    anchor_cells = axis_cells(extra_y)
    cells = [(cx, rx, cy, ry) for cx, rx in axis_cells(_x_cuts(lines)) for cy, ry in axis_cells(_y_breaks(lines, rx))]
    cells.sort(key=lambda c: (c[0].length == 0) + (c[2].length == 0))
    for cx, rx, cy, ry in cells:
        if not rest.contains(TorusPoint(rx, ry)):
            continue
        base = _ball_cell_point(balls[0], cx, cy) if balls else TorusPoint(rx, ry)
        if base is None:
            continue
        # off the axis grid a y-cell only holds at rx; keep to the anchor rows instead
        guard = cy if aligned else next(arc for arc, _ in anchor_cells if arc.contains(base.y))

        def inside(p, cx=cx, guard=guard):
            return cx.contains(p.x) and guard.contains(p.y) and region.contains(p)

        if cx.length > 0 and cy.length > 0:
            yield from _spread_points(base, (Fraction(1), Fraction(0)), count, inside, bend=True)
        elif cx.length > 0:
            direction = (Fraction(1), Fraction(0)) if aligned else _line_direction(lines, base)
            yield from _spread_points(base, direction, count, inside)
        elif cy.length > 0:
            yield from _spread_points(base, (Fraction(0), Fraction(1)), count, inside)
        else:
            yield base


class LevelRegion(Region):
    """A region per level of a torus-level space; missing levels use ``default``."""

    kind = "levels"

    def __init__(self, by_level: Dict[int, Region], default: Region = EMPTY):
        self.by_level = dict(by_level)
        self.default = default

    def at(self, level: int) -> Region:
        return self.by_level.get(level, self.default)

    def contains(self, p) -> bool:
        return self.at(p.level).contains(p)

    def contains_batch(self, x, y, level=None):
        if level is None:
            raise UnsupportedRegion("level region needs level values")
        level = np.asarray(level)
        out = np.zeros(np.shape(x), dtype=bool)
        for lv in np.unique(level):
            mask = level == lv
            out[mask] = self.at(int(lv)).contains_batch(np.asarray(x)[mask], np.asarray(y)[mask])
        return out

    def sq_dist_to(self, p):
        return self.at(p.level).sq_dist_to(p)

    def sq_dist_to_complement(self, p):
        return self.at(p.level).sq_dist_to_complement(p)

    def lower_sq_dist_to(self, p):
        return self.at(p.level).lower_sq_dist_to(p)

    def lower_sq_dist_to_complement(self, p):
        return self.at(p.level).lower_sq_dist_to_complement(p)

    def to_dict(self):
        return {
            "kind": self.kind,
            "levels": {str(k): v.to_dict() for k, v in sorted(self.by_level.items())},
            "default": self.default.to_dict(),
        }


def region_at(region, level: int) -> Region:
    """The torus region a (possibly per-level) region uses at ``level``."""
    if isinstance(region, LevelRegion):
        return region.at(level)
    return region


# -----------------------------
# Line and Cantor sets
# -----------------------------
@dataclass(frozen=True)
class Interval:
    lo: Fraction
    hi: Fraction
    lo_closed: bool = False
    hi_closed: bool = False

    def contains(self, t) -> bool:
        t = rat(getattr(t, "t", t))
        above = t > self.lo or (self.lo_closed and t == self.lo)
        below = t < self.hi or (self.hi_closed and t == self.hi)
        return above and below

    def to_dict(self):
        return {"lo": rat_to_str(self.lo), "hi": rat_to_str(self.hi),
                "lo_closed": self.lo_closed, "hi_closed": self.hi_closed}


class IntervalSet(Region):
    """Finite union of intervals of the real line."""

    kind = "intervals"

    def __init__(self, intervals: Sequence[Interval]):
        self.intervals = tuple(intervals)

    @classmethod
    def parse(cls, text: str) -> "IntervalSet":
        """``"0:3/2"`` is the open interval (0, 3/2); bracket notation sets closedness."""
        parts = []
        for chunk in text.split(";"):
            chunk = chunk.strip()
            lo_closed, hi_closed = chunk.startswith("["), chunk.endswith("]")
            body = chunk.strip("[]()")
            sep = "," if "," in body else ":"
            lo, hi = (rat(v.strip()) for v in body.split(sep))
            if hi < lo:
                raise ValueError(f"empty interval {chunk!r}")
            parts.append(Interval(lo, hi, lo_closed, hi_closed))
        return cls(parts)

    def contains(self, p) -> bool:
        return any(i.contains(p) for i in self.intervals)

    def contains_batch(self, x, y=None, level=None):
        t = np.asarray(x, dtype=float)
        out = np.zeros(t.shape, dtype=bool)
        for i in self.intervals:
            lo, hi = float(i.lo), float(i.hi)
            above = (t >= lo) if i.lo_closed else (t > lo)
            below = (t <= hi) if i.hi_closed else (t < hi)
            out |= above & below
        return out

    def sq_dist_to(self, p) -> Quad:
        t = rat(getattr(p, "t", p))
        if self.contains(t):
            return QUAD_ZERO
        gaps = [max(i.lo - t, t - i.hi, Fraction(0)) for i in self.intervals]
        g = min(gaps) if gaps else None
        return QUAD_INF if g is None else Quad(g * g)

    def sq_dist_to_complement(self, p) -> Quad:
        t = rat(getattr(p, "t", p))
        best = Fraction(0)
        for i in self.intervals:
            if i.contains(t):
                best = max(best, min(t - i.lo, i.hi - t))
        return Quad(best * best)

    def bounds(self) -> Tuple[Fraction, Fraction]:
        return min(i.lo for i in self.intervals), max(i.hi for i in self.intervals)

    def to_dict(self):
        return {"kind": self.kind, "intervals": [i.to_dict() for i in self.intervals]}


class Cylinder(Region):
    """Cantor points at ``level`` whose sequence reads ``word`` from index ``start``."""

    kind = "cylinder"

    def __init__(self, level: int, start: int, word: Sequence[int]):
        self.level = level
        self.start = start
        self.word = tuple(int(b) for b in word)

    def contains(self, p) -> bool:
        if p.level != self.level:
            return False
        return all(p.seq.at(self.start + i) == bit for i, bit in enumerate(self.word))

    def to_dict(self):
        return {"kind": self.kind, "level": self.level, "start": self.start,
                "word": "".join(map(str, self.word))}


# -----------------------------
# Balls against regions
# -----------------------------
INSIDE, OUTSIDE, STRADDLES = "inside", "outside", "straddles"


def ball_relation(region: Region, center, r_sq) -> str:
    """Where the open ball B(center, sqrt r_sq) sits relative to ``region``.

    Only ``inside`` and ``outside`` are certified; ``straddles`` means the
    distance bounds could not separate the ball from the boundary.
    """
    r_sq = Quad.of(r_sq)
    if region.contains(center):
        d = region.lower_sq_dist_to_complement(center)
        return INSIDE if quad_cmp(d, r_sq) >= 0 else STRADDLES
    d = region.lower_sq_dist_to(center)
    return OUTSIDE if quad_cmp(d, r_sq) >= 0 else STRADDLES


def _arc_margin(inner: Arc, outer: Arc, delta: Fraction) -> Fraction:
    # inner arc read in the outer coordinate, which is the inner one plus delta
    u0 = mod_one(inner.lo + delta - outer.lo)
    u1 = u0 + inner.length
    if u1 > outer.length:
        return Fraction(0)
    return min(u0, outer.length - u1)


def _strip_constraints(region: Region) -> Optional[List[Strip]]:
    if isinstance(region, Strip):
        return [region]
    if isinstance(region, Box):
        return [Band("vertical", region.x_arc), Band("horizontal", region.y_arc)]
    if isinstance(region, Intersection):
        out = []
        for m in region.members:
            sub = _strip_constraints(m)
            if sub is None:
                return None
            out.extend(sub)
        return out
    return None


def _radius_bounds(r_sq: Quad) -> Tuple[Fraction, Fraction]:
    return r_sq.sqrt_bounds()


def containment_margin_sq(inner: Region, outer: Region) -> Quad:
    """Lower bound for inf over u in ``inner`` of the squared distance from u to
    the complement of ``outer``; zero when ``inner`` is not inside ``outer``.

    Supported: unions of boxes, bands and strips inside intersections of
    them, and balls or ball complements nested in each other.
    """
    if outer is FULL or inner is EMPTY:
        return QUAD_INF
    if inner is FULL or outer is EMPTY:
        return QUAD_ZERO
    if isinstance(inner, Union):
        return quad_min_of(containment_margin_sq(m, outer) for m in inner.members)
    if isinstance(outer, Intersection):
        return quad_min_of(containment_margin_sq(inner, m) for m in outer.members)
    if isinstance(outer, Box):
        return containment_margin_sq(inner, intersection(Band("vertical", outer.x_arc),
                                                         Band("horizontal", outer.y_arc)))
    if isinstance(outer, Union):
        best = QUAD_ZERO
        for m in outer.members:
            d = containment_margin_sq(inner, m)
            if quad_cmp(d, best) > 0:
                best = d
        return best
    if isinstance(outer, Strip):
        constraints = _strip_constraints(inner)
        if constraints is None:
            raise UnsupportedRegion(f"margin of {inner.kind} inside a strip")
        best = None
        for c in constraints:
            if c.normal == outer.normal:
                m = _arc_margin(c.arc, outer.arc, outer.shift - c.shift)
                if best is None or m > best:
                    best = m
        if best is None:
            if len(constraints) == 1:
                return QUAD_ZERO
            raise UnsupportedRegion("strip constraints with unmatched normals")
        return Quad(best * best / outer._norm_sq)
    if isinstance(outer, Ball) and isinstance(inner, Ball):
        d_hi = Quad(sq_dist(inner.center, outer.center)).sqrt_bounds()[1]
        gap = _radius_bounds(outer.r_sq)[0] - _radius_bounds(inner.r_sq)[1] - d_hi
        return Quad(gap * gap) if gap > 0 else QUAD_ZERO
    if isinstance(outer, Complement) and isinstance(outer.child, Union):
        return quad_min_of(containment_margin_sq(inner, Complement(m)) for m in outer.child.members)
    if isinstance(outer, Complement) and isinstance(outer.child, Ball):
        removed = outer.child
        if isinstance(inner, Complement) and isinstance(inner.child, Ball):
            d_hi = Quad(sq_dist(inner.child.center, removed.center)).sqrt_bounds()[1]
            gap = _radius_bounds(inner.child.r_sq)[0] - _radius_bounds(removed.r_sq)[1] - d_hi
            return Quad(gap * gap) if gap > 0 else QUAD_ZERO
        # distance from the removed ball to a region is at least the distance
        # from its center minus its radius
        d = inner.lower_sq_dist_to(removed.center)
        if quad_cmp(d, QUAD_ZERO) == 0:
            return QUAD_ZERO
        gap = d.sqrt_bounds()[0] - _radius_bounds(removed.r_sq)[1]
        return Quad(gap * gap) if gap > 0 else QUAD_ZERO
    raise UnsupportedRegion(f"margin of {inner.kind} inside {outer.kind}")


def quad_min_of(values) -> Quad:
    best = QUAD_INF
    for v in values:
        if quad_cmp(v, best) < 0:
            best = v
    return best


def region_from_dict(data: dict) -> Region:
    """Inverse of ``Region.to_dict`` for the torus variants."""
    kind = data["kind"]
    if kind == "full":
        return FULL
    if kind == "empty":
        return EMPTY
    if kind == "band":
        return Band(data["axis"], Arc.from_dict(data["arc"]))
    if kind == "strip":
        return Strip(tuple(data["normal"]), rat(data["shift"]), Arc.from_dict(data["arc"]))
    if kind == "box":
        return Box(Arc.from_dict(data["x"]), Arc.from_dict(data["y"]))
    if kind == "ball":
        return Ball(TorusPoint.from_dict(data["center"]), Quad.from_dict(data["r_sq"]), data["closed"])
    if kind == "union":
        return Union([region_from_dict(m) for m in data["members"]])
    if kind == "intersection":
        return Intersection([region_from_dict(m) for m in data["members"]])
    if kind == "complement":
        return Complement(region_from_dict(data["child"]))
    raise UnsupportedRegion(f"cannot rebuild region kind {kind!r}")
