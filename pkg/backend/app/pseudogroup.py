"""
Pseudogroup machinery: phase-space points, symbolic affine maps, generators,
words, orbit search, restricted orbits, and compact-generation systems.

Generators act on one of four spaces:

* ``torus``        points of the flat torus (``TorusPoint``)
* ``torus-level``  torus levels indexed by integers (``LevelPoint``)
* ``cantor``       levels of nested neighbourhoods of the zero sequence (``CantorPoint``)
* ``line``         the real line with rational points (``LinePoint``)

A generator is a partial map with an explicit domain. ``apply`` returns the
image point, or ``None`` when the point lies outside the (forward or inverse)
domain. Everything here is exact; the ``*_batch`` methods are float twins used
by the long-running probes.
"""

import logging
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from math import ceil, gcd
from typing import ClassVar, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .exact import (
    QUAD_INF,
    Quad,
    TorusPoint,
    mod_one,
    operator_norm_sq_bound,
    quad_cmp,
    rat,
    rat_to_str,
    sq_dist,
    sq_dist_float,
)
from .exceptions import (
    BadParams,
    CompatibilityError,
    PointOutsideU,
    SpaceMismatch,
    UnsupportedRegion,
)
from .regions import (
    EMPTY,
    FULL,
    INSIDE,
    OUTSIDE,
    Ball,
    IntervalSet,
    Region,
    ball_relation,
    containment_margin_sq,
    intersection,
    overlap_points,
    union,
)

logger = logging.getLogger(__name__)

Matrix = Tuple[Tuple[Fraction, Fraction], Tuple[Fraction, Fraction]]
Offset = Tuple[Fraction, Fraction]

IDENTITY: Matrix = ((Fraction(1), Fraction(0)), (Fraction(0), Fraction(1)))
ZERO_OFFSET: Offset = (Fraction(0), Fraction(0))


# -----------------------------
# 2x2 matrix helpers
# -----------------------------
def as_matrix(m) -> Matrix:
    (a, b), (c, d) = m
    return ((rat(a), rat(b)), (rat(c), rat(d)))


def mat_mul(m: Matrix, n: Matrix) -> Matrix:
    (a, b), (c, d) = m
    (e, f), (g, h) = n
    return ((a * e + b * g, a * f + b * h), (c * e + d * g, c * f + d * h))


def mat_vec(m: Matrix, v) -> Offset:
    (a, b), (c, d) = m
    return (a * v[0] + b * v[1], c * v[0] + d * v[1])


def mat_det(m: Matrix) -> Fraction:
    (a, b), (c, d) = m
    return a * d - b * c


def mat_inverse(m: Matrix) -> Matrix:
    det = mat_det(m)
    if det == 0:
        raise BadParams("singular matrix")
    (a, b), (c, d) = m
    return ((d / det, -b / det), (-c / det, a / det))


def is_integer_matrix(m: Matrix) -> bool:
    return all(v.denominator == 1 for row in m for v in row)


def _is_shear(m: Matrix) -> bool:
    (a, b), (c, d) = m
    return a == 1 and d == 1 and (b == 0 or c == 0)


def _offsets_agree(m: Matrix, o1: Offset, o2: Offset) -> bool:
    if is_integer_matrix(m):
        return mod_one(o1[0] - o2[0]) == 0 and mod_one(o1[1] - o2[1]) == 0
    return o1 == o2


def matrix_to_list(m: Matrix) -> List[List[str]]:
    return [[rat_to_str(v) for v in row] for row in m]


# -----------------------------
# Points
# -----------------------------
@dataclass(frozen=True, order=True)
class LevelPoint:
    """A point of the torus sitting on an integer level."""

    level: int
    point: TorusPoint

    space: ClassVar[str] = "torus-level"

    @property
    def x(self) -> Fraction:
        return self.point.x

    @property
    def y(self) -> Fraction:
        return self.point.y

    @classmethod
    def of(cls, x, y, level: int) -> "LevelPoint":
        return cls(level, TorusPoint.of(x, y))

    def sort_key(self):
        return (self.level, self.point.x, self.point.y)

    def to_dict(self) -> dict:
        return {"level": self.level, **self.point.to_dict()}

    def __repr__(self):
        return f"({self.point!r}, {self.level})"


@dataclass(frozen=True, order=True)
class LinePoint:
    t: Fraction

    space: ClassVar[str] = "line"
    level: ClassVar[int] = 0

    def __post_init__(self):
        object.__setattr__(self, "t", rat(self.t))

    def sort_key(self):
        return (self.t,)

    def to_dict(self) -> dict:
        return {"t": rat_to_str(self.t)}

    def __repr__(self):
        return f"t={self.t}"


def _primitive(word: str) -> str:
    n = len(word)
    for p in range(1, n + 1):
        if n % p == 0 and word[:p] * (n // p) == word:
            return word[:p]
    return word


def _rotate(word: str, k: int) -> str:
    k %= len(word)
    return word[k:] + word[:k]


@dataclass(frozen=True)
class BiSeq:
    """An eventually periodic bi-infinite 0/1 sequence.

    The sequence reads ``left`` repeated towards -infinity, then ``center``
    starting at index ``start``, then ``right`` repeated towards +infinity:
    alpha_i = center[i - start] inside the center, right[(i - start - |center|) mod |right|]
    after it and left[(i - start) mod |left|] before it.

    The constructor brings the data to a canonical form, so two BiSeq are equal
    exactly when they describe the same sequence. Fully periodic sequences are
    stored with ``left == right`` equal to alpha_0 ... alpha_{p-1}, empty center
    and ``start == 0``.
    """

    left: str
    center: str
    right: str
    start: int = 0

    def __post_init__(self):
        for word in (self.left, self.center, self.right):
            if set(word) - {"0", "1"}:
                raise BadParams(f"not a 0/1 word: {word!r}")
        if not self.left or not self.right:
            raise BadParams("periodic tails must be nonempty")
        left, center, right, start = self._canonical(self.left, self.center, self.right, int(self.start))
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "start", start)

    @staticmethod
    def _canonical(left: str, center: str, right: str, start: int):
        left, right = _primitive(left), _primitive(right)
        while center and center[0] == left[0]:
            center, left, start = center[1:], _rotate(left, 1), start + 1
        while center and center[-1] == right[-1]:
            center, right = center[:-1], _rotate(right, -1)
        if center:
            return left, center, right, start
        bound = len(left) + len(right)
        steps = 0
        while right[0] == left[0] and steps < bound:
            left, right, start = _rotate(left, 1), _rotate(right, 1), start + 1
            steps += 1
        if steps == bound:
            # both tails describe the same periodic sequence
            word = _rotate(right, -start)
            return word, "", word, 0
        return left, center, right, start

    # -- constructors
    @classmethod
    def periodic(cls, word: str) -> "BiSeq":
        """The sequence with alpha_i = word[i mod len(word)]."""
        return cls(word, "", word, 0)

    @classmethod
    def parse(cls, text: str) -> "BiSeq":
        """``"L|C|R@start"`` or a bare periodic word such as ``"01"``."""
        text = text.strip()
        if "|" not in text:
            return cls.periodic(text)
        body, _, start = text.partition("@")
        left, center, right = body.split("|")
        return cls(left, center, right, int(start or 0))

    # -- coordinates
    def at(self, i: int) -> int:
        j = i - self.start
        n = len(self.center)
        if 0 <= j < n:
            return int(self.center[j])
        if j >= n:
            return int(self.right[(j - n) % len(self.right)])
        return int(self.left[j % len(self.left)])

    def window(self, radius: int) -> Tuple[int, ...]:
        return tuple(self.at(i) for i in range(-radius, radius + 1))

    @property
    def is_periodic(self) -> bool:
        return not self.center and self.left == self.right and self.start == 0

    @property
    def period(self) -> Optional[int]:
        return len(self.left) if self.is_periodic else None

    @property
    def is_zero(self) -> bool:
        return self.is_periodic and self.left == "0"

    def shift(self, k: int = 1) -> "BiSeq":
        """sigma^k, where (sigma alpha)_i = alpha_{i+1}."""
        if self.is_periodic:
            return BiSeq.periodic(_rotate(self.left, k))
        return BiSeq(self.left, self.center, self.right, self.start - k)

    def in_U(self, n: int) -> bool:
        """alpha_i = 0 for |i| < n."""
        return all(self.at(i) == 0 and self.at(-i) == 0 for i in range(n))

    def zero_radius(self) -> Optional[int]:
        """Largest n with alpha in U_n; ``None`` for the zero sequence."""
        if self.is_zero:
            return None
        n = 0
        while self.at(n) == 0 and self.at(-n) == 0:
            n += 1
        return n

    def _extent(self) -> int:
        return abs(self.start) + len(self.center) + len(self.left) + len(self.right)

    def first_difference(self, other: "BiSeq") -> Optional[int]:
        """min |i| with alpha_i != beta_i, or ``None`` when equal."""
        if self == other:
            return None
        bound = self._extent() + other._extent() + 2
        for k in range(bound + 1):
            if self.at(k) != other.at(k) or self.at(-k) != other.at(-k):
                return k
        raise AssertionError("unequal canonical sequences agree on the comparison window")

    def sq_distance(self, other: "BiSeq") -> Fraction:
        k = self.first_difference(other)
        return Fraction(0) if k is None else Fraction(1, 4 ** k)

    def same_shift_orbit(self, other: "BiSeq") -> bool:
        if self.is_periodic or other.is_periodic:
            return (self.is_periodic and other.is_periodic
                    and len(self.left) == len(other.left)
                    and other.left in self.left + self.left)
        return (self.left, self.center, self.right) == (other.left, other.center, other.right)

    def orbit_representatives(self, window: int) -> List["BiSeq"]:
        """sigma^k(alpha) for all k if periodic, else for |k| <= window."""
        if self.is_periodic:
            return sorted({self.shift(k) for k in range(len(self.left))}, key=BiSeq.sort_key)
        return [self.shift(k) for k in range(-window, window + 1)]

    def sort_key(self):
        return (self.left, self.center, self.right, self.start)

    def to_dict(self) -> dict:
        return {"left": self.left, "center": self.center, "right": self.right, "start": self.start}

    @classmethod
    def from_dict(cls, data: dict) -> "BiSeq":
        return cls(data["left"], data["center"], data["right"], data["start"])

    def __str__(self):
        if self.is_periodic:
            return f"({self.left})"
        return f"{self.left}|{self.center}|{self.right}@{self.start}"


ZERO_SEQUENCE = BiSeq.periodic("0")


@dataclass(frozen=True)
class CantorPoint:
    """(level, alpha) with alpha in U_level."""

    level: int
    seq: BiSeq

    space: ClassVar[str] = "cantor"

    def __post_init__(self):
        if self.level < 0:
            raise BadParams("cantor levels are non-negative")
        if not self.seq.in_U(self.level):
            raise BadParams(f"{self.seq} is not in U_{self.level}")

    def sort_key(self):
        return (self.level,) + self.seq.sort_key()

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    def to_dict(self) -> dict:
        return {"level": self.level, "seq": self.seq.to_dict()}

    def __repr__(self):
        return f"({self.level}, {self.seq})"


SpacePoint = object


def space_of(point) -> str:
    return getattr(point, "space", "unknown")


def torus_part(point) -> TorusPoint:
    return point if isinstance(point, TorusPoint) else point.point


def point_to_dict(point) -> dict:
    return {"space": space_of(point), **point.to_dict()}


def point_from_dict(data: dict):
    space = data["space"]
    if space == "torus":
        return TorusPoint.from_dict(data)
    if space == "torus-level":
        return LevelPoint(int(data["level"]), TorusPoint.from_dict(data))
    if space == "cantor":
        return CantorPoint(int(data["level"]), BiSeq.from_dict(data["seq"]))
    if space == "line":
        return LinePoint(rat(data["t"]))
    raise BadParams(f"unknown space {space!r}")


def point_sq_distance(p, q) -> Quad:
    """Squared distance; +infinity between different levels."""
    if space_of(p) != space_of(q):
        raise SpaceMismatch(f"{space_of(p)} vs {space_of(q)}")
    if isinstance(p, TorusPoint):
        return Quad(sq_dist(p, q))
    if p.level != q.level:
        return QUAD_INF
    if isinstance(p, LevelPoint):
        return Quad(sq_dist(p.point, q.point))
    if isinstance(p, CantorPoint):
        return Quad(p.seq.sq_distance(q.seq))
    d = p.t - q.t
    return Quad(d * d)


def point_to_float(point) -> Tuple[float, float, int]:
    if isinstance(point, LinePoint):
        return float(point.t), 0.0, 0
    if isinstance(point, CantorPoint):
        raise UnsupportedRegion("cantor points have no float form")
    tp = torus_part(point)
    return float(tp.x), float(tp.y), point.level


def sq_dist_batch(space: str, x1, y1, l1, x2, y2, l2) -> np.ndarray:
    if space == "line":
        d = np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)
        return d * d
    d = sq_dist_float(x1, y1, x2, y2)
    return np.where(np.asarray(l1) == np.asarray(l2), d, np.inf)


# -----------------------------
# Affine rules
# -----------------------------
@dataclass(frozen=True)
class AffinePiece:
    """p -> matrix * p + offset on ``region``.

    Integer matrices act on the torus directly. A rational shear such as
    (1, s; 0, 1) needs a lift of the sheared coordinate; ``anchor`` gives the
    lower end of the unit window the coordinates are lifted into.
    ``invariant`` marks pieces that map their region onto itself.
    """

    region: Region
    matrix: Matrix = IDENTITY
    offset: Offset = ZERO_OFFSET
    anchor: Optional[Offset] = None
    label: str = "id"
    invariant: bool = False

    def __post_init__(self):
        object.__setattr__(self, "matrix", as_matrix(self.matrix))
        object.__setattr__(self, "offset", (rat(self.offset[0]), rat(self.offset[1])))
        if self.anchor is not None:
            object.__setattr__(self, "anchor", (rat(self.anchor[0]), rat(self.anchor[1])))
        if not is_integer_matrix(self.matrix):
            if not _is_shear(self.matrix):
                raise BadParams("rational entries are only supported in shear form")
            if self.anchor is None:
                raise BadParams("a rational shear needs a lift anchor")

    @property
    def linear_is_identity(self) -> bool:
        return self.matrix == IDENTITY

    @property
    def is_identity(self) -> bool:
        return self.linear_is_identity and _offsets_agree(IDENTITY, self.offset, ZERO_OFFSET)

    def _lift(self, p) -> Offset:
        if self.anchor is None or is_integer_matrix(self.matrix):
            return p.x, p.y
        ax, ay = self.anchor
        return ax + mod_one(p.x - ax), ay + mod_one(p.y - ay)

    def image(self, p) -> TorusPoint:
        x, y = self._lift(p)
        (a, b), (c, d) = self.matrix
        return TorusPoint(a * x + b * y + self.offset[0], c * x + d * y + self.offset[1])

    def image_batch(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.anchor is not None and not is_integer_matrix(self.matrix):
            ax, ay = float(self.anchor[0]), float(self.anchor[1])
            x = ax + (x - ax) % 1.0
            y = ay + (y - ay) % 1.0
        (a, b), (c, d) = ((float(v) for v in row) for row in self.matrix)
        nx = a * x + b * y + float(self.offset[0])
        ny = c * x + d * y + float(self.offset[1])
        return nx % 1.0, ny % 1.0

    def inverse(self) -> "AffinePiece":
        inv = mat_inverse(self.matrix)
        off = mat_vec(inv, (-self.offset[0], -self.offset[1]))
        if self.invariant:
            region = self.region
        elif is_integer_matrix(inv):
            region = self.region.preimage(inv, off)
        else:
            raise UnsupportedRegion("image region of a non-unimodular piece")
        return AffinePiece(region, inv, off, self.anchor, _inverse_label(self.label), self.invariant)

    def restricted(self, region: Region) -> "AffinePiece":
        return AffinePiece(intersection(self.region, region), self.matrix, self.offset,
                           self.anchor, self.label, False)

    def same_action(self, other: "AffinePiece") -> bool:
        return (self.matrix == other.matrix and self.anchor == other.anchor
                and _offsets_agree(self.matrix, self.offset, other.offset))

    def to_dict(self) -> dict:
        out = {
            "label": self.label,
            "region": self.region.to_dict(),
            "matrix": matrix_to_list(self.matrix),
            "offset": [rat_to_str(v) for v in self.offset],
        }
        if self.anchor is not None:
            out["anchor"] = [rat_to_str(v) for v in self.anchor]
        return out


def _inverse_label(label: str) -> str:
    return label[:-3] if label.endswith("^-1") else f"{label}^-1"


class PiecewiseAffine:
    """An affine map per piece; a point takes the first piece containing it."""

    def __init__(self, pieces: Sequence[AffinePiece], label: str = ""):
        self.pieces = tuple(pieces)
        self.label = label
        self._inverse: Optional["PiecewiseAffine"] = None

    @property
    def factors(self) -> Tuple["PiecewiseAffine", ...]:
        return (self,)

    def piece_at(self, p) -> Optional[AffinePiece]:
        for piece in self.pieces:
            if piece.region.contains(p):
                return piece
        return None

    def pieces_at(self, p) -> List[AffinePiece]:
        piece = self.piece_at(p)
        return [] if piece is None else [piece]

    def __call__(self, p) -> Optional[TorusPoint]:
        piece = self.piece_at(p)
        return None if piece is None else piece.image(p)

    def linear_part_at(self, p) -> Optional[Matrix]:
        piece = self.piece_at(p)
        return None if piece is None else piece.matrix

    def inverse(self) -> "PiecewiseAffine":
        if self._inverse is None:
            self._inverse = PiecewiseAffine([pc.inverse() for pc in self.pieces], _inverse_label(self.label))
            self._inverse._inverse = self
        return self._inverse

    def apply_batch(self, x, y) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        nx, ny = x.copy(), y.copy()
        done = np.zeros(x.shape, dtype=bool)
        for piece in self.pieces:
            mask = ~done & piece.region.contains_batch(x, y)
            if mask.any():
                nx[mask], ny[mask] = piece.image_batch(x[mask], y[mask])
                done |= mask
        return nx, ny, done

    def to_dict(self) -> dict:
        return {"kind": "piecewise-affine", "label": self.label, "pieces": [p.to_dict() for p in self.pieces]}


def identity_rule() -> PiecewiseAffine:
    return PiecewiseAffine([AffinePiece(FULL)], "id")


def affine_rule(matrix, offset=ZERO_OFFSET, region: Region = FULL, label: str = "A") -> PiecewiseAffine:
    return PiecewiseAffine([AffinePiece(region, matrix, offset, label=label)], label)


class ComposedMap:
    """Factors applied in order: ``ComposedMap([T_h, T_v])`` is T_v after T_h."""

    def __init__(self, factors: Sequence[PiecewiseAffine], label: str = ""):
        self.factors = tuple(factors)
        self.label = label
        self._inverse: Optional["ComposedMap"] = None

    def __call__(self, p) -> Optional[TorusPoint]:
        for factor in self.factors:
            p = factor(p)
            if p is None:
                return None
        return p

    def pieces_at(self, p) -> List[AffinePiece]:
        out = []
        for factor in self.factors:
            piece = factor.piece_at(p)
            if piece is None:
                return out
            out.append(piece)
            p = piece.image(p)
        return out

    def linear_part_at(self, p) -> Optional[Matrix]:
        m = IDENTITY
        pieces = self.pieces_at(p)
        if len(pieces) < len(self.factors):
            return None
        for piece in pieces:
            m = mat_mul(piece.matrix, m)
        return m

    def inverse(self) -> "ComposedMap":
        if self._inverse is None:
            self._inverse = ComposedMap([f.inverse() for f in reversed(self.factors)], _inverse_label(self.label))
            self._inverse._inverse = self
        return self._inverse

    def apply_batch(self, x, y):
        ok = np.ones(np.shape(x), dtype=bool)
        for factor in self.factors:
            x, y, done = factor.apply_batch(x, y)
            ok &= done
        return x, y, ok

    def flatten(self) -> PiecewiseAffine:
        rule = self.factors[0]
        for factor in self.factors[1:]:
            rule = compose_rules(factor, rule)
        return PiecewiseAffine(rule.pieces, self.label)

    def to_dict(self) -> dict:
        return {"kind": "composed", "label": self.label, "factors": [f.to_dict() for f in self.factors]}


def compose_rules(g: PiecewiseAffine, f: PiecewiseAffine) -> PiecewiseAffine:
    """g after f, piece by piece; empty pieces are dropped."""
    pieces = []
    for pf in f.pieces:
        if not is_integer_matrix(pf.matrix):
            raise UnsupportedRegion("composition through a rational shear")
        for pg in g.pieces:
            pre = pg.region.preimage(pf.matrix, pf.offset)
            region = intersection(pf.region, pre)
            if region is EMPTY:
                continue
            matrix = mat_mul(pg.matrix, pf.matrix)
            moved = mat_vec(pg.matrix, pf.offset)
            offset = (moved[0] + pg.offset[0], moved[1] + pg.offset[1])
            pieces.append(AffinePiece(region, matrix, offset, label=f"{pg.label}*{pf.label}"))
    return PiecewiseAffine(pieces, f"{g.label}*{f.label}")


def flatten_rule(rule) -> PiecewiseAffine:
    return rule.flatten() if isinstance(rule, ComposedMap) else rule


# -----------------------------
# Generators
# -----------------------------
@dataclass(frozen=True)
class LocalAction:
    """What a generator does near one point: its linear part, or the kind of shift."""

    gid: str
    exponent: int
    kind: str
    matrix: Optional[Matrix] = None
    labels: Tuple[str, ...] = ()

    @property
    def isometric(self) -> bool:
        if self.kind in ("level-shift", "translation"):
            return True
        if self.kind == "affine":
            return self.matrix == IDENTITY
        return False

    def to_dict(self) -> dict:
        return {
            "generator": self.gid,
            "exponent": self.exponent,
            "kind": self.kind,
            "matrix": matrix_to_list(self.matrix) if self.matrix is not None else None,
            "pieces": list(self.labels),
            "isometric": self.isometric,
        }


@dataclass
class BallTransport:
    """Result of pushing an open ball through one generator."""

    status: str
    center: object = None
    r_sq: Optional[Quad] = None
    matrix: Matrix = IDENTITY
    offset: Offset = ZERO_OFFSET


class Generator(ABC):
    """A named partial homeomorphism of one phase space."""

    space = "unknown"
    kind = "generator"

    def __init__(self, gid: str, extension_of: Optional[str] = None, description: str = ""):
        self.gid = gid
        self.extension_of = extension_of
        self.description = description

    def _check_space(self, point):
        if space_of(point) != self.space:
            raise SpaceMismatch(f"generator {self.gid} acts on {self.space}, got a {space_of(point)} point")

    def apply(self, point, exponent: int = 1):
        """Image of ``point`` under the generator (exponent +1) or its inverse (-1)."""
        self._check_space(point)
        if exponent not in (1, -1):
            raise BadParams(f"exponent must be +1 or -1, got {exponent}")
        return self._forward(point) if exponent == 1 else self._backward(point)

    def in_domain(self, point, exponent: int = 1) -> bool:
        return self.apply(point, exponent) is not None

    def reaches_beyond(self, point, exponent: int = 1) -> bool:
        """True when the point is blocked only because a built level range ends."""
        return False

    @abstractmethod
    def _forward(self, point):
        ...

    @abstractmethod
    def _backward(self, point):
        ...

    @abstractmethod
    def local_action(self, point, exponent: int = 1) -> Optional[LocalAction]:
        ...

    def apply_batch(self, x, y, level, exponent: int = 1):
        raise UnsupportedRegion(f"{self.kind} generator {self.gid} has no float mode")

    def transport(self, center, r_sq: Quad, exponent: int = 1) -> BallTransport:
        raise UnsupportedRegion(f"ball transport is not available for {self.kind} generators")

    def describe(self) -> dict:
        return {
            "id": self.gid,
            "space": self.space,
            "kind": self.kind,
            "extension_of": self.extension_of,
            "description": self.description,
        }


class TorusGenerator(Generator):
    """Piecewise-affine map on torus levels, optionally followed by a level shift.

    ``rules`` and ``domains`` are keyed by level. A plain torus generator uses
    the single level 0. ``open_ends`` says whether the built level range was
    cut below / above; leaving the range through a cut end counts as hitting
    the level bound rather than leaving the domain.
    """

    kind = "torus-affine"

    def __init__(self, gid: str, rules: Mapping[int, object], domains: Mapping[int, Region],
                 level_shift: int = 0, space: str = "torus", open_ends: Tuple[bool, bool] = (False, False),
                 extension_of: Optional[str] = None, description: str = ""):
        super().__init__(gid, extension_of, description)
        if space not in ("torus", "torus-level"):
            raise BadParams(f"torus generators act on torus spaces, not {space!r}")
        self.space = space
        self.rules = dict(rules)
        self.domains = dict(domains)
        self.level_shift = level_shift
        self.open_ends = open_ends
        self.levels = sorted(self.rules)
        self._level_set = set(self.levels)

    @classmethod
    def on_torus(cls, gid: str, rule, domain: Region = FULL, **kwargs) -> "TorusGenerator":
        return cls(gid, {0: rule}, {0: domain}, **kwargs)

    def rule_at(self, level: int):
        return self.rules[level]

    def domain_at(self, level: int) -> Region:
        if level not in self._level_set:
            return EMPTY
        return self.domains.get(level, EMPTY)

    def _make(self, tp: TorusPoint, level: int):
        return tp if self.space == "torus" else LevelPoint(level, tp)

    def _forward(self, p):
        level = p.level
        target = level + self.level_shift
        if target not in self._level_set or not self.domain_at(level).contains(p):
            return None
        q = self.rules[level](torus_part(p))
        return None if q is None else self._make(q, target)

    def _backward(self, q):
        source = q.level - self.level_shift
        if source not in self._level_set:
            return None
        rule = self.rules[source]
        tp = rule.inverse()(torus_part(q))
        if tp is None:
            return None
        cand = self._make(tp, source)
        if not self.domain_at(source).contains(cand) or rule(tp) != torus_part(q):
            return None
        return cand

    def reaches_beyond(self, point, exponent: int = 1) -> bool:
        level = point.level
        lo_open, hi_open = self.open_ends
        if exponent == 1:
            target = level + self.level_shift
            if target in self._level_set or not self.domain_at(level).contains(point):
                return False
        else:
            target = level - self.level_shift
            if target in self._level_set:
                return False
        return (target > self.levels[-1] and hi_open) or (target < self.levels[0] and lo_open)

    def local_action(self, point, exponent: int = 1) -> Optional[LocalAction]:
        image = self.apply(point, exponent)
        if image is None:
            return None
        if exponent == 1:
            rule, at = self.rules[point.level], torus_part(point)
        else:
            rule, at = self.rules[image.level].inverse(), torus_part(point)
        pieces = rule.pieces_at(at)
        matrix = rule.linear_part_at(at)
        labels = tuple(pc.label for pc in pieces)
        pure_shift = matrix == IDENTITY and all(pc.is_identity for pc in pieces)
        kind = "level-shift" if (self.level_shift and pure_shift) else "affine"
        return LocalAction(self.gid, exponent, kind, matrix, labels)

    def apply_batch(self, x, y, level, exponent: int = 1):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        level = np.asarray(level, dtype=int)
        nx, ny, nl = x.copy(), y.copy(), level.copy()
        ok = np.zeros(x.shape, dtype=bool)
        for lv in np.unique(level):
            lv = int(lv)
            mask = level == lv
            if exponent == 1:
                target = lv + self.level_shift
                if target not in self._level_set:
                    continue
                inside = self.domain_at(lv).contains_batch(x[mask], y[mask], level[mask])
                px, py, done = self.rules[lv].apply_batch(x[mask], y[mask])
                good = inside & done
            else:
                target = lv - self.level_shift
                if target not in self._level_set:
                    continue
                px, py, done = self.rules[target].inverse().apply_batch(x[mask], y[mask])
                src_level = np.full(px.shape, target)
                good = done & self.domain_at(target).contains_batch(px, py, src_level)
            idx = np.flatnonzero(mask)
            nx[idx], ny[idx], nl[idx] = px, py, target
            ok[idx] = good
        return nx, ny, nl, ok

    def transport(self, center, r_sq: Quad, exponent: int = 1) -> BallTransport:
        """Push the open ball B(center, sqrt r_sq) through the generator.

        ``inside``: the whole ball lies in the domain and in single pieces, and
        the returned ball contains its image. ``outside``: the ball misses the
        domain. ``straddles``: neither could be certified.
        """
        r_sq = Quad.of(r_sq)
        level = center.level
        if exponent == 1:
            target = level + self.level_shift
            if target not in self._level_set:
                return BallTransport(OUTSIDE)
            rel = ball_relation(self.domain_at(level), center, r_sq)
            if rel != INSIDE:
                return BallTransport(rel)
            rule = self.rules[level]
        else:
            target = level - self.level_shift
            if target not in self._level_set:
                return BallTransport(OUTSIDE)
            rule = self.rules[target].inverse()
        c, radius = torus_part(center), r_sq
        matrix, offset = IDENTITY, ZERO_OFFSET
        for factor in rule.factors:
            piece = factor.piece_at(c)
            if piece is None:
                return BallTransport(OUTSIDE)
            if ball_relation(piece.region, c, radius) != INSIDE:
                return BallTransport("straddles")
            if piece.anchor is not None and not is_integer_matrix(piece.matrix):
                raise UnsupportedRegion("ball transport through a rational shear")
            c = piece.image(c)
            moved = mat_vec(piece.matrix, offset)
            offset = (moved[0] + piece.offset[0], moved[1] + piece.offset[1])
            matrix = mat_mul(piece.matrix, matrix)
            if not piece.linear_is_identity:
                radius = radius * operator_norm_sq_bound(piece.matrix)
        out = self._make(c, target)
        if exponent == -1:
            rel = ball_relation(self.domain_at(target), out, radius)
            if rel != INSIDE:
                return BallTransport(rel)
        return BallTransport(INSIDE, out, radius, matrix, offset)

    def describe(self) -> dict:
        out = super().describe()
        out.update({"levels": [self.levels[0], self.levels[-1]], "level_shift": self.level_shift})
        return out


class SequenceShiftGenerator(Generator):
    """f(n, alpha) = (n, sigma alpha) on {sigma alpha not in U_(n+2)}.

    The image must again satisfy alpha in U_n; points whose image would leave
    the space count as outside the domain.
    """

    space = "cantor"
    kind = "sequence-shift"

    def _forward(self, p: CantorPoint):
        beta = p.seq.shift(1)
        if beta.in_U(p.level + 2) or not beta.in_U(p.level):
            return None
        return CantorPoint(p.level, beta)

    def _backward(self, q: CantorPoint):
        if q.seq.in_U(q.level + 2):
            return None
        alpha = q.seq.shift(-1)
        if not alpha.in_U(q.level):
            return None
        return CantorPoint(q.level, alpha)

    def local_action(self, point, exponent: int = 1) -> Optional[LocalAction]:
        if self.apply(point, exponent) is None:
            return None
        return LocalAction(self.gid, exponent, "sequence-shift")


class CantorLevelGenerator(Generator):
    """g(n, alpha) = (n + 1, alpha) on {alpha in U_(n+1)}."""

    space = "cantor"
    kind = "level-shift"

    def _forward(self, p: CantorPoint):
        if not p.seq.in_U(p.level + 1):
            return None
        return CantorPoint(p.level + 1, p.seq)

    def _backward(self, q: CantorPoint):
        if q.level < 1:
            return None
        return CantorPoint(q.level - 1, q.seq)

    def local_action(self, point, exponent: int = 1) -> Optional[LocalAction]:
        if self.apply(point, exponent) is None:
            return None
        return LocalAction(self.gid, exponent, "level-shift")


class TranslationGenerator(Generator):
    """t -> t + step on a set of intervals (the whole line by default)."""

    space = "line"
    kind = "translation"

    def __init__(self, gid: str, step, domain: Region = FULL, extension_of: Optional[str] = None,
                 description: str = ""):
        super().__init__(gid, extension_of, description)
        self.step = rat(step)
        self.domain = domain

    def _forward(self, p: LinePoint):
        if not self.domain.contains(p.t):
            return None
        return LinePoint(p.t + self.step)

    def _backward(self, q: LinePoint):
        t = q.t - self.step
        return LinePoint(t) if self.domain.contains(t) else None

    def local_action(self, point, exponent: int = 1) -> Optional[LocalAction]:
        if self.apply(point, exponent) is None:
            return None
        return LocalAction(self.gid, exponent, "translation")

    def apply_batch(self, x, y, level, exponent: int = 1):
        x = np.asarray(x, dtype=float)
        step = float(self.step) * exponent
        source = x if exponent == 1 else x + step
        ok = self.domain.contains_batch(source) if self.domain is not FULL else np.ones(x.shape, dtype=bool)
        return x + step, np.asarray(y, dtype=float), np.asarray(level), ok

    def transport(self, center, r_sq: Quad, exponent: int = 1) -> BallTransport:
        source = center if exponent == 1 else LinePoint(center.t - self.step)
        rel = ball_relation(self.domain, source.t, r_sq) if self.domain is not FULL else INSIDE
        if rel != INSIDE:
            return BallTransport(rel)
        moved = LinePoint(center.t + exponent * self.step)
        return BallTransport(INSIDE, moved, Quad.of(r_sq))

    def describe(self) -> dict:
        out = super().describe()
        out["step"] = rat_to_str(self.step)
        return out


class GeneratorSet:
    """Generators of one space, looked up by id, in a fixed letter order."""

    def __init__(self, generators: Iterable[Generator]):
        gens = list(generators)
        ids = [g.gid for g in gens]
        if len(set(ids)) != len(ids):
            raise BadParams(f"duplicate generator ids in {ids}")
        spaces = {g.space for g in gens}
        if len(spaces) > 1:
            raise BadParams(f"generators act on different spaces: {sorted(spaces)}")
        self._by_id = {g.gid: g for g in sorted(gens, key=lambda g: g.gid)}
        self.space = spaces.pop() if spaces else "unknown"

    @property
    def ids(self) -> List[str]:
        return list(self._by_id)

    @property
    def letters(self) -> List[Tuple[str, int]]:
        return [(gid, e) for gid in self._by_id for e in (1, -1)]

    def __getitem__(self, gid: str) -> Generator:
        try:
            return self._by_id[gid]
        except KeyError:
            raise BadParams(f"unknown generator {gid!r}") from None

    def __iter__(self) -> Iterator[Generator]:
        return iter(self._by_id.values())

    def __len__(self) -> int:
        return len(self._by_id)

    def subset(self, ids: Iterable[str]) -> "GeneratorSet":
        return GeneratorSet(self[i] for i in ids)

    def describe(self) -> List[dict]:
        return [g.describe() for g in self]


def apply_generator(gen: Generator, exponent: int, point):
    return gen.apply(point, exponent)


# -----------------------------
# Words
# -----------------------------
Letter = Tuple[str, int]


def _reduce(letters: Iterable[Letter]) -> Tuple[Letter, ...]:
    out: List[Letter] = []
    for gid, e in letters:
        if e not in (1, -1):
            raise BadParams(f"letter exponents are +1 or -1, got {e}")
        if out and out[-1] == (gid, -e):
            out.pop()
        else:
            out.append((gid, e))
    return tuple(out)


@dataclass(frozen=True)
class Word:
    """Letters applied left to right; always freely reduced."""

    letters: Tuple[Letter, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "letters", _reduce(tuple(self.letters)))

    @classmethod
    def parse(cls, text: str) -> "Word":
        """``"f f g^-1"`` or ``"f^3 g^-1"``; ``"id"`` or empty for the identity."""
        letters: List[Letter] = []
        for token in text.replace(".", " ").split():
            if token == "id":
                continue
            gid, _, power = token.partition("^")
            n = int(power) if power else 1
            letters.extend([(gid, 1 if n > 0 else -1)] * abs(n))
        return cls(tuple(letters))

    def inverse(self) -> "Word":
        return Word(tuple((g, -e) for g, e in reversed(self.letters)))

    def __mul__(self, other: "Word") -> "Word":
        return Word(self.letters + other.letters)

    def __len__(self) -> int:
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def __str__(self):
        if not self.letters:
            return "id"
        return " ".join(g if e == 1 else f"{g}^-1" for g, e in self.letters)

    def to_list(self) -> List[List]:
        return [[g, e] for g, e in self.letters]


def enumerate_words(letters: Sequence[Letter], depth: int) -> Iterator[Word]:
    """Reduced words of length 1..depth in breadth-first, letter order."""
    layer: List[Tuple[Letter, ...]] = [()]
    for _ in range(depth):
        nxt = []
        for w in layer:
            for letter in letters:
                if w and w[-1] == (letter[0], -letter[1]):
                    continue
                word = w + (letter,)
                nxt.append(word)
                yield Word(word)
        layer = nxt


@dataclass
class WordEvaluation:
    defined: bool
    point: object
    trace: List
    failed_step: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "defined": self.defined,
            "point": point_to_dict(self.point) if self.point is not None else None,
            "trace": [point_to_dict(p) for p in self.trace],
            "failed_step": self.failed_step,
        }


def apply_word(gens: GeneratorSet, word: Word, point) -> WordEvaluation:
    """Evaluate left to right; ``failed_step`` is the 1-based index of the first undefined letter."""
    trace = [point]
    for step, (gid, e) in enumerate(word, start=1):
        point = apply_generator(gens[gid], e, point)
        if point is None:
            return WordEvaluation(False, None, trace, step)
        trace.append(point)
    return WordEvaluation(True, point, trace)


# -----------------------------
# Orbits
# -----------------------------
class OrbitStatus(str, Enum):
    COMPLETE = "Complete"
    TRUNCATED_BY_NODE_BOUND = "TruncatedByNodeBound"
    TRUNCATED_BY_LEVEL_BOUND = "TruncatedByLevelBound"


@dataclass
class OrbitGraph:
    base: object
    nodes: List
    edges: List[Tuple[int, str, int, int]]
    status: OrbitStatus
    index: Dict = field(default_factory=dict, repr=False)

    @property
    def complete(self) -> bool:
        return self.status == OrbitStatus.COMPLETE

    def __contains__(self, point) -> bool:
        return point in self.index

    def __len__(self) -> int:
        return len(self.nodes)

    def node_set(self) -> set:
        return set(self.nodes)

    def levels(self) -> List[int]:
        return sorted({n.level for n in self.nodes})

    def verify_closure(self, gens: GeneratorSet) -> bool:
        """Every generator image of every node is a node (meaningful for Complete graphs)."""
        for node in self.nodes:
            for gid, e in gens.letters:
                q = gens[gid].apply(node, e)
                if q is not None and q not in self.index:
                    return False
        return True

    def to_dict(self) -> dict:
        return {
            "base": point_to_dict(self.base),
            "status": self.status.value,
            "nodes": [point_to_dict(n) for n in self.nodes],
            "edges": [list(e) for e in self.edges],
        }

    def edges_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.edges, columns=["from_index", "gen", "exp", "to_index"])


def orbit_bfs(gens: GeneratorSet, point, max_nodes: int = 200000, max_level: int = 12) -> OrbitGraph:
    """Breadth-first closure of ``point`` under all generators and their inverses.

    Node order: BFS layer, then generator id, then +1 before -1.
    """
    if max_nodes < 1 or max_level < 0:
        raise BadParams("orbit bounds must be positive")
    nodes = [point]
    index = {point: 0}
    edges: List[Tuple[int, str, int, int]] = []
    queue = deque([0])
    node_cut = level_cut = False
    letters = gens.letters
    while queue:
        i = queue.popleft()
        node = nodes[i]
        for gid, e in letters:
            gen = gens[gid]
            q = gen.apply(node, e)
            if q is None:
                if gen.reaches_beyond(node, e):
                    level_cut = True
                continue
            if abs(q.level) > max_level:
                level_cut = True
                continue
            j = index.get(q)
            if j is None:
                if len(nodes) >= max_nodes:
                    node_cut = True
                    continue
                j = len(nodes)
                nodes.append(q)
                index[q] = j
                queue.append(j)
            edges.append((i, gid, e, j))
    if node_cut:
        status = OrbitStatus.TRUNCATED_BY_NODE_BOUND
        logger.warning("orbit of %r stopped at the node bound %d", point, max_nodes)
    elif level_cut:
        status = OrbitStatus.TRUNCATED_BY_LEVEL_BOUND
    else:
        status = OrbitStatus.COMPLETE
    logger.debug("orbit of %r: %d nodes, %s", point, len(nodes), status.value)
    return OrbitGraph(point, nodes, edges, status, index)


class OrbitVerdict(str, Enum):
    FINITE = "Finite"
    UNKNOWN_AT_BOUND = "UnknownAtBound"


@dataclass
class RestrictedOrbit:
    points: List
    verdict: OrbitVerdict
    method: str
    graph: Optional[OrbitGraph] = None

    @property
    def finite(self) -> bool:
        return self.verdict == OrbitVerdict.FINITE

    @property
    def count(self) -> Optional[int]:
        return len(self.points) if self.finite else None

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "count": self.count,
            "method": self.method,
            "points": [point_to_dict(p) for p in self.points],
        }


def _fraction_gcd(values: Iterable[Fraction]) -> Fraction:
    num, den = 0, 1
    for v in values:
        v = abs(Fraction(v))
        # gcd(a/b, c/d) = gcd(a d, c b) / (b d)
        num, den = gcd(num * v.denominator, v.numerator * den), den * v.denominator
    return Fraction(num, den)


def _line_restricted_orbit(gens: GeneratorSet, U: IntervalSet, point: LinePoint) -> RestrictedOrbit:
    step = _fraction_gcd(g.step for g in gens)
    lo, hi = U.bounds()
    k_lo = -((point.t - lo) // step) - 1
    k_hi = (hi - point.t) // step + 1
    points = [LinePoint(point.t + k * step) for k in range(int(k_lo), int(k_hi) + 1)]
    inside = [p for p in points if U.contains(p.t)]
    return RestrictedOrbit(inside, OrbitVerdict.FINITE, "translation-subgroup")


def restricted_orbit(gens: GeneratorSet, U: Region, point, max_nodes: int = 200000,
                     max_level: int = 12) -> RestrictedOrbit:
    """The G|_U orbit of ``point``, i.e. its G-orbit intersected with the open set U.

    A finite verdict is only given from a complete orbit search, or exactly
    for total translations of the line, whose orbit is a coset of the
    subgroup the steps generate.
    """
    if not U.contains(point):
        raise PointOutsideU(f"{point!r} is not in the restricting set")
    if (isinstance(U, IntervalSet) and len(gens) > 0
            and all(isinstance(g, TranslationGenerator) and g.domain is FULL for g in gens)
            and any(g.step for g in gens)):
        return _line_restricted_orbit(gens, U, point)
    graph = orbit_bfs(gens, point, max_nodes, max_level)
    inside = [n for n in graph.nodes if U.contains(n)]
    verdict = OrbitVerdict.FINITE if graph.complete else OrbitVerdict.UNKNOWN_AT_BOUND
    return RestrictedOrbit(inside, verdict, "orbit-search", graph)


# -----------------------------
# Symbolic partial maps
# -----------------------------
@dataclass(frozen=True)
class PartialMap:
    """A piecewise-affine map restricted to ``domain``."""

    domain: Region
    rule: PiecewiseAffine
    label: str = ""

    def __call__(self, p) -> Optional[TorusPoint]:
        if not self.domain.contains(p):
            return None
        return self.rule(p)

    def restrict(self, region: Region) -> "PartialMap":
        return restrict(self, region)

    def inverse(self) -> "PartialMap":
        return invert(self)

    def then(self, other: "PartialMap") -> "PartialMap":
        """``other`` after ``self``."""
        return compose(other, self)

    def to_dict(self) -> dict:
        return {"label": self.label, "domain": self.domain.to_dict(), "rule": self.rule.to_dict()}


def partial_map(domain: Region, rule, label: str = "") -> PartialMap:
    rule = flatten_rule(rule)
    return PartialMap(domain, rule, label or rule.label)


def restrict(pm: PartialMap, region: Region) -> PartialMap:
    return PartialMap(intersection(pm.domain, region), pm.rule, pm.label)


def compose(g: PartialMap, f: PartialMap) -> PartialMap:
    """g after f with dom = f^-1(dom g) inside dom f, computed region by region."""
    pieces = []
    for pf in f.rule.pieces:
        if not is_integer_matrix(pf.matrix):
            raise UnsupportedRegion("composition through a rational shear")
        base = intersection(pf.region, f.domain)
        if base is EMPTY:
            continue
        for pg in g.rule.pieces:
            target = intersection(pg.region, g.domain)
            if target is EMPTY:
                continue
            region = intersection(base, target.preimage(pf.matrix, pf.offset))
            if region is EMPTY:
                continue
            matrix = mat_mul(pg.matrix, pf.matrix)
            moved = mat_vec(pg.matrix, pf.offset)
            pieces.append(AffinePiece(region, matrix, (moved[0] + pg.offset[0], moved[1] + pg.offset[1]),
                                      label=f"{pg.label}*{pf.label}"))
    domain = union(*(p.region for p in pieces))
    return PartialMap(domain, PiecewiseAffine(pieces, f"{g.label}*{f.label}"), f"{g.label}*{f.label}")


def invert(pm: PartialMap) -> PartialMap:
    pieces = []
    for pc in pm.rule.pieces:
        restricted = AffinePiece(intersection(pc.region, pm.domain), pc.matrix, pc.offset,
                                 pc.anchor, pc.label, pc.invariant and pm.domain is FULL)
        if restricted.region is EMPTY:
            continue
        pieces.append(restricted.inverse())
    label = _inverse_label(pm.label)
    return PartialMap(union(*(p.region for p in pieces)), PiecewiseAffine(pieces, label), label)


def _sample_count(pa: AffinePiece, pb: AffinePiece) -> int:
    # agreement of two affine pieces near a point lies on at most spread + 1
    # lines per affine cell, each meeting at most two sample points
    spread = sum(abs(u - v) for ra, rb in zip(pa.matrix, pb.matrix) for u, v in zip(ra, rb))
    return 8 * (ceil(spread) + 1) + 1


def find_disagreement(a: PartialMap, b: PartialMap) -> Optional[TorusPoint]:
    """A point of dom a and dom b where the two maps differ, or None when they agree.

    Each pair of pieces with different actions is checked cell by cell on
    its exact overlap (see ``overlap_points``).
    """
    for pa in a.rule.pieces:
        for pb in b.rule.pieces:
            if pa.same_action(pb):
                continue
            overlap = intersection(pa.region, a.domain, pb.region, b.domain)
            if overlap is EMPTY:
                continue
            anchors = [pc.anchor for pc in (pa, pb) if pc.anchor is not None and not is_integer_matrix(pc.matrix)]
            for p in overlap_points(overlap, _sample_count(pa, pb),
                                    extra_x=[an[0] for an in anchors], extra_y=[an[1] for an in anchors]):
                if pa.image(p) != pb.image(p):
                    return p
    return None


def combine(maps: Sequence[PartialMap]) -> PartialMap:
    """The map equal to each input on its domain, if they agree on every overlap."""
    maps = list(maps)
    for i in range(len(maps)):
        for j in range(i + 1, len(maps)):
            witness = find_disagreement(maps[i], maps[j])
            if witness is not None:
                raise CompatibilityError(
                    f"{maps[i].label or 'map %d' % i} and {maps[j].label or 'map %d' % j} "
                    f"disagree at {witness!r}",
                    witness,
                )
    pieces = [pc.restricted(m.domain) for m in maps for pc in m.rule.pieces]
    pieces = [pc for pc in pieces if pc.region is not EMPTY]
    label = " + ".join(m.label for m in maps if m.label)
    return PartialMap(union(*(m.domain for m in maps)), PiecewiseAffine(pieces, label), label)


def word_germ(gens: GeneratorSet, word: Word, center, r_sq) -> Optional[PartialMap]:
    """The affine map ``word`` induces on the open ball B(center, sqrt r_sq).

    Returns ``None`` unless ball transport certifies that the whole ball stays
    inside the domains and single pieces along the word. Only one torus level
    is supported.
    """
    r_sq = Quad.of(r_sq)
    ball_center, radius = center, r_sq
    matrix, offset = IDENTITY, ZERO_OFFSET
    for gid, e in word:
        step = gens[gid].transport(ball_center, radius, e)
        if step.status != INSIDE:
            return None
        if step.center.level != center.level:
            raise UnsupportedRegion("germs across levels are not partial maps of one torus")
        moved = mat_vec(step.matrix, offset)
        offset = (moved[0] + step.offset[0], moved[1] + step.offset[1])
        matrix = mat_mul(step.matrix, matrix)
        ball_center, radius = step.center, step.r_sq
    domain = Ball(torus_part(center), r_sq, closed=False)
    piece = AffinePiece(FULL, matrix, offset, label=str(word))
    return PartialMap(domain, PiecewiseAffine([piece], str(word)), f"germ[{word}]")


# -----------------------------
# Compact generation
# -----------------------------
@dataclass
class CompactGenSystem:
    """(U, F, F~): generators F with domains in U and extensions F~ whose
    domains contain the closures of the domains of F."""

    U: Region
    F: GeneratorSet
    Ftilde: GeneratorSet
    pairing: Dict[str, str]
    label: str = ""

    def __post_init__(self):
        if set(self.pairing) != set(self.F.ids):
            raise BadParams("pairing must cover every generator of F")
        if sorted(self.pairing.values()) != sorted(self.Ftilde.ids):
            raise BadParams("pairing must be a bijection onto F~")

    def extension(self, gid: str) -> Generator:
        return self.Ftilde[self.pairing[gid]]

    def extend_word(self, word: Word) -> Word:
        return Word(tuple((self.pairing[g], e) for g, e in word))


def _domains_by_level(gen: Generator) -> Dict[int, Region]:
    if isinstance(gen, TorusGenerator):
        return {lv: gen.domain_at(lv) for lv in gen.levels}
    if isinstance(gen, TranslationGenerator):
        return {0: gen.domain}
    raise UnsupportedRegion(f"no region domains for {gen.kind} generators")


def sigma_of_system(system: CompactGenSystem) -> Quad:
    """Squared halo margin: min over f in F of inf over dom f of the squared
    distance to the complement of dom f~. Forward domains only."""
    best = QUAD_INF
    for f in system.F:
        ext = system.extension(f.gid)
        inner = _domains_by_level(f)
        outer = _domains_by_level(ext)
        for level, region in inner.items():
            margin = containment_margin_sq(region, outer.get(level, EMPTY))
            if quad_cmp(margin, best) < 0:
                best = margin
    return best
