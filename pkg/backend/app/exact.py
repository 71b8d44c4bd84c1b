"""
Exact scalars and points for the flat 2-torus.

Rationals are plain ``fractions.Fraction`` values. Circle coordinates are
Fractions reduced into [0, 1). ``Quad`` is the field Q(sqrt 2), used for
squared radii so that radius comparisons never need a square root.
"""

import functools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import ClassVar, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

Rat = Fraction
RatLike = Union[int, str, Fraction]

# Precision (in bits) of the rational enclosures used where a value leaves Q(sqrt 2).
BOUND_BITS = 64


def rat(value: RatLike) -> Fraction:
    """Parse ``"p/q"``, ints, Fractions (and decimal strings) into a Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        raise TypeError("refusing to build an exact rational from a float")
    return Fraction(value)


def rat_to_str(value: Fraction) -> str:
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


def mod_one(value: RatLike) -> Fraction:
    """Reduce a rational into [0, 1)."""
    value = rat(value)
    return value - math.floor(value)


def circle_gap(a: Fraction, b: Fraction) -> Fraction:
    """Distance between two points of R/Z, a value in [0, 1/2]."""
    d = mod_one(a - b)
    return min(d, 1 - d)


# -----------------------------
# Square-root enclosures
# -----------------------------
def sqrt_floor(value: Fraction, bits: int = BOUND_BITS) -> Fraction:
    """Largest multiple of 2**-bits that is <= sqrt(value)."""
    value = Fraction(value)
    if value < 0:
        raise ValueError("square root of a negative rational")
    scaled = (value.numerator << (2 * bits)) // value.denominator
    return Fraction(math.isqrt(scaled), 1 << bits)


def sqrt_ceil(value: Fraction, bits: int = BOUND_BITS) -> Fraction:
    lo = sqrt_floor(value, bits)
    if lo * lo == value:
        return lo
    return lo + Fraction(1, 1 << bits)


@functools.lru_cache(maxsize=None)
def sqrt2_bounds(bits: int = BOUND_BITS) -> Tuple[Fraction, Fraction]:
    """Enclosure of sqrt(2) by consecutive multiples of 2**-bits."""
    lo = sqrt_floor(Fraction(2), bits)
    return lo, lo + Fraction(1, 1 << bits)


@functools.total_ordering
@dataclass(frozen=True, eq=False)
class Quad:
    """The number a + b*sqrt(2), or +infinity when ``infinite`` is set."""

    a: Fraction = Fraction(0)
    b: Fraction = Fraction(0)
    infinite: bool = False

    def __post_init__(self):
        object.__setattr__(self, "a", rat(self.a))
        object.__setattr__(self, "b", rat(self.b))

    @classmethod
    def inf(cls) -> "Quad":
        return cls(0, 0, True)

    @classmethod
    def of(cls, value: Union["Quad", RatLike]) -> "Quad":
        if isinstance(value, Quad):
            return value
        return cls(rat(value), 0)

    @classmethod
    def root2(cls, coefficient: RatLike) -> "Quad":
        """coefficient * sqrt(2)"""
        return cls(0, rat(coefficient))

    @property
    def is_rational(self) -> bool:
        return not self.infinite and self.b == 0

    def sign(self) -> int:
        if self.infinite:
            return 1
        a, b = self.a, self.b
        if a >= 0 and b >= 0:
            return 0 if (a == 0 and b == 0) else 1
        if a <= 0 and b <= 0:
            return -1
        # Opposite signs: compare a^2 with 2 b^2; equality is impossible.
        if a > 0:
            return 1 if a * a > 2 * b * b else -1
        return 1 if 2 * b * b > a * a else -1

    def __add__(self, other):
        other = Quad.of(other)
        if self.infinite or other.infinite:
            return Quad.inf()
        return Quad(self.a + other.a, self.b + other.b)

    __radd__ = __add__

    def __neg__(self):
        if self.infinite:
            raise ArithmeticError("cannot negate +infinity")
        return Quad(-self.a, -self.b)

    def __sub__(self, other):
        return self + (-Quad.of(other))

    def __rsub__(self, other):
        return Quad.of(other) - self

    def __mul__(self, other):
        other = Quad.of(other)
        if self.infinite or other.infinite:
            if (self.infinite and other.sign() > 0) or (other.infinite and self.sign() > 0):
                return Quad.inf()
            raise ArithmeticError("+infinity times a non-positive value")
        return Quad(self.a * other.a + 2 * self.b * other.b,
                    self.a * other.b + self.b * other.a)

    __rmul__ = __mul__

    def __eq__(self, other):
        try:
            other = Quad.of(other)
        except (TypeError, ValueError):
            return NotImplemented
        if self.infinite or other.infinite:
            return self.infinite and other.infinite
        return self.a == other.a and self.b == other.b

    def __lt__(self, other):
        return quad_cmp(self, Quad.of(other)) < 0

    def __hash__(self):
        if self.infinite:
            return hash(("quad", "inf"))
        if self.b == 0:
            return hash(self.a)
        return hash((self.a, self.b))

    def __float__(self):
        if self.infinite:
            return math.inf
        return float(self.a) + float(self.b) * math.sqrt(2.0)

    def bounds(self, bits: int = BOUND_BITS) -> Tuple[Fraction, Fraction]:
        """Rational enclosure lo <= value <= hi."""
        if self.infinite:
            raise ArithmeticError("no rational enclosure of +infinity")
        root_lo, root_hi = sqrt2_bounds(bits)
        if self.b >= 0:
            return self.a + self.b * root_lo, self.a + self.b * root_hi
        return self.a + self.b * root_hi, self.a + self.b * root_lo

    def sqrt_bounds(self, bits: int = BOUND_BITS) -> Tuple[Fraction, Fraction]:
        """Rational enclosure of sqrt(value) for a non-negative value."""
        lo, hi = self.bounds(bits)
        return sqrt_floor(max(lo, Fraction(0)), bits), sqrt_ceil(hi, bits)

    def to_dict(self) -> dict:
        if self.infinite:
            return {"a": "inf", "b": "0/1"}
        return {"a": rat_to_str(self.a), "b": rat_to_str(self.b)}

    @classmethod
    def from_dict(cls, data: dict) -> "Quad":
        if data["a"] == "inf":
            return cls.inf()
        return cls(rat(data["a"]), rat(data["b"]))

    def __repr__(self):
        if self.infinite:
            return "Quad(inf)"
        return f"Quad({self.a} + {self.b}*sqrt2)"


QUAD_INF = Quad.inf()
QUAD_ZERO = Quad(0, 0)


def quad_cmp(u: Quad, v: Quad) -> int:
    """Exact three-way comparison: -1, 0 or 1."""
    u, v = Quad.of(u), Quad.of(v)
    if u.infinite or v.infinite:
        if u.infinite and v.infinite:
            return 0
        return 1 if u.infinite else -1
    return (u - v).sign()


def quad_min(values) -> Quad:
    best = QUAD_INF
    for value in values:
        value = Quad.of(value)
        if quad_cmp(value, best) < 0:
            best = value
    return best


@dataclass(frozen=True, order=True)
class TorusPoint:
    """A point of R^2/Z^2 with both coordinates reduced into [0, 1)."""

    x: Fraction
    y: Fraction

    space: ClassVar[str] = "torus"
    level: ClassVar[int] = 0

    def __post_init__(self):
        object.__setattr__(self, "x", mod_one(self.x))
        object.__setattr__(self, "y", mod_one(self.y))

    @classmethod
    def of(cls, x: RatLike, y: RatLike) -> "TorusPoint":
        return cls(rat(x), rat(y))

    def shifted(self, dx: RatLike, dy: RatLike) -> "TorusPoint":
        return TorusPoint(self.x + rat(dx), self.y + rat(dy))

    def to_float(self) -> Tuple[float, float]:
        return float(self.x), float(self.y)

    def sort_key(self):
        return (self.x, self.y)

    def to_dict(self) -> dict:
        return {"x": rat_to_str(self.x), "y": rat_to_str(self.y)}

    @classmethod
    def from_dict(cls, data: dict) -> "TorusPoint":
        return cls(rat(data["x"]), rat(data["y"]))

    def __repr__(self):
        return f"({self.x}, {self.y})"


def sq_dist(p: TorusPoint, q: TorusPoint) -> Fraction:
    """Squared flat distance on the torus; always rational for rational points."""
    dx = circle_gap(p.x, q.x)
    dy = circle_gap(p.y, q.y)
    return dx * dx + dy * dy


def sq_dist_float(x1, y1, x2, y2):
    """Float twin of ``sq_dist``; works elementwise on numpy arrays."""
    dx = np.abs(np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)) % 1.0
    dy = np.abs(np.asarray(y1, dtype=float) - np.asarray(y2, dtype=float)) % 1.0
    dx = np.minimum(dx, 1.0 - dx)
    dy = np.minimum(dy, 1.0 - dy)
    return dx * dx + dy * dy


def ball_test(p: TorusPoint, center: TorusPoint, r_sq: Quad, closed: bool = False) -> bool:
    r_sq = Quad.of(r_sq)
    if r_sq.sign() <= 0:
        raise ValueError("ball radius must be positive")
    c = quad_cmp(Quad.of(sq_dist(p, center)), r_sq)
    return c <= 0 if closed else c < 0


def operator_norm_sq_bound(matrix) -> Fraction:
    """Rational upper bound for the squared spectral norm of a 2x2 matrix.

    The largest eigenvalue of A^T A is (t + sqrt(t^2 - 4 det^2)) / 2 with
    t the squared Frobenius norm; the root is rounded up.
    """
    (a, b), (c, d) = matrix
    a, b, c, d = Fraction(a), Fraction(b), Fraction(c), Fraction(d)
    t = a * a + b * b + c * c + d * d
    det = a * d - b * c
    disc = t * t - 4 * det * det
    return (t + sqrt_ceil(max(disc, Fraction(0)))) / 2


def parse_point(text: str) -> TorusPoint:
    """Parse ``"x,y"`` with exact rational coordinates."""
    try:
        xs, ys = text.split(",")
        return TorusPoint.of(xs.strip(), ys.strip())
    except ValueError as exc:
        raise ValueError(f"not a torus point: {text!r}") from exc
