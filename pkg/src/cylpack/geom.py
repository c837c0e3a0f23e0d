"""Lines in R^3 and the distance formulas used by the constructions.

Three routes to the squared distance between two axes are provided and are
kept independent of each other:

* :func:`skew_distance_sq`, the generic ``(A1A2 . (v1 x v2))^2 / |v1 x v2|^2``
  formula on explicit lines,
* :func:`kuperberg_distance_sq`, the closed form for ring axes
  ``(x, y, 0) + t(y, -x, K d + L)`` in terms of (d1, d2, cos angle),
* :func:`shell_distance_sq`, the closed form for shell axes
  ``(x, y, 0) + t(y, -x, T)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from .numerics import (
    DEFAULT_PRECISION,
    AngleSpec,
    Interval,
    QuadSurd,
    UndecidableError,
    as_fraction,
    exact_sign,
    interval_cos,
    interval_sin,
    is_exact,
)

Exact = Union[int, Fraction, QuadSurd]
Scalar = Union[int, Fraction, QuadSurd, Interval]


class DenominatorError(ArithmeticError):
    """The denominator of a closed-form distance is not certifiably positive."""


# ---------------------------------------------------------------------------
# Vector helpers working on any scalar type with + - *


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0])


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _sq(x):
    return x.sqr() if isinstance(x, Interval) else x * x


def _norm_sq(a):
    return _sq(a[0]) + _sq(a[1]) + _sq(a[2])


def _is_zero_exact(x) -> bool:
    return exact_sign(x) == 0


@dataclass(frozen=True)
class Line3:
    """The line ``anchor + t * direction``."""

    anchor: tuple
    direction: tuple

    def __post_init__(self):
        if len(self.anchor) != 3 or len(self.direction) != 3:
            raise ValueError("Line3 needs 3-component anchor and direction")
        if self.is_exact() and all(_is_zero_exact(c) for c in self.direction):
            raise ValueError("direction must be nonzero")

    def is_exact(self) -> bool:
        return all(is_exact(c) for c in self.anchor + self.direction)

    def enclose(self, precision: int) -> "Line3":
        return Line3(tuple(Interval.from_value(c, precision) for c in self.anchor),
                     tuple(Interval.from_value(c, precision) for c in self.direction))

    def scaled(self, lam) -> "Line3":
        """The image of the line under x -> lam * x (the direction is kept)."""
        return Line3(tuple(lam * c for c in self.anchor), self.direction)


# ---------------------------------------------------------------------------
# Axes of the constructions


@dataclass(frozen=True)
class PolarAnchor:
    """Anchor ``norm * (cos angle, sin angle)`` on the exact angle grid."""

    norm: Fraction
    angle: AngleSpec


@dataclass(frozen=True)
class Axis:
    """The line ``(x, y, 0) + t (y, -x, H)``.

    ``anchor`` is either an exact pair (x, y) or a :class:`PolarAnchor`.
    """

    anchor: Union[tuple, PolarAnchor]
    H: Exact

    def __post_init__(self):
        if exact_sign(self.H) <= 0:
            raise ValueError("height coefficient H must be positive")
        if isinstance(self.anchor, PolarAnchor):
            if self.anchor.norm <= 0:
                raise ValueError("anchor norm must be positive")
        elif len(self.anchor) != 2:
            raise ValueError("anchor must be a pair or a PolarAnchor")

    @classmethod
    def polar(cls, norm, angle: AngleSpec, H) -> "Axis":
        return cls(PolarAnchor(as_fraction(norm), angle), H)

    def is_exact(self) -> bool:
        return not isinstance(self.anchor, PolarAnchor) or self.anchor.angle.j == 0

    def xy(self, precision: int = DEFAULT_PRECISION):
        if isinstance(self.anchor, PolarAnchor):
            a = self.anchor
            if a.angle.j == 0:
                return a.norm, Fraction(0)
            return (interval_cos(a.angle, precision) * a.norm,
                    interval_sin(a.angle, precision) * a.norm)
        return self.anchor

    def norm_sq(self, precision: int = DEFAULT_PRECISION):
        if isinstance(self.anchor, PolarAnchor):
            return self.anchor.norm ** 2
        x, y = self.anchor
        return x * x + y * y

    def line(self, precision: int = DEFAULT_PRECISION) -> Line3:
        x, y = self.xy(precision)
        return Line3((x, y, 0), (y, -x, self.H))

    def exact_line(self) -> Optional[Line3]:
        if not self.is_exact():
            return None
        return self.line()

    def scaled(self, lam) -> "Axis":
        """Axis of the set lam * line: anchor scaled by lam, H scaled by lam."""
        lam = as_fraction(lam)
        if isinstance(self.anchor, PolarAnchor):
            return Axis(PolarAnchor(self.anchor.norm * lam, self.anchor.angle), self.H * lam)
        x, y = self.anchor
        return Axis((x * lam, y * lam), self.H * lam)


# ---------------------------------------------------------------------------
# Generic distance


def skew_distance_sq_exact(l1: Line3, l2: Line3):
    """Exact squared distance for lines with exact components."""
    if not (l1.is_exact() and l2.is_exact()):
        raise TypeError("exact distance needs exact line components")
    d = _sub(l2.anchor, l1.anchor)
    w = _cross(l1.direction, l2.direction)
    n2 = _norm_sq(w)
    if _is_zero_exact(n2):
        # parallel: distance from anchor 2 to line 1
        v = l1.direction
        return _norm_sq(_cross(d, v)) / _norm_sq(v)
    return _sq(_dot(d, w)) / n2


def planar_pair_lines(d1, d2, c, H1, H2, sine=None, precision: int = DEFAULT_PRECISION):
    """Axes through (d1, 0, 0) and (d2 c, d2 s, 0), s = sqrt(1 - c^2).

    Directions are (y, -x, H).  With an exact ``sine`` the lines are exact;
    otherwise s is enclosed and the lines carry Interval components.
    """
    if sine is None:
        from .numerics import interval_sqrt
        sine = interval_sqrt(Interval.from_value(1 - as_fraction(c) ** 2, precision + 8), precision)
    elif exact_sign(sine * sine + c * c - 1) != 0:
        raise ValueError("sine and cosine are inconsistent")
    x2, y2 = d2 * c, d2 * sine
    l1 = Line3((d1, 0, 0), (0, -d1, H1))
    l2 = Line3((x2, y2, 0), (y2, -x2, H2))
    return l1, l2


def pythagorean_angle(m: int, n: int) -> tuple[Fraction, Fraction]:
    """(cos, sin) = ((m^2 - n^2), 2mn) / (m^2 + n^2), both rational."""
    q = m * m + n * n
    return Fraction(m * m - n * n, q), Fraction(2 * m * n, q)


def _pointline_sq(l1: Line3, l2: Line3):
    d = _sub(l2.anchor, l1.anchor)
    v = l1.direction
    return _norm_sq(_cross(d, v)) / _norm_sq(v)


def skew_distance_sq(l1: Line3, l2: Line3, precision: int = DEFAULT_PRECISION) -> Interval:
    """Enclosure of the squared distance between two lines.

    Exact inputs are evaluated exactly and then enclosed, so the result is
    as tight as the precision allows and parallel lines are recognised.
    For interval inputs, if the cross product cannot be separated from zero
    the enclosure falls back to ``[0, point-to-line distance]``, which is
    valid because the line distance never exceeds the distance from a
    point of one line to the other line.
    """
    if l1.is_exact() and l2.is_exact():
        return Interval.from_value(skew_distance_sq_exact(l1, l2), precision)
    a = l1.enclose(precision)
    b = l2.enclose(precision)
    d = _sub(b.anchor, a.anchor)
    w = _cross(a.direction, b.direction)
    n2 = _norm_sq(w)
    if n2.lo > 0:
        return _sq(_dot(d, w)) / n2
    hi = _pointline_sq(a, b).upper()
    return Interval.from_bounds(0, hi, precision)


def are_parallel(l1: Line3, l2: Line3, max_precision: int = 1024) -> bool:
    """True iff the directions are scalar multiples.

    Exact components are decided exactly.  Interval components are decided
    when the cross-product norm is certified positive; otherwise the
    precision is doubled up to max_precision and UndecidableError is raised.
    """
    if l1.is_exact() and l2.is_exact():
        return _is_zero_exact(_norm_sq(_cross(l1.direction, l2.direction)))
    p = DEFAULT_PRECISION
    while p <= max_precision:
        n2 = _norm_sq(_cross(l1.enclose(p).direction, l2.enclose(p).direction))
        if n2.lo > 0:
            return False
        p *= 2
    raise UndecidableError("are_parallel: undecidable at max precision")


def axes_parallel(a1: Axis, a2: Axis, max_precision: int = 1024) -> bool:
    """Parallel test for axes, using exact arithmetic where the anchors allow it.

    Two Axis directions (y1, -x1, H1), (y2, -x2, H2) are parallel iff
    anchor2 = (H2/H1) anchor1, which only involves norms and angles.
    """
    if a1.is_exact() and a2.is_exact():
        return are_parallel(a1.line(), a2.line())
    if isinstance(a1.anchor, PolarAnchor) and isinstance(a2.anchor, PolarAnchor):
        p1, p2 = a1.anchor, a2.anchor
        same_angle = p1.angle.value == p2.angle.value
        if not same_angle:
            # distinct grid angles in [0, 2*pi) are never equal; the anchors are
            # not positive multiples of one another
            return False
        return p2.norm * a1.H == p1.norm * a2.H
    return are_parallel(a1.line(), a2.line(), max_precision)


# ---------------------------------------------------------------------------
# Closed forms


def _iv(x, precision):
    return Interval.from_value(x, precision)


def kuperberg_distance_sq(d1, d2, c, K, L, precision: int = DEFAULT_PRECISION) -> Interval:
    """Squared distance between ring axes of norms d1, d2 and angle cosine c.

    Closed form with gamma = K d1 + K d2 + 2L and u = 1 - c::

        num = u^2 d1^2 d2^2 gamma^2 + 2 L u d1 d2 gamma (d2-d1)^2 + L^2 (d2-d1)^4
        den = -u^2 d1^2 d2^2 + 2 u d1 d2 [L^2 (1 + d1 d2) + K L (d1 + d2)] + L^2 (d2-d1)^2

    When every argument is exact the result is computed exactly and then
    enclosed.
    """
    if all(is_exact(v) for v in (d1, d2, c, K, L)):
        return Interval.from_value(kuperberg_distance_sq_exact(d1, d2, c, K, L), precision)
    d1, d2, c, K, L = (_iv(v, precision) for v in (d1, d2, c, K, L))
    u = 1 - c
    P = d1 * d2
    g2 = (d2 - d1).sqr()
    gamma = K * (d1 + d2) + 2 * L
    num = u.sqr() * P.sqr() * gamma.sqr() + 2 * L * u * P * gamma * g2 + L.sqr() * g2.sqr()
    den = (-(u.sqr() * P.sqr()) + 2 * u * P * (L.sqr() * (1 + P) + K * L * (d1 + d2))
           + L.sqr() * g2)
    if den.lo <= 0:
        if num.hi == 0:
            return Interval.from_value(0, precision)
        raise DenominatorError("denominator nonpositive")
    return num / den


def _exact_args(*xs):
    return tuple(x if isinstance(x, QuadSurd) else as_fraction(x) for x in xs)


def kuperberg_distance_sq_exact(d1, d2, c, K, L):
    d1, d2, c, K, L = _exact_args(d1, d2, c, K, L)
    u = 1 - c
    P = d1 * d2
    g2 = (d2 - d1) * (d2 - d1)
    gamma = K * (d1 + d2) + 2 * L
    num = u * u * P * P * gamma * gamma + 2 * L * u * P * gamma * g2 + L * L * g2 * g2
    den = -(u * u * P * P) + 2 * u * P * (L * L * (1 + P) + K * L * (d1 + d2)) + L * L * g2
    if exact_sign(den) <= 0:
        if exact_sign(num) == 0:
            return Fraction(0)
        raise DenominatorError("denominator nonpositive")
    return num / den


def shell_distance_sq(d1, d2, c, T1, T2, precision: int = DEFAULT_PRECISION) -> Interval:
    """Squared distance between shell axes with heights T1, T2::

        (d1^2 T2 + d2^2 T1 - (T1 + T2) d1 d2 c)^2
        / ((1 - c^2) d2^2 (d1^2 + T1^2) + (d1 T2 - c T1 d2)^2)
    """
    if all(is_exact(v) for v in (d1, d2, c, T1, T2)):
        return Interval.from_value(shell_distance_sq_exact(d1, d2, c, T1, T2), precision)
    d1, d2, c, T1, T2 = (_iv(v, precision) for v in (d1, d2, c, T1, T2))
    num = (d1.sqr() * T2 + d2.sqr() * T1 - (T1 + T2) * d1 * d2 * c).sqr()
    den = (1 - c.sqr()) * d2.sqr() * (d1.sqr() + T1.sqr()) + (d1 * T2 - c * T1 * d2).sqr()
    if den.lo <= 0:
        if num.hi == 0:
            return Interval.from_value(0, precision)
        raise DenominatorError("denominator nonpositive")
    return num / den


def shell_distance_sq_exact(d1, d2, c, T1, T2):
    d1, d2, c, T1, T2 = _exact_args(d1, d2, c, T1, T2)
    num = d1 * d1 * T2 + d2 * d2 * T1 - (T1 + T2) * d1 * d2 * c
    num = num * num
    e = d1 * T2 - c * T1 * d2
    den = (1 - c * c) * d2 * d2 * (d1 * d1 + T1 * T1) + e * e
    if exact_sign(den) <= 0:
        if exact_sign(num) == 0:
            return Fraction(0)
        raise DenominatorError("denominator nonpositive")
    return num / den


# ---------------------------------------------------------------------------
# The Delta decomposition of "dist^2 >= 1"


@dataclass(frozen=True)
class DeltaReport:
    """Outcome of :func:`delta_terms` for one variant of the Delta display."""

    variant: str
    delta: object
    delta_tilde: object
    delta_tilde2: object
    identity_holds: Optional[bool]
    sign_delta: Optional[int]
    dist_ge_1: Optional[bool]
    consistent: Optional[bool]
    matches_difference: Optional[bool]

    @property
    def discrepancy(self) -> bool:
        return (self.consistent is False or self.identity_holds is False
                or self.matches_difference is False)


DELTA_VARIANTS = ("printed", "corrected")


def _delta_parts(d1, d2, c, K, L, variant: str):
    if variant not in DELTA_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    u = 1 - c
    P = d1 * d2
    S = d1 + d2
    g2 = (d2 - d1) * (d2 - d1)
    gamma = K * S + 2 * L
    # the printed display repeats 2 d1^2 where the symmetric form has 2 d2^2
    last = d1 if variant == "printed" else d2
    quad = 2 * d1 * d1 - 5 * d1 * d2 + 2 * last * last - 1
    delta = (u * u * P * P * (1 + gamma * gamma) + L * L * g2 * (g2 - 1)
             + 2 * u * P * (K * L * S * (g2 - 1) + L * L * quad))
    dt = u * P * (1 + gamma * gamma) + 2 * L * L * quad
    dtt = (L * L * g2 / (u * P) + 2 * K * L * S) * (g2 - 1)
    return delta, dt, dtt, u * P


def _sign_of(x) -> Optional[int]:
    if isinstance(x, Interval):
        return x.sign()
    return exact_sign(x)


def delta_terms(d1, d2, c, K, L, variant: str = "printed",
                precision: int = DEFAULT_PRECISION) -> DeltaReport:
    """Evaluate (Delta, Delta~, Delta~~) and cross-check them.

    ``variant="printed"`` reproduces the display literally, including the
    repeated ``2 d1^2`` term; ``variant="corrected"`` uses ``2 d2^2``.  The
    report carries the identity check Delta = (1-c) d1 d2 (Delta~ + Delta~~)
    and compares sign(Delta) with ``dist^2 >= 1`` from
    :func:`kuperberg_distance_sq`.  Disagreements are reported, not raised.
    """
    d1 = as_fraction(d1) if isinstance(d1, (int, str)) else d1
    d2 = as_fraction(d2) if isinstance(d2, (int, str)) else d2
    if d1 == d2:
        raise ValueError("delta_terms needs d1 != d2")
    exact = all(is_exact(v) for v in (d1, d2, c, K, L))
    args = (d1, d2, c, K, L) if exact else tuple(_iv(v, precision) for v in (d1, d2, c, K, L))
    delta, dt, dtt, uP = _delta_parts(*args, variant)
    # dist^2 - 1 = (num - den) / den, so Delta should equal num - den
    diff = _num_minus_den(*args)
    if exact:
        matches = (delta - diff) == 0
        identity = (delta - uP * (dt + dtt)) == 0
        dist = kuperberg_distance_sq_exact(d1, d2, c, K, L)
        dist_ge_1 = exact_sign(dist - 1) >= 0
    else:
        resid = delta - uP * (dt + dtt)
        identity = True if 0 in resid else False
        matches = True if 0 in (delta - diff) else False
        dist = kuperberg_distance_sq(d1, d2, c, K, L, precision)
        s = (dist - 1).sign()
        dist_ge_1 = None if s is None else s >= 0
    sd = _sign_of(delta)
    consistent = None if (sd is None or dist_ge_1 is None) else ((sd >= 0) == dist_ge_1)
    return DeltaReport(variant, delta, dt, dtt, identity, sd, dist_ge_1, consistent, matches)


def _num_minus_den(d1, d2, c, K, L):
    u = 1 - c
    P = d1 * d2
    g2 = (d2 - d1) * (d2 - d1)
    gamma = K * (d1 + d2) + 2 * L
    num = u * u * P * P * gamma * gamma + 2 * L * u * P * gamma * g2 + L * L * g2 * g2
    den = -(u * u * P * P) + 2 * u * P * (L * L * (1 + P) + K * L * (d1 + d2)) + L * L * g2
    return num - den
