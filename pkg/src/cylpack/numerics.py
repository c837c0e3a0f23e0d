"""Exact scalars and outward-rounded interval arithmetic.

Three kinds of numbers flow through the package:

* ``Fraction`` for exact rationals (norms, ratios, epsilon, the sequences
  ``a_k`` and ``T_k``),
* :class:`QuadSurd` for exact elements ``a + b*sqrt(d)`` of a real quadratic
  field (``K = sqrt(L^2 - 1)``, hexagonal lattice coordinates),
* :class:`Interval` for everything irrational beyond that (cosines of grid
  angles, square roots, pi).

Interval endpoints are dyadic rationals ``m * 2**e`` with at most ``prec``
bits of mantissa.  Every operation rounds the lower endpoint down and the
upper endpoint up, so the result always contains the exact value.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Union

DEFAULT_PRECISION = 64
MIN_PRECISION = 24

Rational = Fraction


class IntervalError(ArithmeticError):
    pass


class DomainError(IntervalError):
    pass


class UndecidableError(IntervalError):
    """An interval test could not be decided at the available precision."""


def as_fraction(x) -> Fraction:
    """Parse ``"num/den"`` strings, ints and Fractions into a Fraction.

    Decimal strings are rejected on purpose: command-line rationals must be
    written exactly.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        s = x.strip()
        if re.fullmatch(r"[+-]?\d+(/\d+)?", s):
            return Fraction(s)
        raise ValueError(f"not an exact rational: {x!r} (write it as num/den)")
    if isinstance(x, float):
        return Fraction(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Fraction")


def format_fraction(q: Fraction) -> str:
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _squarefree_split(n: int) -> tuple[int, int]:
    """Return (s, f) with n = s**2 * f and f squarefree."""
    s, f = 1, 1
    p = 2
    while p * p <= n:
        while n % (p * p) == 0:
            n //= p * p
            s *= p
        if n % p == 0:
            n //= p
            f *= p
        p += 1
    return s, f * n


# ---------------------------------------------------------------------------
# Quadratic surds


class QuadSurd:
    """Exact real number ``a + b*sqrt(d)`` with rational a, b and squarefree d > 1."""

    __slots__ = ("a", "b", "d")

    def __init__(self, a, b=0, d: int = 2):
        self.a = as_fraction(a)
        self.b = as_fraction(b)
        if d < 2:
            raise ValueError("d must be a squarefree integer > 1")
        self.d = d

    @classmethod
    def sqrt(cls, q) -> Union["QuadSurd", Fraction]:
        """Exact square root of a nonnegative rational."""
        q = as_fraction(q)
        if q < 0:
            raise DomainError("square root of a negative rational")
        num = q.numerator * q.denominator
        s, f = _squarefree_split(num)
        coef = Fraction(s, q.denominator)
        if f == 1:
            return coef
        return cls(0, coef, f)

    # exactness helpers -------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, QuadSurd):
            if other.d != self.d:
                raise TypeError("QuadSurd operands from different fields")
            return other
        if isinstance(other, (int, Fraction)):
            return QuadSurd(other, 0, self.d)
        return None

    def simplify(self):
        return self.a if self.b == 0 else self

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return QuadSurd(self.a + o.a, self.b + o.b, self.d).simplify()

    __radd__ = __add__

    def __neg__(self):
        return QuadSurd(-self.a, -self.b, self.d)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return QuadSurd(self.a - o.a, self.b - o.b, self.d).simplify()

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o - self

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return QuadSurd(self.a * o.a + self.d * self.b * o.b,
                        self.a * o.b + self.b * o.a, self.d).simplify()

    __rmul__ = __mul__

    def conjugate(self):
        return QuadSurd(self.a, -self.b, self.d)

    def norm(self) -> Fraction:
        return self.a * self.a - self.d * self.b * self.b

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        n = o.norm()
        if n == 0:
            raise ZeroDivisionError("division by zero QuadSurd")
        num = self * o.conjugate()
        if not isinstance(num, QuadSurd):
            return num / n
        return QuadSurd(num.a / n, num.b / n, self.d).simplify()

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o / self

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            return NotImplemented
        result = QuadSurd(1, 0, self.d)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def sign(self) -> int:
        sa = (self.a > 0) - (self.a < 0)
        sb = (self.b > 0) - (self.b < 0)
        if sb == 0:
            return sa
        if sa == 0 or sa == sb:
            return sb
        # opposite signs: compare a^2 with d*b^2
        diff = self.a * self.a - self.d * self.b * self.b
        return sa if diff > 0 else (sb if diff < 0 else 0)

    def _cmp(self, other) -> int:
        return _sign(self - other)

    def __eq__(self, other):
        try:
            o = self._coerce(other)
        except TypeError:
            return False
        if o is None:
            return NotImplemented
        return self.a == o.a and self.b == o.b

    def __hash__(self):
        return hash((self.a, self.b, self.d))

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __abs__(self):
        return -self if self.sign() < 0 else self

    def __float__(self):
        return float(self.to_interval(80).mid())

    def to_interval(self, prec: int = DEFAULT_PRECISION) -> "Interval":
        r = interval_sqrt(Interval.from_value(self.d, prec + 8))
        return (Interval.from_value(self.a, prec + 8) + r * self.b).round(prec)

    def __str__(self):
        return f"{format_fraction(self.a)}+{format_fraction(self.b)}*sqrt({self.d})"

    def __repr__(self):
        return f"QuadSurd({self})"

    @classmethod
    def parse(cls, s: str) -> "QuadSurd":
        m = re.fullmatch(r"\s*([+-]?\d+(?:/\d+)?)\+([+-]?\d+(?:/\d+)?)\*sqrt\((\d+)\)\s*", s)
        if not m:
            raise ValueError(f"not a surd literal: {s!r}")
        return cls(Fraction(m.group(1)), Fraction(m.group(2)), int(m.group(3)))


def _sign(x) -> int:
    if isinstance(x, QuadSurd):
        return x.sign()
    return (x > 0) - (x < 0)


def exact_sign(x) -> int:
    """Sign of an exact scalar (int, Fraction, QuadSurd)."""
    return _sign(x)


def parse_scalar(s: str):
    """Inverse of :func:`format_scalar`."""
    return QuadSurd.parse(s) if "sqrt" in s else as_fraction(s)


def format_scalar(x) -> str:
    if isinstance(x, QuadSurd):
        return str(x)
    return format_fraction(as_fraction(x))


def is_exact(x) -> bool:
    return isinstance(x, (int, Fraction, QuadSurd))


# ---------------------------------------------------------------------------
# Dyadic intervals


def _shift_floor(m: int, s: int) -> int:
    return m >> s


def _shift_ceil(m: int, s: int) -> int:
    return -((-m) >> s)


class Interval:
    """Closed interval ``[lo * 2**exp, hi * 2**exp]`` with integer mantissas.

    Instances are treated as immutable.  Mixed arithmetic with ints,
    Fractions and QuadSurds converts the exact operand to an enclosure at the
    interval's precision.
    """

    __slots__ = ("lo", "hi", "exp", "prec")

    def __init__(self, lo: int, hi: int, exp: int = 0, prec: int = DEFAULT_PRECISION):
        if lo > hi:
            raise ValueError("empty interval")
        self.lo = lo
        self.hi = hi
        self.exp = exp
        self.prec = prec

    # construction --------------------------------------------------------
    @staticmethod
    def _make(lo: int, hi: int, exp: int, prec: int) -> "Interval":
        m = max(abs(lo), abs(hi))
        bl = m.bit_length()
        if bl > prec:
            s = bl - prec
            lo >>= s
            hi = -((-hi) >> s)
            exp += s
        elif m == 0:
            exp = 0
        obj = Interval.__new__(Interval)
        obj.lo = lo
        obj.hi = hi
        obj.exp = exp
        obj.prec = prec
        return obj

    @classmethod
    def from_fraction(cls, q: Fraction, prec: int = DEFAULT_PRECISION) -> "Interval":
        n, d = q.numerator, q.denominator
        if d & (d - 1) == 0:  # dyadic
            e = -(d.bit_length() - 1)
            return cls._make(n, n, e, prec)
        # scale so that the quotient carries prec + 2 bits
        s = prec + 2 - (abs(n).bit_length() - d.bit_length())
        if s >= 0:
            num, den = n << s, d
        else:
            num, den = n, d << (-s)
        lo = num // den
        hi = -((-num) // den)
        return cls._make(lo, hi, -s, prec)

    @classmethod
    def from_value(cls, x, prec: int = DEFAULT_PRECISION) -> "Interval":
        if isinstance(x, Interval):
            return x if x.prec == prec else x.round(prec)
        if isinstance(x, int):
            return cls._make(x, x, 0, prec)
        if isinstance(x, Fraction):
            return cls.from_fraction(x, prec)
        if isinstance(x, QuadSurd):
            return x.to_interval(prec)
        if isinstance(x, float):
            return cls.from_fraction(Fraction(x), prec)
        raise TypeError(f"cannot convert {type(x).__name__} to Interval")

    @classmethod
    def from_bounds(cls, lo, hi, prec: int = DEFAULT_PRECISION) -> "Interval":
        a = cls.from_value(lo, prec)
        b = cls.from_value(hi, prec)
        return a.hull(b)

    def round(self, prec: int) -> "Interval":
        return Interval._make(self.lo, self.hi, self.exp, prec)

    # accessors -----------------------------------------------------------
    def lower(self) -> Fraction:
        return _dyadic(self.lo, self.exp)

    def upper(self) -> Fraction:
        return _dyadic(self.hi, self.exp)

    def mid(self) -> Fraction:
        return _dyadic(self.lo + self.hi, self.exp - 1)

    def width(self) -> Fraction:
        return _dyadic(self.hi - self.lo, self.exp)

    def rad(self) -> Fraction:
        return _dyadic(self.hi - self.lo, self.exp - 1)

    def is_point(self) -> bool:
        return self.lo == self.hi

    def __contains__(self, x) -> bool:
        if isinstance(x, Interval):
            return self.lower() <= x.lower() and x.upper() <= self.upper()
        if isinstance(x, QuadSurd):
            return x >= self.lower() and x <= self.upper()
        q = as_fraction(x)
        return self.lower() <= q <= self.upper()

    def overlaps(self, other: "Interval") -> bool:
        return self.lower() <= other.upper() and other.lower() <= self.upper()

    def to_floats(self) -> tuple[float, float]:
        """Rigorous float64 enclosure (lo rounded down, hi rounded up)."""
        return float_down(self.lower()), float_up(self.upper())

    def __float__(self):
        return float(self.mid())

    def sign(self):
        """+1 / -1 if certified, 0 if exactly zero, None if undecided."""
        if self.lo > 0:
            return 1
        if self.hi < 0:
            return -1
        if self.lo == 0 and self.hi == 0:
            return 0
        return None

    # set operations ------------------------------------------------------
    def _aligned(self, other: "Interval"):
        e = min(self.exp, other.exp)
        return (self.lo << (self.exp - e), self.hi << (self.exp - e),
                other.lo << (other.exp - e), other.hi << (other.exp - e), e)

    def hull(self, other) -> "Interval":
        other = self._coerce(other)
        a0, a1, b0, b1, e = self._aligned(other)
        return Interval._make(min(a0, b0), max(a1, b1), e, max(self.prec, other.prec))

    def intersect(self, other) -> Union["Interval", None]:
        other = self._coerce(other)
        a0, a1, b0, b1, e = self._aligned(other)
        lo, hi = max(a0, b0), min(a1, b1)
        if lo > hi:
            return None
        return Interval._make(lo, hi, e, max(self.prec, other.prec))

    def clamp(self, lo=None, hi=None) -> "Interval":
        """Intersect with [lo, hi]; raise DomainError when disjoint."""
        r = self
        if lo is not None and r.lower() < lo:
            r = r.intersect(Interval.from_bounds(lo, max(as_fraction(lo), r.upper()), r.prec))
            if r is None:
                raise DomainError("interval lies below the clamp range")
        if hi is not None and r.upper() > hi:
            r = r.intersect(Interval.from_bounds(min(as_fraction(hi), r.lower()), hi, r.prec))
            if r is None:
                raise DomainError("interval lies above the clamp range")
        return r

    # arithmetic ----------------------------------------------------------
    def _coerce(self, other) -> "Interval":
        if isinstance(other, Interval):
            return other
        return Interval.from_value(other, self.prec)

    def __add__(self, other):
        if not isinstance(other, (Interval, int, Fraction, QuadSurd, float)):
            return NotImplemented
        o = self._coerce(other)
        prec = max(self.prec, o.prec)
        e1, e2 = self.exp, o.exp
        # cap the alignment exponent: far-below-ulp operands are rounded outward
        top = max(e1 + max(abs(self.lo), abs(self.hi)).bit_length(),
                  e2 + max(abs(o.lo), abs(o.hi)).bit_length())
        e = max(min(e1, e2), top - 2 * prec - 8)
        if e1 >= e:
            a0, a1 = self.lo << (e1 - e), self.hi << (e1 - e)
        else:
            a0, a1 = self.lo >> (e - e1), -((-self.hi) >> (e - e1))
        if e2 >= e:
            b0, b1 = o.lo << (e2 - e), o.hi << (e2 - e)
        else:
            b0, b1 = o.lo >> (e - e2), -((-o.hi) >> (e - e2))
        return Interval._make(a0 + b0, a1 + b1, e, prec)

    __radd__ = __add__

    def __neg__(self):
        return Interval._make(-self.hi, -self.lo, self.exp, self.prec)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if not isinstance(other, (Interval, int, Fraction, QuadSurd, float)):
            return NotImplemented
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        if not isinstance(other, (Interval, int, Fraction, QuadSurd, float)):
            return NotImplemented
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, (Interval, int, Fraction, QuadSurd, float)):
            return NotImplemented
        o = self._coerce(other)
        a, b, c, d = self.lo, self.hi, o.lo, o.hi
        if a >= 0 and c >= 0:
            lo, hi = a * c, b * d
        elif b <= 0 and d <= 0:
            lo, hi = b * d, a * c
        else:
            p = (a * c, a * d, b * c, b * d)
            lo, hi = min(p), max(p)
        return Interval._make(lo, hi, self.exp + o.exp, max(self.prec, o.prec))

    __rmul__ = __mul__

    def sqr(self) -> "Interval":
        a, b = self.lo, self.hi
        if a >= 0:
            lo, hi = a * a, b * b
        elif b <= 0:
            lo, hi = b * b, a * a
        else:
            lo, hi = 0, max(a * a, b * b)
        return Interval._make(lo, hi, 2 * self.exp, self.prec)

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            return NotImplemented
        if n == 0:
            return Interval._make(1, 1, 0, self.prec)
        if n % 2 == 0:
            return self.sqr() ** (n // 2)
        return self * (self ** (n - 1))

    def reciprocal(self) -> "Interval":
        a, b = self.lo, self.hi
        if a <= 0 <= b:
            raise ZeroDivisionError("interval reciprocal of an interval containing 0")
        s = self.prec + 4 + max(abs(a), abs(b)).bit_length()
        one = 1 << s
        lo = one // b            # floor(1/b)
        hi = -((-one) // a)      # ceil(1/a)
        return Interval._make(lo, hi, -s - self.exp, self.prec)

    def __truediv__(self, other):
        if not isinstance(other, (Interval, int, Fraction, QuadSurd, float)):
            return NotImplemented
        o = self._coerce(other)
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        if not isinstance(other, (Interval, int, Fraction, QuadSurd, float)):
            return NotImplemented
        return self._coerce(other) * self.reciprocal()

    def __abs__(self):
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return Interval._make(0, max(-self.lo, self.hi), self.exp, self.prec)

    def __repr__(self):
        lo, hi = self.to_floats()
        return f"Interval([{lo!r}, {hi!r}], prec={self.prec})"


def _dyadic(m: int, e: int) -> Fraction:
    return Fraction(m << e) if e >= 0 else Fraction(m, 1 << (-e))


def float_down(q) -> float:
    q = as_fraction(q)
    f = float(q)
    if Fraction(f) > q:
        f = math.nextafter(f, -math.inf)
    return f


def float_up(q) -> float:
    q = as_fraction(q)
    f = float(q)
    if Fraction(f) < q:
        f = math.nextafter(f, math.inf)
    return f


def to_interval(x, prec: int = DEFAULT_PRECISION) -> Interval:
    return Interval.from_value(x, prec)


# ---------------------------------------------------------------------------
# Fixed-point kernels (value = integer * 2**-wp); each returns (value, err_ulps)


def _atan_inv_fixed(k: int, wp: int) -> tuple[int, int]:
    """atan(1/k) in fixed point for integer k >= 2."""
    one = 1 << wp
    power = one // k          # 1/k^(2n+1)
    k2 = k * k
    total = 0
    n = 0
    terms = 0
    while power:
        term = power // (2 * n + 1)
        total += -term if n & 1 else term
        power //= k2
        n += 1
        terms += 1
    # each term floors twice (power and quotient); tail < 1 ulp
    return total, 2 * terms + 2


@lru_cache(maxsize=64)
def _pi_fixed(wp: int) -> tuple[int, int]:
    a, ea = _atan_inv_fixed(5, wp + 8)
    b, eb = _atan_inv_fixed(239, wp + 8)
    p = 16 * a - 4 * b
    err = 16 * ea + 4 * eb
    # rescale to wp bits
    return p >> 8, (err >> 8) + 2


@lru_cache(maxsize=64)
def pi_interval(prec: int = DEFAULT_PRECISION) -> Interval:
    """Certified enclosure of pi."""
    wp = prec + 16
    p, err = _pi_fixed(wp)
    return Interval._make(p - err, p + err, -wp, prec)


def _cos_series_fixed(x: int, wp: int) -> tuple[int, int]:
    """cos(x * 2**-wp) for |x * 2**-wp| <= 2, fixed point at wp bits."""
    one = 1 << wp
    x2 = (x * x) >> wp
    term = one
    total = one
    n = 1
    terms = 0
    while term:
        term = ((term * x2) >> wp) // ((2 * n - 1) * (2 * n))
        total += -term if n & 1 else term
        n += 1
        terms += 1
    return total, 4 * terms + 8


def _reduce_fixed(t: int, wp: int) -> tuple[int, int, int]:
    """Reduce a fixed-point angle for cosine evaluation.

    Returns (r, sign, err) with cos(t) = sign * cos(r), 0 <= r <~ pi/2, and
    err the absolute error of r in ulps.
    """
    p, ep = _pi_fixed(wp)
    two_p = 2 * p
    k = (t + p) // two_p
    r = t - k * two_p
    err = 2 * abs(k) * ep + 1
    r = abs(r)
    sign = 1
    if 2 * r > p:
        r = p - r
        sign = -1
        err += ep
    return r, sign, err


def _cos_point(q: Fraction, prec: int, shift_half_pi: bool = False) -> Interval:
    """Enclosure of cos(q) (or sin(q) via cos(q - pi/2)) for an exact rational q."""
    mag = abs(q.numerator).bit_length() - q.denominator.bit_length() + 1
    wp = prec + 24 + max(mag, 0)
    n, d = q.numerator, q.denominator
    t = (n << wp) // d
    terr = 0 if (n << wp) % d == 0 else 1
    if shift_half_pi:
        p, ep = _pi_fixed(wp)
        t -= p >> 1
        terr += ep + 1
    r, sign, rerr = _reduce_fixed(t, wp)
    c, cerr = _cos_series_fixed(r, wp)
    err = cerr + rerr + terr
    lo, hi = c - err, c + err
    one = 1 << wp
    lo, hi = max(lo, -one), min(hi, one)
    if sign < 0:
        lo, hi = -hi, -lo
    return Interval._make(lo, hi, -wp, prec)


def _angle_value(theta) -> Union[Fraction, Interval]:
    if isinstance(theta, AngleSpec):
        return theta.value
    if isinstance(theta, Interval):
        return theta.lower() if theta.is_point() else theta
    return as_fraction(theta)


def interval_cos(theta, precision: int = DEFAULT_PRECISION) -> Interval:
    """Certified enclosure of cos(theta).

    ``theta`` may be an AngleSpec, an exact rational, or an Interval.
    """
    if precision < MIN_PRECISION:
        raise ValueError(f"precision must be >= {MIN_PRECISION}")
    v = _angle_value(theta)
    if not isinstance(v, Interval):
        if v == 0:
            return Interval._make(1, 1, 0, precision)
        return _cos_point(v, precision)
    return _cos_interval(v, precision, 0)


def interval_sin(theta, precision: int = DEFAULT_PRECISION) -> Interval:
    """Certified enclosure of sin(theta)."""
    if precision < MIN_PRECISION:
        raise ValueError(f"precision must be >= {MIN_PRECISION}")
    v = _angle_value(theta)
    if not isinstance(v, Interval):
        if v == 0:
            return Interval._make(0, 0, 0, precision)
        return _cos_point(v, precision, shift_half_pi=True)
    return _cos_interval(v, precision, 1)


def _cos_interval(x: Interval, prec: int, quarter_shift: int) -> Interval:
    """cos(x - quarter_shift*pi/2) over an interval argument."""
    wp = prec + 8
    pi = pi_interval(wp)
    if quarter_shift:
        x = x - pi * Fraction(1, 2)
    if x.width() >= 2 * pi.lower():
        return Interval._make(-1, 1, 0, prec)
    lo_v = _cos_point(x.lower(), wp)
    hi_v = _cos_point(x.upper(), wp)
    res = lo_v.hull(hi_v)
    # extrema at integer multiples of pi inside x
    j_min = math.floor(x.lower() / pi.upper()) - 1
    j_max = math.ceil(x.upper() / pi.lower()) + 1
    lo_f, hi_f = res.lower(), res.upper()
    for j in range(j_min, j_max + 1):
        jp = pi * j
        if jp.upper() >= x.lower() and jp.lower() <= x.upper():
            if j % 2 == 0:
                hi_f = Fraction(1)
            else:
                lo_f = Fraction(-1)
    return Interval.from_bounds(lo_f, hi_f, prec)


def interval_sqrt(x, precision: int = None) -> Interval:
    """Certified enclosure of sqrt(x); the negative part of x is discarded."""
    if not isinstance(x, Interval):
        x = Interval.from_value(x, precision or DEFAULT_PRECISION)
    prec = precision or x.prec
    if x.hi < 0:
        raise DomainError("square root of a negative interval")
    lo, hi, e = max(x.lo, 0), x.hi, x.exp
    if e % 2:
        lo <<= 1
        hi <<= 1
        e -= 1
    shift = max(0, 2 * prec + 4 - hi.bit_length())
    shift += shift % 2
    lo <<= shift
    hi <<= shift
    e -= shift
    slo = math.isqrt(lo)
    shi = math.isqrt(hi)
    if shi * shi != hi:
        shi += 1
    return Interval._make(slo, shi, e // 2, prec)


def interval_acos(x, precision: int = DEFAULT_PRECISION) -> Interval:
    """Certified enclosure of arccos over x (clamped to [-1, 1])."""
    if not isinstance(x, Interval):
        x = Interval.from_value(x, precision + 8)
    x = x.clamp(-1, 1)
    lo = _acos_bound(x.upper(), precision, upper=False)
    hi = _acos_bound(x.lower(), precision, upper=True)
    return Interval.from_bounds(lo, hi, precision)


def _acos_bound(v: Fraction, prec: int, upper: bool) -> Fraction:
    """A rational bound for arccos(v): <= when upper is False, >= when True."""
    wp = prec + 8
    pi = pi_interval(wp)
    if v >= 1:
        return Fraction(0)
    if v <= -1:
        return pi.upper() if upper else pi.lower()
    guess = Fraction(math.acos(float(v)))
    # bracket [a, b] with cos(a) >= v >= cos(b) via the float guess
    delta = Fraction(1, 1 << 48)
    a, b = None, None
    for _ in range(60):
        a_try = max(Fraction(0), guess - delta)
        b_try = min(pi.lower(), guess + delta)
        ca = _cos_point(a_try, wp) if a_try else Interval._make(1, 1, 0, wp)
        cb = _cos_point(b_try, wp)
        if ca.lower() >= v and cb.upper() <= v:
            a, b = a_try, b_try
            break
        delta *= 4
    if a is None:
        a, b = Fraction(0), pi.upper()
    target = Fraction(1, 1 << (prec + 2))
    while b - a > target:
        m = _round_dyadic((a + b) / 2, wp + 16)
        if m <= a or m >= b:
            break
        cm = _cos_point(m, wp)
        if cm.lower() >= v:
            a = m
        elif cm.upper() <= v:
            b = m
        else:
            break
    return b if upper else a


def _round_dyadic(q: Fraction, bits: int) -> Fraction:
    return Fraction(math.floor(q * (1 << bits)), 1 << bits)


# ---------------------------------------------------------------------------
# Angles on the exact grid (1+eps) * j / 2**k


@dataclass(frozen=True)
class AngleSpec:
    """The exact angle ``(1 + epsilon) * j / 2**k`` radians."""

    j: int
    k: int
    epsilon: Fraction

    def __post_init__(self):
        object.__setattr__(self, "epsilon", as_fraction(self.epsilon))
        if self.k < 0:
            raise ValueError("scale k must be nonnegative")
        v = self.value
        # pi is irrational, so comparing against a tight lower bound suffices
        if v < 0 or v > 2 * pi_interval(128).lower():
            raise ValueError(f"angle {v} outside [0, 2*pi)")

    @property
    def value(self) -> Fraction:
        return (1 + self.epsilon) * self.j / (1 << self.k)

    def grid_index(self, scale: int) -> int:
        """Multiple of (1+eps)/2**scale representing this angle (scale >= k)."""
        if scale < self.k:
            raise ValueError("target scale must be at least k")
        return self.j << (scale - self.k)

    def cos(self, precision: int = DEFAULT_PRECISION) -> Interval:
        return interval_cos(self.value, precision)

    def sin(self, precision: int = DEFAULT_PRECISION) -> Interval:
        return interval_sin(self.value, precision)


def grid_difference(a: AngleSpec, b: AngleSpec) -> tuple[int, int]:
    """Return (m, scale) with a - b = (1+eps) * m / 2**scale exactly."""
    if a.epsilon != b.epsilon:
        raise ValueError("angles on different grids")
    scale = max(a.k, b.k)
    return a.grid_index(scale) - b.grid_index(scale), scale


# ---------------------------------------------------------------------------
# Refinement


@dataclass(frozen=True)
class RefineResult:
    interval: Interval
    precision: int
    exhausted: bool

    @property
    def ok(self) -> bool:
        return not self.exhausted


def refine_until(evaluator: Callable[[int], Interval], target_width,
                 max_precision: int = 4096,
                 base_precision: int = DEFAULT_PRECISION) -> RefineResult:
    """Double the working precision until the enclosure is narrow enough.

    Returns the first enclosure of width <= target_width, or the enclosure
    at max_precision with ``exhausted=True``.
    """
    target = as_fraction(target_width)
    p = max(MIN_PRECISION, min(base_precision, max_precision))
    while True:
        iv = evaluator(p)
        if iv.width() <= target:
            return RefineResult(iv, p, False)
        if p >= max_precision:
            return RefineResult(iv, p, True)
        p = min(2 * p, max_precision)


def rational_power_bounds(x: Fraction, p: int, q: int, bits: int = 64) -> tuple[Fraction, Fraction]:
    """Rationals lo <= x**(p/q) <= hi for x > 0, q > 0, verified by integer powers."""
    x = as_fraction(x)
    if x <= 0 or q <= 0:
        raise DomainError("rational_power_bounds needs x > 0 and q > 0")
    target = x ** p  # compare r**q against x**p
    guess = math.exp(p / q * (math.log(x.numerator) - math.log(x.denominator)))
    scale = Fraction(1, 1 << bits)
    lo = Fraction(guess) * (1 - scale * 1024)
    hi = Fraction(guess) * (1 + scale * 1024)
    while lo ** q > target:
        lo /= 2
    while hi ** q < target:
        hi *= 2
    lo = _round_dyadic(lo, bits) if lo > 0 else lo
    if lo ** q > target:
        lo -= scale
    hi_r = Fraction(math.ceil(hi * (1 << bits)), 1 << bits)
    return lo, hi_r
