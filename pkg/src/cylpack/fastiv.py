"""Vectorised float64 interval arithmetic for batch certification.

IEEE-754 guarantees that +, -, *, / are correctly rounded, so the exact
result lies within half an ulp of the computed float.  Stepping each
computed endpoint one ulp outward with ``nextafter`` therefore yields a
rigorous enclosure without switching the FPU rounding mode.  Anything this
cheap pass cannot decide is escalated to :class:`cylpack.numerics.Interval`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Interval

_NINF = -np.inf
_PINF = np.inf


def _down(x):
    return np.nextafter(x, _NINF)


def _up(x):
    return np.nextafter(x, _PINF)


@dataclass(frozen=True)
class FI:
    """A batch of intervals [lo[i], hi[i]]."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def point(cls, x) -> "FI":
        """Enclose exactly representable float data (e.g. small integers)."""
        a = np.asarray(x, dtype=np.float64)
        return cls(a, a.copy())

    @classmethod
    def from_intervals(cls, ivs) -> "FI":
        lo = np.empty(len(ivs))
        hi = np.empty(len(ivs))
        for i, iv in enumerate(ivs):
            lo[i], hi[i] = iv.to_floats()
        return cls(lo, hi)

    @classmethod
    def from_interval(cls, iv: Interval, n: int = 1) -> "FI":
        lo, hi = iv.to_floats()
        return cls(np.full(n, lo), np.full(n, hi))

    def __len__(self):
        return len(self.lo)

    def take(self, idx) -> "FI":
        return FI(self.lo[idx], self.hi[idx])

    def __add__(self, o):
        o = _lift(o)
        return FI(_down(self.lo + o.lo), _up(self.hi + o.hi))

    def __sub__(self, o):
        o = _lift(o)
        return FI(_down(self.lo - o.hi), _up(self.hi - o.lo))

    def __neg__(self):
        return FI(-self.hi, -self.lo)

    def __mul__(self, o):
        o = _lift(o)
        p1 = self.lo * o.lo
        p2 = self.lo * o.hi
        p3 = self.hi * o.lo
        p4 = self.hi * o.hi
        lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
        hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
        return FI(_down(lo), _up(hi))

    __rmul__ = __mul__

    def __radd__(self, o):
        return self + o

    def __rsub__(self, o):
        return _lift(o) - self

    def sqr(self) -> "FI":
        a, b = self.lo, self.hi
        aa, bb = a * a, b * b
        lo = np.where(a >= 0, aa, np.where(b <= 0, bb, 0.0))
        hi = np.maximum(aa, bb)
        return FI(np.where(lo > 0, _down(lo), 0.0), _up(hi))

    def __truediv__(self, o):
        o = _lift(o)
        if np.any((o.lo <= 0) & (o.hi >= 0)):
            raise ZeroDivisionError("divisor interval contains zero")
        q1 = self.lo / o.lo
        q2 = self.lo / o.hi
        q3 = self.hi / o.lo
        q4 = self.hi / o.hi
        lo = np.minimum(np.minimum(q1, q2), np.minimum(q3, q4))
        hi = np.maximum(np.maximum(q1, q2), np.maximum(q3, q4))
        return FI(_down(lo), _up(hi))

    def contains_zero(self) -> np.ndarray:
        return (self.lo <= 0) & (self.hi >= 0)

    def positive(self) -> np.ndarray:
        return self.lo > 0


def _lift(o) -> FI:
    if isinstance(o, FI):
        return o
    if isinstance(o, Interval):
        lo, hi = o.to_floats()
        return FI(np.asarray(lo), np.asarray(hi))
    a = np.asarray(o, dtype=np.float64)
    if np.any(np.abs(a) >= 2.0 ** 53) or not np.all(a == np.round(a)):
        raise ValueError("only exactly representable integers lift implicitly")
    return FI(a, a)


def cross(a, b):
    """Cross product of two interval 3-vectors (tuples of FI)."""
    return (a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0])


def dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def norm_sq(a):
    return a[0].sqr() + a[1].sqr() + a[2].sqr()


def skew_distance_sq_batch(a1, v1, a2, v2):
    """Generic line-line distance squared for batches of line pairs.

    Returns (dist_sq, undecided_mask).  Where the cross-product norm interval
    contains zero the enclosure is not computed (lo = 0, hi = inf) and the
    mask is set so that callers escalate.
    """
    w = cross(v1, v2)
    n2 = norm_sq(w)
    d = (a2[0] - a1[0], a2[1] - a1[1], a2[2] - a1[2])
    num = dot(d, w).sqr()
    bad = ~n2.positive()
    safe_den = FI(np.where(bad, 1.0, n2.lo), np.where(bad, 1.0, n2.hi))
    q = num / safe_den
    lo = np.where(bad, 0.0, q.lo)
    hi = np.where(bad, np.inf, q.hi)
    return FI(lo, hi), bad
