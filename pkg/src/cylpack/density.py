"""Planar areas, density profiles, lattice sector counts and Monte Carlo checks."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .constructions import CircleSet, Lattice2, VerticalAxis
from .geom import Axis, Line3
from .numerics import (
    Interval,
    as_fraction,
    exact_sign,
    format_fraction,
    interval_acos,
    interval_cos,
    interval_sin,
    interval_sqrt,
    pi_interval,
)

PREC = 64


class NonStabilizedError(RuntimeError):
    """A subsequence family did not settle within the declared tolerance."""


# ---------------------------------------------------------------------------
# Areas


def _norm_interval(center_norm, prec: int) -> Interval:
    if isinstance(center_norm, Interval):
        return center_norm
    return Interval.from_value(center_norm, prec)


def disc_ball_area(center_norm, disc_r, ball_r, precision: int = PREC) -> Interval:
    """Area of the intersection of a disc with the origin-centred ball.

    ``center_norm`` is the distance from the origin to the disc centre; it
    may be exact or an Interval.  The two-circle lens formula is used when
    neither disc contains the other.
    """
    a = as_fraction(disc_r)
    R = as_fraction(ball_r)
    if a <= 0 or R <= 0:
        raise ValueError("radii must be positive")
    pi = pi_interval(precision)
    d = _norm_interval(center_norm, precision)
    if d.upper() + a <= R:
        return pi * (a * a)
    if d.lower() >= R + a:
        return Interval.from_value(0, precision)
    if d.upper() + R <= a:
        return pi * (R * R)
    if d.lower() <= 0:
        # straddles a containment case; hull of the possible values
        return Interval.from_bounds(0, pi.upper() * min(a, R) ** 2, precision)
    return _lens(d, a, R, precision)


def _lens(d: Interval, a: Fraction, R: Fraction, prec: int) -> Interval:
    # pieces are each monotone enough that separate enclosures stay sound;
    # the arguments of acos are clamped to [-1, 1]
    d2 = d.sqr()
    x1 = ((d2 + a * a - R * R) / (d * (2 * a))).clamp(-1, 1)
    x2 = ((d2 + R * R - a * a) / (d * (2 * R))).clamp(-1, 1)
    t1 = interval_acos(x1, prec) * (a * a)
    t2 = interval_acos(x2, prec) * (R * R)
    k = (-d + a + R) * (d + a - R) * (d - a + R) * (d + a + R)
    if k.hi < 0:
        k = Interval.from_value(0, prec)
    tri = interval_sqrt(k.clamp(0, None)) * Fraction(1, 2)
    area = t1 + t2 - tri
    full = pi_interval(prec) * min(a, R) ** 2
    lo = max(area.lower(), Fraction(0))
    hi = min(area.upper(), full.upper())
    return Interval.from_bounds(lo, hi, prec)


class NormTable:
    """Squared centre norms sorted once, with prefix counts for fast queries."""

    def __init__(self, circles: Union[CircleSet, Sequence]):
        if not isinstance(circles, CircleSet):
            circles = CircleSet(list(circles), circles[0].radius if len(circles) else 1)
        self.radius = circles.radius
        items = sorted(circles.norm_sq_histogram().items(), key=lambda kv: float(kv[0]))
        self.keys = [k for k, _ in items]
        self.fkeys = np.array([float(k) for k in self.keys])
        self.prefix = np.concatenate([[0], np.cumsum([c for _, c in items], dtype=np.int64)])

    def _split(self, bound: Fraction) -> int:
        """Index i such that keys[:i] are exactly <= bound."""
        fb = float(bound)
        i = int(np.searchsorted(self.fkeys, fb * (1 - 1e-12) - 1e-300, side="left"))
        n = len(self.keys)
        while i > 0 and exact_sign(self.keys[i - 1] - bound) > 0:
            i -= 1
        while i < n and exact_sign(self.keys[i] - bound) <= 0:
            i += 1
        return i


def packing_area_in_ball(circles, r, precision: int = PREC) -> Interval:
    """Sum of disc_ball_area over circles with centre norm < r + radius.

    Discs that lie wholly inside the ball are counted exactly as pi a^2 per
    disc; only boundary discs use the lens formula.
    """
    table = circles if isinstance(circles, NormTable) else NormTable(circles)
    r = as_fraction(r)
    a = table.radius
    pi = pi_interval(precision)
    inner = r - a
    i_full = table._split(inner * inner) if inner >= 0 else 0
    i_out = table._split((r + a) ** 2)
    # keys exactly equal to (r + a)^2 touch the ball at one point: zero area
    total = Interval.from_value(0, precision)
    for t in range(i_full, i_out):
        nsq = table.keys[t]
        cnt = int(table.prefix[t + 1] - table.prefix[t])
        d = interval_sqrt(Interval.from_value(nsq, precision + 8), precision)
        total = total + disc_ball_area(d, a, r, precision) * cnt
    return total + pi * (a * a * int(table.prefix[i_full]))


# ---------------------------------------------------------------------------
# Profiles


@dataclass
class DensityProfile:
    schedule: list
    values: list
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        for v in self.values:
            if v.upper() < 0 or v.lower() > 1:
                raise ValueError("density ratio outside [0, 1]")

    def midpoints(self) -> np.ndarray:
        return np.array([float(v.mid()) for v in self.values])

    def to_csv(self, path, extra_header: Optional[dict] = None):
        with open(path, "w", newline="") as fh:
            if extra_header:
                for k, v in extra_header.items():
                    fh.write(f"# {k}: {v}\n")
            w = csv.writer(fh)
            w.writerow(["radius", "ratio_lo", "ratio_hi"])
            for r, v in zip(self.schedule, self.values):
                lo, hi = v.to_floats()
                w.writerow([format_fraction(as_fraction(r)), repr(lo), repr(hi)])

    def to_svg(self, path, targets: Optional[dict] = None, width: int = 640, height: int = 360):
        """Small dependency-free line plot of ratio against log2 radius."""
        xs = [math.log2(float(r)) for r in self.schedule]
        ys = list(self.midpoints())
        tv = list((targets or {}).values())
        y0, y1 = 0.0, max(ys + tv + [0.01]) * 1.1
        x0, x1 = (min(xs), max(xs)) if xs else (0, 1)
        if x1 == x0:
            x1 = x0 + 1

        def px(x):
            return 40 + (x - x0) / (x1 - x0) * (width - 60)

        def py(y):
            return height - 30 - (y - y0) / (y1 - y0) * (height - 50)

        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
                 '<rect width="100%" height="100%" fill="white"/>']
        for name, v in (targets or {}).items():
            parts.append(f'<line x1="40" x2="{width - 20}" y1="{py(v):.1f}" y2="{py(v):.1f}" '
                         f'stroke="gray" stroke-dasharray="4 3"/>')
            parts.append(f'<text x="{width - 150}" y="{py(v) - 4:.1f}" font-size="11">{name} {v:.4f}</text>')
        pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="black" points="{pts}"/>')
        parts.append(f'<text x="{width / 2 - 30}" y="{height - 8}" font-size="11">log2 radius</text>')
        parts.append("</svg>")
        with open(path, "w") as fh:
            fh.write("\n".join(parts))


def density_ratio(circles, r, precision: int = PREC) -> Interval:
    r = as_fraction(r)
    if r <= 0:
        raise ValueError("radius must be positive")
    area = packing_area_in_ball(circles, r, precision)
    v = area / (pi_interval(precision) * (r * r))
    return Interval.from_bounds(max(v.lower(), Fraction(0)), min(v.upper(), Fraction(1)), precision)


def density_profile(circles, schedule: Iterable, descriptor: Optional[dict] = None,
                    precision: int = PREC) -> DensityProfile:
    sched = [as_fraction(r) for r in schedule]
    if any(b <= a for a, b in zip(sched, sched[1:])):
        raise ValueError("schedule must be increasing")
    table = circles if isinstance(circles, NormTable) else NormTable(circles)
    return DensityProfile(sched, [density_ratio(table, r, precision) for r in sched],
                          descriptor or {})


def powers_of_two(k_lo: int, k_hi: int) -> list:
    return [Fraction(1 << k) for k in range(k_lo, k_hi + 1)]


def subsequence_radii(c, k_lo: int, k_hi: int) -> list:
    """n_k = 2^k (1 + c), rounded down to an integer radius."""
    c = as_fraction(c)
    return [Fraction(math.floor((1 << k) * (1 + c))) for k in range(k_lo, k_hi + 1)]


# ---------------------------------------------------------------------------
# Upper density curve


def upper_density_curve(c, epsilon, precision: int = PREC) -> Interval:
    """pi (1 + 3c) / (6 (1 + e) (1 + c)^2)."""
    c, e = as_fraction(c), as_fraction(epsilon)
    if not 0 <= c <= 1:
        raise ValueError("c must lie in [0, 1]")
    return pi_interval(precision) * ((1 + 3 * c) / (6 * (1 + e) * (1 + c) ** 2))


def curve_argmax(epsilon, grid_step: float = 1e-6, precision: int = PREC):
    """Exact maximiser of (a + b c)/(1 + c)^2 with a = 1, b = 3.

    The derivative numerator is (b - 2a) - b c, so c* = (b - 2a)/b.  A grid
    search over [0, 1] cross-checks the critical point.
    """
    a, b = Fraction(1), Fraction(3)
    c_star = (b - 2 * a) / b
    n = int(round(1 / grid_step))
    grid = np.linspace(0.0, 1.0, n + 1)
    f = (1 + 3 * grid) / (1 + grid) ** 2
    c_grid = float(grid[int(np.argmax(f))])
    if abs(c_grid - float(c_star)) > grid_step:
        raise ArithmeticError("grid search disagrees with the critical point")
    return c_star, upper_density_curve(c_star, epsilon, precision), c_grid


@dataclass
class SubsequenceEstimate:
    value: Interval
    argmax_c: Fraction
    tails: dict
    oscillation: dict


def subsequence_max_estimate(families: dict, tail: int = 3, tolerance: float = 0.02) -> SubsequenceEstimate:
    """Upper-limit estimate from a covering family of subsequences.

    ``families`` maps a label c to a DensityProfile (or a list of Intervals)
    along n_k = 2^k (1 + c).  The last ``tail`` values of each family must
    agree within ``tolerance``; the estimate is the maximum over families of
    the final value.
    """
    tails, osc = {}, {}
    best_c, best = None, None
    for c, prof in families.items():
        vals = prof.values if isinstance(prof, DensityProfile) else list(prof)
        t = vals[-tail:]
        mids = [float(v.mid()) for v in t]
        spread = max(mids) - min(mids)
        osc[c] = spread
        if spread > tolerance:
            raise NonStabilizedError(f"family c={c} oscillates by {spread:.4g} > {tolerance}")
        tails[c] = t[-1]
        if best is None or t[-1].mid() > best.mid():
            best_c, best = c, t[-1]
    if best is None:
        raise ValueError("no families given")
    return SubsequenceEstimate(best, best_c, tails, osc)


def c_grid(points: int = 64) -> list:
    return [Fraction(i, points - 1) for i in range(points)] if points > 1 else [Fraction(0)]


# ---------------------------------------------------------------------------
# Lattice sectors

TWO_PI = "2pi"


@dataclass
class SectorCount:
    count: int
    predicted: Interval
    r: Fraction
    width: object

    @property
    def deviation(self) -> float:
        p = float(self.predicted.mid())
        return abs(self.count - p)


class LatticeDisc:
    """Cached enumeration of lattice points in a disc, sorted by angle."""

    def __init__(self, lattice: Lattice2, r):
        self.lattice = lattice
        self.r = as_fraction(r)
        i, j, n = lattice.enumerate_with_norms(self.r, 0, lo_open=False)
        self.i, self.j = i, j
        b1, b2 = lattice.b1, lattice.b2
        fx = float(b1[0]) * i + float(b2[0]) * j
        fy = float(b1[1]) * i + float(b2[1]) * j
        ang = np.arctan2(fy, fx)
        ang = np.where(ang < 0, ang + 2 * math.pi, ang)
        origin = (i == 0) & (j == 0)
        self.has_origin = bool(origin.any())
        keep = ~origin
        order = np.argsort(ang[keep], kind="stable")
        self.ang = ang[keep][order]
        self.pi_ = self.i[keep][order]
        self.pj = self.j[keep][order]
        self.total = len(i)

    def _exact_point(self, t):
        return self.lattice.point(int(self.pi_[t]), int(self.pj[t]))

    def _side(self, t, theta: Fraction) -> int:
        """Sign of cross((cos th, sin th), p): > 0 if p is counterclockwise."""
        x, y = self._exact_point(t)
        p = 64
        while p <= 4096:
            c, s = interval_cos(theta, p), interval_sin(theta, p)
            cr = Interval.from_value(y, p) * c - Interval.from_value(x, p) * s
            sg = cr.sign()
            if sg is not None:
                return sg
            p *= 2
        raise ArithmeticError("could not decide point-in-sector test")

    def _count_below(self, theta: Fraction) -> int:
        """Number of nonzero points with angle < theta (theta in [0, 2 pi))."""
        tf = float(theta)
        lo = int(np.searchsorted(self.ang, tf - 1e-9, side="left"))
        hi = int(np.searchsorted(self.ang, tf + 1e-9, side="right"))
        cnt = lo
        for t in range(lo, hi):
            # angle(p) < theta iff p is clockwise of the ray at theta (for
            # angles within 1e-9 of theta)
            if self._side(t, theta) < 0:
                cnt += 1
        return cnt

    def sector(self, theta1, theta2) -> int:
        """Points with theta1 <= angle < theta2 (origin counted only for the full disc)."""
        if theta2 == TWO_PI:
            if as_fraction(theta1) != 0:
                return len(self.ang) - self._count_below(as_fraction(theta1))
            return self.total
        return self._count_below(as_fraction(theta2)) - self._count_below(as_fraction(theta1))


def sector_count(lattice: Lattice2, r, theta1, theta2, disc: Optional[LatticeDisc] = None,
                 precision: int = PREC) -> SectorCount:
    """Exact lattice count in a sector of B_r, with the area-based prediction."""
    disc = disc or LatticeDisc(lattice, r)
    r = as_fraction(r)
    t1 = as_fraction(theta1)
    if theta2 == TWO_PI:
        width = pi_interval(precision) * 2 - t1
    else:
        t2 = as_fraction(theta2)
        if not (0 <= t1 < t2):
            raise ValueError("need 0 <= theta1 < theta2")
        if t2 > 2 * pi_interval(precision).upper():
            raise ValueError("theta2 exceeds 2 pi")
        width = Interval.from_value(t2 - t1, precision)
    cnt = disc.sector(t1, theta2)
    pred = lattice.density_interval(precision) * (r * r) * width * Fraction(1, 2)
    return SectorCount(cnt, pred, r, width)


def sector_count_bruteforce(lattice: Lattice2, r, theta1, theta2) -> int:
    """Reference count by direct enumeration with exact angle comparisons."""
    disc = LatticeDisc(lattice, r)
    t1 = as_fraction(theta1)
    if theta2 == TWO_PI and t1 == 0:
        return disc.total
    cnt = 0
    for t in range(len(disc.ang)):
        inside = _angle_ge(disc, t, t1)
        if theta2 != TWO_PI:
            inside = inside and not _angle_ge(disc, t, as_fraction(theta2))
        cnt += inside
    return cnt


def _quadrant_point(x, y) -> int:
    sx, sy = exact_sign(x), exact_sign(y)
    if sy == 0 and sx > 0:
        return 0
    if sx > 0 and sy > 0:
        return 0
    if sx <= 0 and sy > 0:
        return 1
    if sx < 0 and sy <= 0:
        return 2
    return 3


def _quadrant_angle(theta: Fraction) -> int:
    p = 64
    while p <= 4096:
        c, s = interval_cos(theta, p).sign(), interval_sin(theta, p).sign()
        if c is not None and s is not None:
            return _quadrant_point(c, s)
        p *= 2
    raise ArithmeticError("angle lies on a coordinate axis")


def _angle_ge(disc: LatticeDisc, t: int, theta: Fraction) -> bool:
    """angle(p) >= theta with angle in [0, 2 pi), decided exactly.

    Different quadrants compare by quadrant index; within one quadrant the
    angular gap is below pi/2 so the cross-product sign decides.
    """
    if theta == 0:
        return True
    x, y = disc._exact_point(t)
    qp, qt = _quadrant_point(x, y), _quadrant_angle(theta)
    if qp != qt:
        return qp > qt
    return disc._side(t, theta) >= 0


def fit_sector_constant(lattice: Lattice2, r, n_sectors: int = 1000, seed: int = 0,
                        disc: Optional[LatticeDisc] = None) -> tuple[float, list]:
    """Max |count - predicted| / r over random sectors of width >= 1/(2 sqrt r)."""
    r = as_fraction(r)
    disc = disc or LatticeDisc(lattice, r)
    g = np.random.Generator(np.random.Philox(seed))
    wmin = 1 / (2 * math.sqrt(float(r)))
    out = []
    for _ in range(n_sectors):
        w = g.uniform(wmin, math.pi)
        t1 = g.uniform(0, 2 * math.pi - w - 1e-6)
        t1q = Fraction(t1).limit_denominator(1 << 40)
        t2q = Fraction(t1 + w).limit_denominator(1 << 40)
        if float(t2q - t1q) < wmin:
            t2q = t1q + Fraction(wmin).limit_denominator(1 << 40) + Fraction(1, 1 << 40)
        sc = sector_count(lattice, r, t1q, t2q, disc)
        out.append(sc)
    C = max(sc.deviation for sc in out) / float(r)
    return C, out


# ---------------------------------------------------------------------------
# Monte Carlo check of the dual-cylinder volume identity


@dataclass
class MCVolume:
    vol_c: float
    se_c: float
    vol_dual: float
    se_dual: float
    diff: float
    se_diff: float
    samples: int
    seed: int
    in_hypothesis: bool

    @property
    def agrees(self) -> Optional[bool]:
        """|diff| <= 3 se_diff, or None outside the hypothesis."""
        if not self.in_hypothesis:
            return None
        if self.se_diff == 0:
            return self.diff == 0
        return abs(self.diff) <= 3 * self.se_diff


def _float_line(axis) -> tuple[np.ndarray, np.ndarray]:
    line = axis.line(64) if not isinstance(axis, Line3) else axis
    a = np.array([float(Interval.from_value(c, 64).mid()) for c in line.anchor])
    v = np.array([float(Interval.from_value(c, 64).mid()) for c in line.direction])
    return a, v


def _perpendicular(axis) -> bool:
    if isinstance(axis, (Axis, VerticalAxis)):
        return True
    a, v = axis.anchor, axis.direction
    x = a[0] * v[0] + a[1] * v[1]
    return exact_sign(x) == 0 and exact_sign(a[2]) == 0


def mc_volume_check(cyl, r3, samples: int = 10 ** 7, seed: int = 0,
                    chunk: int = 1 << 20) -> MCVolume:
    """Monte Carlo volumes of C and its dual inside the ball of radius r3.

    Both indicators are evaluated on the same uniform sample of the ball, so
    the difference has a paired standard error.
    """
    from .constructions import dual_cylinder
    dual = dual_cylinder(cyl)
    a1, v1 = _float_line(cyl.axis)
    a2, v2 = _float_line(dual.axis)
    v1 = v1 / np.linalg.norm(v1)
    v2 = v2 / np.linalg.norm(v2)
    rad2 = float(cyl.radius) ** 2
    R = float(r3)
    g = np.random.Generator(np.random.Philox(seed))
    s1 = s2 = sd = sdd = 0.0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        p = g.standard_normal((m, 3))
        p /= np.linalg.norm(p, axis=1)[:, None]
        p *= (R * g.random(m) ** (1.0 / 3.0))[:, None]
        i1 = _inside(p, a1, v1, rad2)
        i2 = _inside(p, a2, v2, rad2)
        s1 += i1.sum()
        s2 += i2.sum()
        dd = i1.astype(np.int8) - i2.astype(np.int8)
        sd += dd.sum()
        sdd += (dd.astype(np.int64) ** 2).sum()
        done += m
    vol_ball = 4.0 / 3.0 * math.pi * R ** 3
    p1, p2 = s1 / samples, s2 / samples
    md = sd / samples
    var_d = max(sdd / samples - md * md, 0.0)
    return MCVolume(
        vol_c=p1 * vol_ball, se_c=math.sqrt(p1 * (1 - p1) / samples) * vol_ball,
        vol_dual=p2 * vol_ball, se_dual=math.sqrt(p2 * (1 - p2) / samples) * vol_ball,
        diff=md * vol_ball, se_diff=math.sqrt(var_d / samples) * vol_ball,
        samples=samples, seed=seed, in_hypothesis=_perpendicular(cyl.axis))


def _inside(p, a, v, rad2):
    w = p - a
    t = w @ v
    d2 = np.einsum("ij,ij->i", w, w) - t * t
    return d2 < rad2
