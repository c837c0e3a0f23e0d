"""Generators for ring packings, shell packings, lattices and dual objects."""

from __future__ import annotations

import hashlib
import json
import math
from functools import lru_cache
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Union

import numpy as np

from .geom import Axis, Line3, PolarAnchor
from .numerics import (
    AngleSpec,
    Interval,
    QuadSurd,
    as_fraction,
    exact_sign,
    format_fraction,
    format_scalar,
    parse_scalar,
    pi_interval,
)


class ParameterSearchError(RuntimeError):
    """No admissible parameters below the search ceiling."""


class SizeGuardError(ValueError):
    """An exact integer would exceed the configured bit bound."""


# ---------------------------------------------------------------------------
# Ring construction parameters


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    holds: bool
    detail: str = ""


@dataclass(frozen=True)
class KuperbergParams:
    epsilon: Fraction
    L: Fraction
    K: Union[QuadSurd, Fraction]
    r0: int
    checks: tuple = ()

    def height(self, n) -> Union[QuadSurd, Fraction]:
        """Axis height coefficient K*n + L for a ring of norm n."""
        return self.K * n + self.L

    def as_dict(self) -> dict:
        return {"epsilon": format_fraction(self.epsilon), "L": format_fraction(self.L),
                "K": format_scalar(self.K), "r0": self.r0}


def sqrt_exact(q) -> Union[QuadSurd, Fraction]:
    return QuadSurd.sqrt(q)


def kl_conditions(epsilon, L) -> list[ConditionCheck]:
    """Exact checks of the three conditions on (K, L) with K^2 = L^2 - 1.

    The middle condition quantifies over h > 0, but the factor
    (2 + h)^2 / (2 (1 + h)) is positive and common to both sides, so it
    reduces to (1 + 2e + e^2/2) K^2 >= (1 + 2e) L^2.
    """
    e = as_fraction(epsilon)
    L2 = as_fraction(L) ** 2
    K2 = L2 - 1
    return [
        ConditionCheck("K2_ratio", K2 > (1 + e / 4) / (1 + e / 2) * L2,
                       "K^2 > (1+e/4)/(1+e/2) L^2"),
        ConditionCheck("K2_h_free", (1 + 2 * e + e * e / 2) * K2 >= (1 + 2 * e) * L2,
                       "(1+2e+e^2/2) K^2 >= (1+2e) L^2"),
        ConditionCheck("K2_099", K2 >= Fraction(99, 100) * L2, "K^2 >= 0.99 L^2"),
    ]


def delta_root(epsilon) -> Optional[Union[QuadSurd, Fraction]]:
    """Smaller root of 4h^2 - 2h + e = 0, or None when e >= 1/4.

    For e >= 1/4 the inequality 4h^2 - 2h >= -e holds for every h, so the
    case h >= delta never arises.
    """
    e = as_fraction(epsilon)
    if e >= Fraction(1, 4):
        return None
    return (1 - sqrt_exact(1 - 4 * e)) / 4


def r0_conditions(epsilon, L, d) -> list[ConditionCheck]:
    """Exact sufficient checks that the conditions on d1 hold for all d1 >= d.

    Each check is an inequality whose left side minus right side is
    nondecreasing in d1 beyond the stated point, so holding at d implies
    holding for all larger d1.  Cosines are bounded by rational Taylor
    polynomials: 1 - cos y >= y^2/2 - y^4/24 and cos y >= 1 - y^2/2.
    """
    e = as_fraction(epsilon)
    L = as_fraction(L)
    K = sqrt_exact(L * L - 1)
    d = as_fraction(d)
    d2 = d * d
    out = []
    # (i) with the (1 + e/2) constant that the equal-norm chain needs
    a = (1 + e) ** 2 - (1 + e / 2)
    out.append(ConditionCheck(
        "cos_gap", a > 0 and d2 * 12 * a > (1 + e) ** 4,
        "1-cos((1+e)/d) > (1+e/2)/(2d^2) via y^2/2 - y^4/24"))
    # (ii) f(d) = e/4 L d^2 - 2 K d - L > 0 and d beyond the vertex 4K/(eL)
    f = e / 4 * L * d2 - 2 * K * d - L
    vertex_ok = exact_sign(d * e * L - 4 * K) >= 0
    out.append(ConditionCheck("quad_L", exact_sign(f) > 0 and vertex_ok,
                              "L^2 + 2KLd < e/4 L^2 d^2"))
    # (iii) the infimum over h > 0 is approached as h -> 0
    out.append(ConditionCheck("h_inf", Fraction(1, 1000) * e * d2 >= 2,
                              "2(1+2e) - 2 - 2/d^2 >= 3.999e"))
    # (iv) delta^2 (delta^2 d^2 - 1) >= 250
    delta = delta_root(e)
    if delta is None:
        out.append(ConditionCheck("delta_tail", True, "vacuous for e >= 1/4"))
    else:
        dd = delta * delta
        out.append(ConditionCheck("delta_tail", exact_sign(dd * (dd * d2 - 1) - 250) >= 0,
                                  "delta^2 (delta^2 d^2 - 1) >= 250"))
    # Taylor step in the unequal-norm case: (1+e)^2 cos y > 1 + 2e + e^2/2
    # for 0 <= y <= (1+e)/d; sufficient: d^2 e^2 > (1+e)^4
    out.append(ConditionCheck("taylor", d2 * e * e > (1 + e) ** 4,
                              "(1+e)^2 cos((1+e)/d) > 1+2e+e^2/2"))
    return out


def select_kuperberg_params(epsilon, max_L=Fraction(10 ** 6), max_r0_bits: int = 200) -> KuperbergParams:
    """Least half-integer L and least power-of-two r0 for the given epsilon."""
    e = as_fraction(epsilon)
    if not (0 < e <= 1):
        raise ValueError("epsilon must lie in (0, 1]")
    L = Fraction(3, 2)
    while not all(c.holds for c in kl_conditions(e, L)):
        L += Fraction(1, 2)
        if L > max_L:
            raise ParameterSearchError(f"no L <= {max_L} satisfies the conditions")
    for bits in range(max_r0_bits + 1):
        checks = r0_conditions(e, L, 1 << bits)
        if all(c.holds for c in checks):
            return KuperbergParams(e, L, sqrt_exact(L * L - 1), 1 << bits,
                                   tuple(kl_conditions(e, L)) + tuple(checks))
    raise ParameterSearchError(f"no r0 <= 2^{max_r0_bits} satisfies the conditions")


# ---------------------------------------------------------------------------
# Rings


def ring_scale(n: int) -> int:
    if n < 1:
        raise ValueError("ring norm must be >= 1")
    return n.bit_length() - 1


@lru_cache(maxsize=4096)
def _ring_count(k: int, e: Fraction) -> int:
    prec = 64 + k
    while True:
        v = pi_interval(prec) * Fraction(2 << k) / (1 + e)
        lo, hi = math.floor(v.lower()), math.floor(v.upper())
        if lo == hi:
            return lo
        prec *= 2


def ring_count(k: int, epsilon) -> int:
    """floor(2 pi 2^k / (1 + e)), decided with a certified enclosure of pi."""
    return _ring_count(k, as_fraction(epsilon))


def ring_points(n: int, epsilon) -> list[tuple[int, AngleSpec]]:
    k = ring_scale(n)
    e = as_fraction(epsilon)
    return [(n, AngleSpec(j, k, e)) for j in range(1, ring_count(k, e) + 1)]


# ---------------------------------------------------------------------------
# Cylinders and packings


@dataclass(frozen=True)
class CylinderSpec:
    axis: Union[Axis, Line3]
    radius: Fraction

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")


class Packing(Sequence):
    """An ordered collection of equal-radius cylinders with provenance."""

    def __init__(self, cylinders, radius, provenance: dict, removed_points: Optional[dict] = None):
        self._cyl = list(cylinders)
        self.radius = as_fraction(radius)
        self.provenance = provenance
        self.removed_points = dict(removed_points or {})
        for c in self._cyl:
            if c.radius != self.radius:
                raise ValueError("all radii in a packing must be equal")

    def __len__(self):
        return len(self._cyl)

    def __getitem__(self, i):
        return self._cyl[i]

    def config_hash(self) -> str:
        return config_hash(self.provenance)


class RingPacking(Packing):
    """Lazy ring packing: rings n_lo..n_hi, one cylinder per ring point.

    Cylinder i is addressed as (n, j); ``heights`` can override K*n + L for
    chosen rings (used to build deliberately broken fixtures).
    """

    def __init__(self, params: KuperbergParams, n_lo: int, n_hi: int,
                 radius=Fraction(1, 2), heights: Optional[dict] = None,
                 provenance: Optional[dict] = None):
        self.params = params
        self.n_lo, self.n_hi = n_lo, n_hi
        self.radius = as_fraction(radius)
        self.heights = dict(heights or {})
        self.removed_points = {}
        counts = [ring_count(ring_scale(n), params.epsilon) for n in range(n_lo, n_hi + 1)]
        self.counts = counts
        self.offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.provenance = provenance or {
            "construction": "kuperberg", **params.as_dict(),
            "n_lo": n_lo, "n_hi": n_hi, "radius": format_fraction(self.radius),
            "heights": {str(k): format_scalar(v) for k, v in sorted(self.heights.items())},
        }

    def __len__(self):
        return int(self.offsets[-1])

    def height(self, n: int):
        return self.heights.get(n, self.params.height(n))

    def locate(self, i: int) -> tuple[int, int]:
        """Map a flat index to (n, j)."""
        if not 0 <= i < len(self):
            raise IndexError(i)
        r = int(np.searchsorted(self.offsets, i, side="right")) - 1
        return self.n_lo + r, i - int(self.offsets[r]) + 1

    def index(self, n: int, j: int) -> int:
        return int(self.offsets[n - self.n_lo]) + j - 1

    def axis(self, n: int, j: int) -> Axis:
        return Axis.polar(n, AngleSpec(j, ring_scale(n), self.params.epsilon), self.height(n))

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[t] for t in range(*i.indices(len(self)))]
        n, j = self.locate(i)
        return CylinderSpec(self.axis(n, j), self.radius)

    def norm_histogram(self) -> dict:
        return {n: c for n, c in zip(range(self.n_lo, self.n_hi + 1), self.counts)}


def build_kuperberg_packing(params: KuperbergParams, n_lo: int, n_hi: int,
                            enforce_r0: bool = True, heights: Optional[dict] = None) -> RingPacking:
    if enforce_r0 and n_lo < params.r0:
        raise ValueError(f"n_lo = {n_lo} is below r0 = {params.r0}")
    if n_hi < n_lo:
        raise ValueError("empty ring range")
    return RingPacking(params, n_lo, n_hi, heights=heights)


# ---------------------------------------------------------------------------
# Shell construction


@dataclass(frozen=True)
class ShellParams:
    """Scaled parameters of the shell construction.

    Shell k is the annulus 2^(lo a_k) < |x| <= 2^(hi a_k) with
    a_1 = a_base, a_(k+1) = a_growth a_k, T_1 = 1 and
    T_(k+1) = 2^(t_exponent a_(k+1)) T_k.
    """

    a_base: int = 1
    a_growth: int = 100
    t_exponent: int = 10
    shell_lo_mult: int = 1
    shell_hi_mult: int = 2
    k_min: int = 1
    k_max: int = 3
    angle_exponent: Fraction = Fraction(39, 40)
    max_T_bits: int = 10 ** 6

    def __post_init__(self):
        object.__setattr__(self, "angle_exponent", as_fraction(self.angle_exponent))
        if self.k_max < 1 or self.k_min < 1 or self.k_min > self.k_max:
            raise ValueError("need 1 <= k_min <= k_max")
        if self.shell_hi_mult <= self.shell_lo_mult:
            raise ValueError("shell_hi_mult must exceed shell_lo_mult")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["angle_exponent"] = format_fraction(self.angle_exponent)
        return d

    def shell_bounds(self, a_k: int) -> tuple[int, int]:
        """Exponents (lo, hi) with shell = (2^lo, 2^hi]."""
        return self.shell_lo_mult * a_k, self.shell_hi_mult * a_k


FULL_SHELL_PARAMS = ShellParams()


def shell_sequences(params: ShellParams) -> list[tuple[int, int]]:
    """[(a_k, T_k)] for k = 1..k_max as exact integers."""
    out = []
    a, t_bits = params.a_base, 0
    for k in range(1, params.k_max + 1):
        if k > 1:
            a *= params.a_growth
            t_bits += params.t_exponent * a
        if t_bits > params.max_T_bits:
            raise SizeGuardError(f"T_{k} = 2^{t_bits} exceeds the {params.max_T_bits}-bit guard")
        out.append((a, 1 << t_bits))
    return out


# ---------------------------------------------------------------------------
# Lattices


@dataclass(frozen=True)
class Lattice2:
    """Planar lattice with exact basis vectors (Fraction or QuadSurd entries)."""

    b1: tuple
    b2: tuple

    def __post_init__(self):
        if exact_sign(self.b1[0] * self.b2[1] - self.b1[1] * self.b2[0]) == 0:
            raise ValueError("basis vectors are linearly dependent")

    def gram(self) -> tuple[Fraction, Fraction, Fraction]:
        g11 = self.b1[0] * self.b1[0] + self.b1[1] * self.b1[1]
        g12 = self.b1[0] * self.b2[0] + self.b1[1] * self.b2[1]
        g22 = self.b2[0] * self.b2[0] + self.b2[1] * self.b2[1]
        for g in (g11, g12, g22):
            if isinstance(g, QuadSurd):
                raise ValueError("lattice enumeration needs a rational Gram matrix")
        return as_fraction(g11), as_fraction(g12), as_fraction(g22)

    def covolume_sq(self) -> Fraction:
        g11, g12, g22 = self.gram()
        return g11 * g22 - g12 * g12

    def point(self, i: int, j: int) -> tuple:
        return (i * self.b1[0] + j * self.b2[0], i * self.b1[1] + j * self.b2[1])

    def norm_sq(self, i, j):
        g11, g12, g22 = self.gram()
        return g11 * i * i + 2 * g12 * i * j + g22 * j * j

    def density_interval(self, precision: int = 64) -> Interval:
        """Points per unit area, 1/covolume."""
        from .numerics import interval_sqrt
        return 1 / interval_sqrt(Interval.from_value(self.covolume_sq(), precision))

    def enumerate(self, r_hi, r_lo=0, lo_open: bool = True) -> np.ndarray:
        """Integer coordinates (i, j) with r_lo < |x| <= r_hi (or r_lo <= when
        lo_open is False), in lexicographic order, as an int64 array."""
        i, j, n = self.enumerate_with_norms(r_hi, r_lo, lo_open)
        return np.stack([i, j], axis=1)

    def enumerate_with_norms(self, r_hi, r_lo=0, lo_open: bool = True):
        g11, g12, g22 = self.gram()
        den = math.lcm(g11.denominator, g12.denominator, g22.denominator)
        G11, G12, G22 = int(g11 * den), int(g12 * den), int(g22 * den)
        hi2 = as_fraction(r_hi) ** 2 * den
        lo2 = as_fraction(r_lo) ** 2 * den
        det = G11 * G22 - G12 * G12
        jmax = math.isqrt(int(math.ceil(hi2 * G11 / det))) + 1
        out_i, out_j = [], []
        for jv in range(-jmax, jmax + 1):
            # G11 i^2 + 2 G12 i j + G22 j^2 <= hi2
            disc = float(G12 * G12 * jv * jv - G11 * (G22 * jv * jv - hi2))
            if disc < 0:
                continue
            center = -G12 * jv / G11
            half = math.sqrt(disc) / G11
            ilo = math.floor(center - half) - 1
            ihi = math.ceil(center + half) + 1
            iv = np.arange(ilo, ihi + 1, dtype=np.int64)
            out_i.append(iv)
            out_j.append(np.full(len(iv), jv, dtype=np.int64))
        if not out_i:
            e = np.zeros(0, dtype=np.int64)
            return e, e, e
        i = np.concatenate(out_i)
        j = np.concatenate(out_j)
        n = G11 * i * i + 2 * G12 * i * j + G22 * j * j  # exact in int64 at desk scale
        if float(hi2) > 2.0 ** 60:
            raise SizeGuardError("enumeration radius too large for int64 norms")
        keep = n <= hi2
        keep &= (n > lo2) if lo_open else (n >= lo2)
        order = np.lexsort((j[keep], i[keep]))
        return i[keep][order], j[keep][order], n[keep][order]


def hexagonal_lattice(min_dist=1, extent=None):
    """Hexagonal lattice with basis (m, 0), (m/2, m sqrt(3)/2).

    Returns the lattice, plus the enumerated integer coordinates of all
    points with |x| <= extent when extent is given.
    """
    m = as_fraction(min_dist)
    if m <= 0:
        raise ValueError("min_dist must be positive")
    lat = Lattice2((m, Fraction(0)), (m / 2, QuadSurd(0, m / 2, 3)))
    if extent is None:
        return lat
    return lat, lat.enumerate(extent, 0, lo_open=False)


def lattice_min_distance_sq(lat: Lattice2, search: int = 4) -> Fraction:
    best = None
    for i in range(-search, search + 1):
        for j in range(-search, search + 1):
            if i or j:
                v = lat.norm_sq(i, j)
                best = v if best is None or v < best else best
    return best


# ---------------------------------------------------------------------------
# Shell filtering


@dataclass
class ShellSet:
    k: int
    a_k: int
    T: int
    coords: np.ndarray        # kept (i, j)
    norms_sq: np.ndarray      # kept integer-scaled norms
    candidates: int
    removed: int

    @property
    def removed_fraction(self) -> float:
        return self.removed / self.candidates if self.candidates else 0.0


@dataclass
class ShellFilterResult:
    lattice: Lattice2
    params: ShellParams
    shells: list
    gram_den: int

    def removed_counts(self) -> dict:
        return {s.k: s.removed for s in self.shells}


def _angle_ok_exact(I: int, N1: int, N2: int, p: int, q: int, scale: int) -> bool:
    """|c| >= |x2|^(-p/q) where c = I / (2 sqrt(N1 N2)) in scaled units.

    Norms are stored as N = scale |x|^2 and I = 2 scale (x1 . x2).  The test
    c^2 >= |x2|^(-2p/q) becomes (I^2)^q (N2/scale)^p >= (4 N1 N2)^q.
    """
    lhs = (I * I) ** q * N2 ** p
    rhs = (4 * N1 * N2) ** q * scale ** p
    return lhs >= rhs


def shell_filter(lattice: Lattice2, params: ShellParams, chunk: int = 4096,
                 shells: Optional[Iterable[int]] = None) -> ShellFilterResult:
    """Recursive filtering of lattice points shell by shell.

    A point of shell k is kept iff, for every kept point of an earlier
    shell, the cosine of the angle at the origin has absolute value at
    least |x|^(-angle_exponent).  A float pass with a safety margin decides
    almost all pairs; pairs near the threshold are decided in exact integer
    arithmetic.
    """
    seq = shell_sequences(params)
    g11, g12, g22 = lattice.gram()
    den = math.lcm(g11.denominator, g12.denominator, g22.denominator)
    G11, G12, G22 = int(g11 * den), int(g12 * den), int(g22 * den)
    p, q = params.angle_exponent.numerator, params.angle_exponent.denominator
    kept_i = np.zeros(0, dtype=np.int64)
    kept_j = np.zeros(0, dtype=np.int64)
    kept_n = np.zeros(0, dtype=np.int64)
    wanted = set(shells) if shells is not None else None
    out = []
    for k in range(params.k_min, params.k_max + 1):
        a_k, T = seq[k - 1]
        if wanted is not None and k not in wanted:
            continue
        lo_e, hi_e = params.shell_bounds(a_k)
        ci, cj, cn = lattice.enumerate_with_norms(Fraction(2) ** hi_e, Fraction(2) ** lo_e)
        keep = np.ones(len(ci), dtype=bool)
        if len(kept_i):
            for s in range(0, len(ci), chunk):
                sl = slice(s, s + chunk)
                keep[sl] = _filter_chunk(ci[sl], cj[sl], cn[sl], kept_i, kept_j, kept_n,
                                         G11, G12, G22, p, q, den)
        out.append(ShellSet(k, a_k, T, np.stack([ci[keep], cj[keep]], axis=1), cn[keep],
                            len(ci), int((~keep).sum())))
        kept_i = np.concatenate([kept_i, ci[keep]])
        kept_j = np.concatenate([kept_j, cj[keep]])
        kept_n = np.concatenate([kept_n, cn[keep]])
    return ShellFilterResult(lattice, params, out, den)


def _filter_chunk(ci, cj, cn, ki, kj, kn, G11, G12, G22, p, q, den):
    # I = 2 den (x1 . x2) as an exact integer matrix
    I = (2 * G11 * np.outer(ci, ki) + 2 * G12 * (np.outer(ci, kj) + np.outer(cj, ki))
         + 2 * G22 * np.outer(cj, kj))
    N2 = cn.astype(np.float64)[:, None]
    N1 = kn.astype(np.float64)[None, :]
    c2 = I.astype(np.float64) ** 2 / (4.0 * N1 * N2)
    # threshold |x2|^(-2 alpha) with |x2|^2 = N2 / den
    thr = (N2 / den) ** (-float(p) / q)
    ratio = c2 / thr
    bad = ratio < 1 - 1e-9
    unsure = np.abs(ratio - 1) <= 1e-9
    if unsure.any():
        for r, c in zip(*np.nonzero(unsure)):
            ok = _angle_ok_exact(int(I[r, c]), int(kn[c]), int(cn[r]), p, q, den)
            bad[r, c] = not ok
    return ~bad.any(axis=1)


def shell_filter_bruteforce(lattice: Lattice2, params: ShellParams) -> dict:
    """Quadratic-scan recount of removed points using exact integer tests only."""
    seq = shell_sequences(params)
    g11, g12, g22 = lattice.gram()
    den = math.lcm(g11.denominator, g12.denominator, g22.denominator)
    G11, G12, G22 = int(g11 * den), int(g12 * den), int(g22 * den)
    p, q = params.angle_exponent.numerator, params.angle_exponent.denominator
    kept = []
    removed = {}
    for k in range(params.k_min, params.k_max + 1):
        a_k, _ = seq[k - 1]
        lo_e, hi_e = params.shell_bounds(a_k)
        ci, cj, cn = lattice.enumerate_with_norms(Fraction(2) ** hi_e, Fraction(2) ** lo_e)
        new, rem = [], 0
        for i, j, n in zip(ci.tolist(), cj.tolist(), cn.tolist()):
            ok = True
            for (i1, j1, n1) in kept:
                I = 2 * G11 * i * i1 + 2 * G12 * (i * j1 + j * i1) + 2 * G22 * j * j1
                if not _angle_ok_exact(I, n1, n, p, q, den):
                    ok = False
                    break
            if ok:
                new.append((i, j, n))
            else:
                rem += 1
        kept.extend(new)
        removed[k] = rem
    return removed


@dataclass(frozen=True)
class EpsilonSchedule:
    """Pairs (m_n, eps_n): shells k with m_n <= k < m_(n+1) use eps_n."""

    entries: tuple

    def __post_init__(self):
        ms = [m for m, _ in self.entries]
        if ms != sorted(ms) or len(set(ms)) != len(ms):
            raise ValueError("thresholds must be strictly increasing")

    def epsilon_for(self, k: int) -> Fraction:
        e = Fraction(0)
        for m, eps in self.entries:
            if k >= m:
                e = as_fraction(eps)
        return e

    @classmethod
    def zero(cls):
        return cls(((1, Fraction(0)),))

    @classmethod
    def harmonic(cls, thresholds: Iterable[int], start: int = 10):
        """eps_n = 1/n for n = start, start+1, ... at the given thresholds."""
        return cls(tuple((m, Fraction(1, start + t)) for t, m in enumerate(thresholds)))


RADIUS_RULES = ("half", "half_one_minus_eps")


class ShellPacking(Packing):
    """Packing built from filtered shells; cylinder records keep shell ids."""

    def __init__(self, cylinders, radius, provenance, removed_points, shell_of, lattice_coords):
        super().__init__(cylinders, radius, provenance, removed_points)
        self.shell_of = shell_of
        self.lattice_coords = lattice_coords


def build_shell_packing(filtered: ShellFilterResult, epsilon_schedule: EpsilonSchedule = None,
                        radius_rule: str = "half", epsilon=Fraction(0)) -> ShellPacking:
    """Cylinders of the given radius rule on the (rescaled) shell axes.

    A point x of shell k becomes the axis lam * l_x with lam = 1/(1 - eps),
    eps taken from the schedule: anchor lam x and height lam T_k.
    """
    sched = epsilon_schedule or EpsilonSchedule.zero()
    eps = as_fraction(epsilon)
    if radius_rule == "half":
        radius = Fraction(1, 2)
    elif radius_rule == "half_one_minus_eps":
        radius = (1 - eps) / 2
    else:
        raise ValueError(f"radius_rule must be one of {RADIUS_RULES}")
    lat = filtered.lattice
    cyl, shell_of, coords = [], [], []
    for s in filtered.shells:
        lam = 1 / (1 - sched.epsilon_for(s.k))
        for i, j in s.coords.tolist():
            x, y = lat.point(i, j)
            cyl.append(CylinderSpec(Axis((x * lam, y * lam), s.T * lam), radius))
            shell_of.append(s.k)
            coords.append((i, j))
    prov = {"construction": "shell", "params": filtered.params.as_dict(),
            "lattice": [[format_scalar(c) for c in lat.b1], [format_scalar(c) for c in lat.b2]],
            "schedule": [[m, format_fraction(as_fraction(e))] for m, e in sched.entries],
            "radius_rule": radius_rule, "epsilon": format_fraction(eps)}
    return ShellPacking(cyl, radius, prov, filtered.removed_counts(), shell_of, coords)


# ---------------------------------------------------------------------------
# Dual objects


@dataclass(frozen=True)
class Circle:
    center: tuple      # exact pair, or PolarAnchor
    radius: Fraction

    def norm_sq(self):
        if isinstance(self.center, PolarAnchor):
            return self.center.norm ** 2
        x, y = self.center
        return x * x + y * y


class CircleSet(Sequence):
    """Planar circles; ring-derived sets also expose a norm histogram."""

    def __init__(self, circles: Sequence, radius, histogram: Optional[dict] = None):
        self._c = circles
        self.radius = as_fraction(radius)
        self._hist = histogram

    def __len__(self):
        return len(self._c)

    def __getitem__(self, i):
        return self._c[i]

    def norm_sq_histogram(self) -> dict:
        """Map exact squared center norm -> number of circles."""
        if self._hist is not None:
            return {Fraction(n) ** 2: c for n, c in self._hist.items()}
        out: dict = {}
        for c in self._c:
            v = c.norm_sq()
            out[v] = out.get(v, 0) + 1
        return out


class _LazyCircles(Sequence):
    def __init__(self, packing: RingPacking):
        self.p = packing

    def __len__(self):
        return len(self.p)

    def __getitem__(self, i):
        cyl = self.p[i]
        return Circle(cyl.axis.anchor, cyl.radius)


class AxisParallelToPlane(ValueError):
    pass


def _plane_point(axis) -> tuple:
    if isinstance(axis, Axis):
        return axis.anchor
    a, v = axis.anchor, axis.direction
    if exact_sign(v[2]) == 0:
        raise AxisParallelToPlane("axis parallel to plane z = 0")
    t = a[2] / v[2]
    return (a[0] - t * v[0], a[1] - t * v[1])


def dual_circle_packing(packing) -> CircleSet:
    if isinstance(packing, RingPacking):
        return CircleSet(_LazyCircles(packing), packing.radius, packing.norm_histogram())
    circles = [Circle(_plane_point(c.axis), c.radius) for c in packing]
    return CircleSet(circles, packing.radius)


def ring_circle_set(epsilon, n_lo: int, n_hi: int, radius=Fraction(1, 2)) -> CircleSet:
    """Norm histogram of the ring layout without materialising circles."""
    hist = {n: ring_count(ring_scale(n), epsilon) for n in range(n_lo, n_hi + 1)}
    return CircleSet([], radius, hist)


def dual_cylinder(cyl: CylinderSpec) -> CylinderSpec:
    p = _plane_point(cyl.axis)
    if isinstance(p, PolarAnchor):
        return CylinderSpec(VerticalAxis(p), cyl.radius)
    if isinstance(cyl.axis, Line3):
        v = cyl.axis.direction
        if exact_sign(v[0]) == 0 and exact_sign(v[1]) == 0:
            return cyl
    return CylinderSpec(Line3((p[0], p[1], 0), (0, 0, 1)), cyl.radius)


@dataclass(frozen=True)
class VerticalAxis:
    """Vertical line through a polar anchor (kept symbolic)."""

    anchor: PolarAnchor

    def line(self, precision: int = 64) -> Line3:
        from .numerics import interval_cos, interval_sin
        a = self.anchor
        return Line3((interval_cos(a.angle, precision) * a.norm,
                      interval_sin(a.angle, precision) * a.norm, 0), (0, 0, 1))


# ---------------------------------------------------------------------------
# Packing files


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _anchor_record(axis) -> dict:
    a = axis.anchor
    if isinstance(a, PolarAnchor):
        return {"kind": "polar", "norm": format_fraction(a.norm), "j": a.angle.j,
                "k": a.angle.k, "epsilon": format_fraction(a.angle.epsilon)}
    kind = "surd" if any(isinstance(c, QuadSurd) for c in a) else "rational"
    return {"kind": kind, "x": format_scalar(a[0]), "y": format_scalar(a[1])}


def _anchor_from_record(r: dict):
    if r["kind"] == "polar":
        return PolarAnchor(as_fraction(r["norm"]),
                           AngleSpec(int(r["j"]), int(r["k"]), as_fraction(r["epsilon"])))
    return (parse_scalar(r["x"]), parse_scalar(r["y"]))


def iter_packing_records(packing) -> Iterator[dict]:
    if isinstance(packing, RingPacking):
        for idx, n in enumerate(range(packing.n_lo, packing.n_hi + 1)):
            H = format_scalar(packing.height(n))
            rad = format_fraction(packing.radius)
            k = ring_scale(n)
            eps = format_fraction(packing.params.epsilon)
            for j in range(1, packing.counts[idx] + 1):
                yield {"anchor": {"kind": "polar", "norm": str(n), "j": j, "k": k, "epsilon": eps},
                       "H": H, "radius": rad, "tag": f"ring:{n}:{j}"}
        return
    tags = getattr(packing, "shell_of", None)
    for i, c in enumerate(packing):
        if not isinstance(c.axis, Axis):
            raise TypeError("only Axis-shaped cylinders can be serialised")
        yield {"anchor": _anchor_record(c.axis), "H": format_scalar(c.axis.H),
               "radius": format_fraction(c.radius),
               "tag": f"shell:{tags[i]}" if tags else f"cyl:{i}"}


def write_packing(packing, path) -> str:
    prov = dict(packing.provenance)
    h = config_hash(prov)
    with open(path, "w") as fh:
        header = {"type": "header", "config_hash": h, "provenance": prov,
                  "count": len(packing), "radius": format_fraction(packing.radius),
                  "removed_points": {str(k): v for k, v in sorted(packing.removed_points.items())}}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in iter_packing_records(packing):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return h


def read_packing(path):
    """Load a packing file.  Ring packings are rebuilt lazily from the header."""
    with open(path) as fh:
        header = json.loads(fh.readline())
        prov = header["provenance"]
        if prov.get("construction") == "kuperberg":
            eps = as_fraction(prov["epsilon"])
            L = as_fraction(prov["L"])
            params = KuperbergParams(eps, L, sqrt_exact(L * L - 1), int(prov["r0"]))
            heights = {int(k): parse_scalar(v) for k, v in prov.get("heights", {}).items()}
            return RingPacking(params, int(prov["n_lo"]), int(prov["n_hi"]),
                               as_fraction(prov["radius"]), heights, provenance=prov)
        cyl, tags = [], []
        for line in fh:
            r = json.loads(line)
            cyl.append(CylinderSpec(Axis(_anchor_from_record(r["anchor"]), parse_scalar(r["H"])),
                                    as_fraction(r["radius"])))
            tags.append(r.get("tag", ""))
    removed = {int(k): v for k, v in header.get("removed_points", {}).items()}
    if tags and all(t.startswith("shell:") for t in tags):
        shell_of = [int(t.split(":")[1]) for t in tags]
        return ShellPacking(cyl, as_fraction(header["radius"]), prov, removed, shell_of, None)
    return Packing(cyl, as_fraction(header["radius"]), prov, removed)
