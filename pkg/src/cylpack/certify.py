"""Certification of packings and of the distance inequalities over boxes.

Every predicate is three-valued: certified-true, certified-false, or unknown
at the available precision.  A certificate is ``certified`` only when every
predicate it covers returned certified-true.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from . import fastiv
from .constructions import (
    RingPacking,
    ShellParams,
    ring_scale,
    shell_sequences,
)
from .geom import (
    Axis,
    DenominatorError,
    Line3,
    axes_parallel,
    kuperberg_distance_sq,
    shell_distance_sq,
    skew_distance_sq,
    skew_distance_sq_exact,
)
from .numerics import (
    AngleSpec,
    Interval,
    QuadSurd,
    as_fraction,
    exact_sign,
    format_fraction,
    format_scalar,
    interval_cos,
    interval_sin,
    pi_interval,
)

CERTIFIED, REFUTED, UNKNOWN = "certified", "refuted", "unknown"


class PreconditionError(ValueError):
    """The inputs lie outside the hypothesis region of the checked statement."""


# ---------------------------------------------------------------------------
# Certificates


@dataclass
class Certificate:
    scope: dict
    pairs_checked: int = 0
    min_distance_sq: Optional[tuple] = None      # (lo, hi) Fractions
    parallel_pairs: int = 0
    touching_pairs: int = 0
    failures: list = field(default_factory=list)  # [(pair id, reason)]
    unknown: list = field(default_factory=list)   # [(pair id or box, reason)]
    precision_ceiling: int = 256
    extras: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        if self.failures:
            return REFUTED
        if self.unknown:
            return UNKNOWN
        return CERTIFIED

    def min_distance(self) -> Optional[Interval]:
        if self.min_distance_sq is None:
            return None
        from .numerics import interval_sqrt
        lo, hi = self.min_distance_sq
        return interval_sqrt(Interval.from_bounds(lo, hi, 96))

    def note_min(self, lo, hi):
        lo, hi = as_fraction(lo), as_fraction(hi)
        if self.min_distance_sq is None:
            self.min_distance_sq = (lo, hi)
        else:
            a, b = self.min_distance_sq
            self.min_distance_sq = (min(a, lo), min(b, hi))

    def to_dict(self) -> dict:
        md = None
        if self.min_distance_sq is not None:
            md = [format_fraction(self.min_distance_sq[0]), format_fraction(self.min_distance_sq[1])]
        return {
            "status": self.status,
            "scope": self.scope,
            "pairs_checked": self.pairs_checked,
            "min_distance_sq": md,
            "parallel_pairs": self.parallel_pairs,
            "touching_pairs": self.touching_pairs,
            "failures": [[_jsonable(p), r] for p, r in self.failures],
            "unknown": [[_jsonable(p), r] for p, r in self.unknown],
            "precision_ceiling": self.precision_ceiling,
            "extras": _jsonable(self.extras),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        md = d.get("min_distance_sq")
        return cls(scope=d["scope"], pairs_checked=d["pairs_checked"],
                   min_distance_sq=None if md is None else (Fraction(md[0]), Fraction(md[1])),
                   parallel_pairs=d["parallel_pairs"], touching_pairs=d["touching_pairs"],
                   failures=[tuple(x) for x in d["failures"]],
                   unknown=[tuple(x) for x in d["unknown"]],
                   precision_ceiling=d["precision_ceiling"], extras=d.get("extras", {}))


def _jsonable(x):
    if isinstance(x, Fraction):
        return format_fraction(x)
    if isinstance(x, QuadSurd):
        return format_scalar(x)
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


def merge_certificates(certs: Sequence[Certificate], scope: Optional[dict] = None) -> Certificate:
    out = Certificate(scope or {"merged": [c.scope for c in certs]})
    for c in certs:
        out.pairs_checked += c.pairs_checked
        out.parallel_pairs += c.parallel_pairs
        out.touching_pairs += c.touching_pairs
        out.failures += c.failures
        out.unknown += c.unknown
        out.precision_ceiling = max(out.precision_ceiling, c.precision_ceiling)
        if c.min_distance_sq is not None:
            out.note_min(*c.min_distance_sq)
    return out


# ---------------------------------------------------------------------------
# Pair strategies


@dataclass(frozen=True)
class Exhaustive:
    def describe(self):
        return {"strategy": "exhaustive"}


@dataclass(frozen=True)
class RingLocal:
    """Ring pairs within dn rings and dj angular steps, plus random far pairs."""

    dn: int = 1
    dj: int = 8
    far_pairs: int = 0
    seed: int = 0

    def describe(self):
        return {"strategy": "ring-local", "dn": self.dn, "dj": self.dj,
                "far_pairs": self.far_pairs, "seed": self.seed, "rng": "Philox"}


@dataclass(frozen=True)
class RandomPairs:
    count: int
    seed: int = 0

    def describe(self):
        return {"strategy": "random", "count": self.count, "seed": self.seed, "rng": "Philox"}


@dataclass(frozen=True)
class ExplicitPairs:
    pairs: tuple

    def describe(self):
        return {"strategy": "explicit", "count": len(self.pairs)}


@dataclass(frozen=True)
class CrossGroups:
    """All pairs whose cylinders carry different group labels (e.g. shells)."""

    def describe(self):
        return {"strategy": "cross-groups"}


@dataclass(frozen=True)
class Neighbours:
    """All pairs whose planar anchors are within ``radius`` of each other."""

    radius: Fraction

    def describe(self):
        return {"strategy": "neighbours", "radius": format_fraction(as_fraction(self.radius))}


Strategy = Union[Exhaustive, RingLocal, RandomPairs, ExplicitPairs, CrossGroups, Neighbours]


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def random_index_pairs(n: int, count: int, seed: int) -> np.ndarray:
    """``count`` uniformly random unordered pairs i < j of distinct indices."""
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    g = _rng(seed)
    i = g.integers(0, n, size=count, dtype=np.int64)
    j = g.integers(0, n - 1, size=count, dtype=np.int64)
    j = np.where(j >= i, j + 1, j)
    return np.stack([np.minimum(i, j), np.maximum(i, j)], axis=1)


# ---------------------------------------------------------------------------
# Scalar escalation


@dataclass(frozen=True)
class PairVerdict:
    outcome: str          # "pass", "touch", "fail", "parallel", "unknown"
    lo: Fraction
    hi: Fraction


def decide_pair(ax1, ax2, threshold_sq: Fraction, precision_ceiling: int = 256,
                start_precision: int = 64) -> PairVerdict:
    """Decide dist^2 >= threshold_sq and non-parallelism for one pair of axes."""
    l1 = ax1.line() if not isinstance(ax1, Line3) else ax1
    l2 = ax2.line() if not isinstance(ax2, Line3) else ax2
    if l1.is_exact() and l2.is_exact():
        d = skew_distance_sq_exact(l1, l2)
        iv = Interval.from_value(d, 96)
        if _exact_parallel(l1, l2):
            return PairVerdict("parallel", iv.lower(), iv.upper())
        sgn = exact_sign(d - threshold_sq)
        if sgn > 0:
            return PairVerdict("pass", iv.lower(), iv.upper())
        if sgn == 0:
            return PairVerdict("touch", as_fraction(threshold_sq), as_fraction(threshold_sq))
        return PairVerdict("fail", iv.lower(), iv.upper())
    p = min(start_precision, precision_ceiling)
    last = None
    while p <= precision_ceiling:
        a = ax1.line(p) if not isinstance(ax1, Line3) else ax1
        b = ax2.line(p) if not isinstance(ax2, Line3) else ax2
        iv = skew_distance_sq(a, b, p)
        last = iv
        nonparallel = _certified_nonparallel(a, b, p)
        if nonparallel and iv.lower() >= threshold_sq:
            return PairVerdict("pass", iv.lower(), iv.upper())
        if iv.upper() < threshold_sq:
            return PairVerdict("fail", iv.lower(), iv.upper())
        p *= 2
    if isinstance(ax1, Axis) and isinstance(ax2, Axis):
        try:
            if axes_parallel(ax1, ax2, precision_ceiling):
                return PairVerdict("parallel", last.lower(), last.upper())
        except ArithmeticError:
            pass
    return PairVerdict("unknown", last.lower(), last.upper())


def _exact_parallel(l1: Line3, l2: Line3) -> bool:
    from .geom import are_parallel
    return are_parallel(l1, l2)


def _certified_nonparallel(a: Line3, b: Line3, p: int) -> bool:
    from .geom import _cross, _norm_sq
    n2 = _norm_sq(_cross(a.enclose(p).direction, b.enclose(p).direction))
    return n2.lo > 0


# ---------------------------------------------------------------------------
# Generic batch kernel


@dataclass
class _AxisArrays:
    x: fastiv.FI
    y: fastiv.FI
    H: fastiv.FI


def _axis_arrays(axes: Sequence) -> _AxisArrays:
    n = len(axes)
    xl, xh, yl, yh, hl, hh = (np.empty(n) for _ in range(6))
    for t, ax in enumerate(axes):
        x, y = ax.xy(64)
        xl[t], xh[t] = Interval.from_value(x, 64).to_floats()
        yl[t], yh[t] = Interval.from_value(y, 64).to_floats()
        hl[t], hh[t] = Interval.from_value(ax.H, 64).to_floats()
    return _AxisArrays(fastiv.FI(xl, xh), fastiv.FI(yl, yh), fastiv.FI(hl, hh))


def _zero(n):
    return fastiv.FI(np.zeros(n), np.zeros(n))


def _batch_pairs(arr: _AxisArrays, I: np.ndarray, J: np.ndarray):
    x1, y1, h1 = arr.x.take(I), arr.y.take(I), arr.H.take(I)
    x2, y2, h2 = arr.x.take(J), arr.y.take(J), arr.H.take(J)
    z = _zero(len(I))
    a1, v1 = (x1, y1, z), (y1, -x1, h1)
    a2, v2 = (x2, y2, z), (y2, -x2, h2)
    return fastiv.skew_distance_sq_batch(a1, v1, a2, v2)


class _Tally:
    """Accumulates outcomes of a certification run."""

    def __init__(self, cert: Certificate, threshold_sq: Fraction, max_listed: int = 50):
        self.cert = cert
        self.thr = threshold_sq
        self.max_listed = max_listed
        self.n_fail = 0
        self.n_unknown = 0

    def add_batch(self, lo: np.ndarray, hi: np.ndarray, mult: np.ndarray):
        if len(lo) == 0:
            return
        self.cert.pairs_checked += int(mult.sum())
        k = int(np.argmin(lo))
        self.cert.note_min(Fraction(float(lo[k])), Fraction(float(hi[k])))
        self.cert.note_min(Fraction(float(lo.min())), Fraction(float(hi.min())))

    def add_verdict(self, pid, v: PairVerdict, mult: int = 1):
        c = self.cert
        c.pairs_checked += mult
        c.note_min(v.lo, v.hi)
        if v.outcome == "touch":
            c.touching_pairs += mult
        elif v.outcome == "parallel":
            c.parallel_pairs += mult
            self._fail(pid, "parallel axes")
        elif v.outcome == "fail":
            self.n_fail += mult
            self._fail(pid, f"dist^2 <= {float(v.hi):.12g} < {float(self.thr)}")
        elif v.outcome == "unknown":
            self.n_unknown += mult
            if len(c.unknown) < self.max_listed:
                c.unknown.append((pid, f"undecided: dist^2 in [{float(v.lo):.12g}, {float(v.hi):.12g}]"))
            elif len(c.unknown) == self.max_listed:
                c.unknown.append(("...", "further undecided pairs omitted"))

    def _fail(self, pid, reason):
        c = self.cert
        if len(c.failures) < self.max_listed:
            c.failures.append((pid, reason))
        elif len(c.failures) == self.max_listed:
            c.failures.append(("...", "further failures omitted"))

    def finish(self):
        self.cert.extras["failed_pairs"] = self.n_fail + self.cert.parallel_pairs
        self.cert.extras["unknown_pairs"] = self.n_unknown


def _classify(lo, hi, undecided, thr_f):
    """Float-level classification: True = pass, False = needs escalation."""
    return (~undecided) & (lo > thr_f)


def _threshold_float(thr: Fraction) -> float:
    from .numerics import float_up
    return float_up(thr)


def _certify_index_pairs(packing, axes_arr, I, J, tally: _Tally, precision_ceiling: int,
                         chunk: int = 1 << 18):
    if axes_arr is None:
        # general lines: no batch kernel, decide each pair on its own
        for i, j in zip(I.tolist(), J.tolist()):
            v = decide_pair(packing[i].axis, packing[j].axis, tally.thr, precision_ceiling)
            tally.add_verdict((i, j), v)
        return
    thr_f = _threshold_float(tally.thr)
    for s in range(0, len(I), chunk):
        Ic, Jc = I[s:s + chunk], J[s:s + chunk]
        d, und = _batch_pairs(axes_arr, Ic, Jc)
        ok = _classify(d.lo, d.hi, und, thr_f)
        tally.add_batch(d.lo[ok], d.hi[ok], np.ones(int(ok.sum()), dtype=np.int64))
        for t in np.nonzero(~ok)[0]:
            i, j = int(Ic[t]), int(Jc[t])
            v = decide_pair(packing[i].axis, packing[j].axis, tally.thr, precision_ceiling)
            tally.add_verdict((i, j), v)


def _neighbour_pairs(axes_arr: _AxisArrays, radius: float) -> tuple[np.ndarray, np.ndarray]:
    x = 0.5 * (axes_arr.x.lo + axes_arr.x.hi)
    y = 0.5 * (axes_arr.y.lo + axes_arr.y.hi)
    # pad the cell size so that float rounding of anchors cannot drop a pair
    cell = radius * (1 + 1e-9) + 1e-9
    cx = np.floor(x / cell).astype(np.int64)
    cy = np.floor(y / cell).astype(np.int64)
    buckets: dict = {}
    for idx, key in enumerate(zip(cx.tolist(), cy.tolist())):
        buckets.setdefault(key, []).append(idx)
    out_i, out_j = [], []
    for (bx, by), members in buckets.items():
        m = np.array(members)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                other = buckets.get((bx + dx, by + dy))
                if other is None:
                    continue
                o = np.array(other)
                ii, jj = np.meshgrid(m, o, indexing="ij")
                ii, jj = ii.ravel(), jj.ravel()
                sel = ii < jj
                ii, jj = ii[sel], jj[sel]
                close = (x[ii] - x[jj]) ** 2 + (y[ii] - y[jj]) ** 2 <= (radius * (1 + 1e-9)) ** 2
                out_i.append(ii[close])
                out_j.append(jj[close])
    if not out_i:
        e = np.zeros(0, dtype=np.int64)
        return e, e
    return np.concatenate(out_i), np.concatenate(out_j)


def certify_packing(packing, radius_threshold=None, pair_strategy: Strategy = Exhaustive(),
                    precision_ceiling: int = 256, threads: int = 1) -> Certificate:
    """Certify non-parallelism and dist >= 2 * radius_threshold on selected pairs.

    ``radius_threshold`` defaults to the packing radius.  Ring packings are
    handled through the rotation/reflection class reduction, other packings
    through a vectorised float-interval pass with scalar escalation.
    """
    r = as_fraction(radius_threshold if radius_threshold is not None else packing.radius)
    thr = (2 * r) ** 2
    scope = {"packing": packing.provenance, "radius_threshold": format_fraction(r),
             **pair_strategy.describe()}
    cert = Certificate(scope, precision_ceiling=precision_ceiling)
    tally = _Tally(cert, thr)
    if isinstance(packing, RingPacking):
        _certify_rings(packing, pair_strategy, tally, precision_ceiling, threads)
        tally.finish()
        return cert
    n = len(packing)
    if isinstance(pair_strategy, ExplicitPairs):
        pairs = np.array(pair_strategy.pairs, dtype=np.int64).reshape(-1, 2)
        I, J = pairs[:, 0], pairs[:, 1]
    elif isinstance(pair_strategy, RandomPairs):
        pairs = random_index_pairs(n, pair_strategy.count, pair_strategy.seed)
        I, J = pairs[:, 0], pairs[:, 1]
    elif isinstance(pair_strategy, Exhaustive):
        I, J = np.triu_indices(n, 1)
    elif isinstance(pair_strategy, CrossGroups):
        groups = np.asarray(getattr(packing, "shell_of"))
        I, J = _cross_group_pairs(groups)
    elif isinstance(pair_strategy, Neighbours):
        if not all(isinstance(c.axis, Axis) for c in packing):
            raise ValueError("neighbour strategy needs axes with planar anchors")
        arr = _axis_arrays([c.axis for c in packing])
        I, J = _neighbour_pairs(arr, float(as_fraction(pair_strategy.radius)))
    else:
        raise ValueError(f"strategy {pair_strategy} not supported for this packing")
    axes = [c.axis for c in packing]
    arr = _axis_arrays(axes) if all(isinstance(a, Axis) for a in axes) else None
    _run_chunks(lambda Ic, Jc, t: _certify_index_pairs(packing, arr, Ic, Jc, t, precision_ceiling),
                I.astype(np.int64), J.astype(np.int64), tally, threads)
    tally.finish()
    return cert


def _run_chunks(fn, I, J, tally: _Tally, threads: int, chunk: int = 1 << 18):
    """Run fn over chunks; with threads > 1 the chunks are processed in a pool
    and merged in chunk order, so the certificate is identical either way."""
    if threads <= 1 or len(I) <= chunk:
        fn(I, J, tally)
        return
    parts = [(I[s:s + chunk], J[s:s + chunk]) for s in range(0, len(I), chunk)]
    subs = [_Tally(Certificate({}), tally.thr, tally.max_listed) for _ in parts]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda a: fn(a[0][0], a[0][1], a[1]), zip(parts, subs)))
    for s in subs:
        merged = merge_certificates([tally.cert, s.cert], tally.cert.scope)
        merged.extras = tally.cert.extras
        merged.precision_ceiling = tally.cert.precision_ceiling
        tally.cert.__dict__.update(merged.__dict__)
        tally.n_fail += s.n_fail
        tally.n_unknown += s.n_unknown


def _cross_group_pairs(groups: np.ndarray):
    out_i, out_j = [], []
    labels = np.unique(groups)
    for a in range(len(labels)):
        for b in range(a + 1, len(labels)):
            ia = np.nonzero(groups == labels[a])[0]
            ib = np.nonzero(groups == labels[b])[0]
            ii, jj = np.meshgrid(ia, ib, indexing="ij")
            out_i.append(ii.ravel())
            out_j.append(jj.ravel())
    if not out_i:
        e = np.zeros(0, dtype=np.int64)
        return e, e
    return np.concatenate(out_i), np.concatenate(out_j)


# ---------------------------------------------------------------------------
# Ring packings: class reduction
#
# A rotation about the z-axis maps ring axes to ring axes, so the distance of
# a pair depends only on (n1, n2) and the angle difference.  The reflection
# (x, y, z) -> (x, -y, -z) maps the axis at angle t to the axis at angle -t,
# so the sign of the difference does not matter either.  On the grid the
# difference between (n1, j1) and (n2, j2) is (1+e) m / 2^s exactly, with
# s = max(k1, k2) and m = j2 2^(s-k2) - j1 2^(s-k1).


def ring_pair_classes(J1: int, k1: int, J2: int, k2: int, same_ring: bool):
    """Classes |m| and multiplicities for ring pairs (ring1 at scale k1 with J1
    points, ring2 at scale k2 >= k1 with J2 points)."""
    if same_ring:
        m = np.arange(1, J1, dtype=np.int64)
        return m, (J1 - m).astype(np.int64)
    if k2 < k1:
        raise ValueError("order rings so that k1 <= k2")
    f = 1 << (k2 - k1)
    m = np.arange(1 - J1 * f, J2 - f + 1, dtype=np.int64)
    lo = np.maximum(1, -((m - 1) // f))          # ceil((1 - m) / f)
    hi = np.minimum(J1, (J2 - m) // f)
    cnt = np.maximum(hi - lo + 1, 0)
    am = np.abs(m)
    keep = cnt > 0
    total = np.bincount(am[keep], weights=cnt[keep]).astype(np.int64)
    ms = np.nonzero(total)[0]
    return ms.astype(np.int64), total[ms]


def _witness(packing: RingPacking, n1, n2, m, s, same_ring):
    """A concrete pair of flat indices realising class (n1, n2, m)."""
    k1, k2 = ring_scale(n1), ring_scale(n2)
    J1, J2 = packing.counts[n1 - packing.n_lo], packing.counts[n2 - packing.n_lo]
    f = 1 << (k2 - k1)
    for sign in (1, -1):
        mm = sign * m
        for j1 in range(1, J1 + 1):
            j2 = mm + j1 * f
            if 1 <= j2 <= J2 and not (same_ring and j2 == j1):
                return (packing.index(n1, j1), packing.index(n2, j2))
    return (n1, n2, m)


class _TrigCache:
    def __init__(self, epsilon):
        self.e = epsilon
        self.cache = {}

    def get(self, m: int, s: int):
        key = (m, s)
        v = self.cache.get(key)
        if v is None:
            a = AngleSpec(m, s, self.e)
            c = interval_cos(a, 64).to_floats()
            sn = interval_sin(a, 64).to_floats()
            v = (c, sn)
            self.cache[key] = v
        return v

    def arrays(self, ms: np.ndarray, ss: np.ndarray):
        n = len(ms)
        cl, ch, sl, sh = (np.empty(n) for _ in range(4))
        for t, (m, s) in enumerate(zip(ms.tolist(), ss.tolist())):
            (cl[t], ch[t]), (sl[t], sh[t]) = self.get(m, s)
        return fastiv.FI(cl, ch), fastiv.FI(sl, sh)


def _ring_class_batch(packing: RingPacking, n1, n2, ms, ss, trig: _TrigCache, hcache: dict):
    """Generic skew distance for representatives: ring n1 at angle 0 and
    ring n2 at angle (1+e) m / 2^s."""
    c, s = trig.arrays(ms, ss)
    N1 = fastiv.FI.point(n1.astype(np.float64))
    N2 = fastiv.FI.point(n2.astype(np.float64))
    h1 = _height_fi(packing, n1, hcache)
    h2 = _height_fi(packing, n2, hcache)
    z = _zero(len(ms))
    x2, y2 = N2 * c, N2 * s
    a1, v1 = (N1, z, z), (z, -N1, h1)
    a2, v2 = (x2, y2, z), (y2, -x2, h2)
    return fastiv.skew_distance_sq_batch(a1, v1, a2, v2)


def _height_fi(packing, ns, hcache):
    lo = np.empty(len(ns))
    hi = np.empty(len(ns))
    for t, n in enumerate(ns.tolist()):
        v = hcache.get(n)
        if v is None:
            v = Interval.from_value(packing.height(n), 64).to_floats()
            hcache[n] = v
        lo[t], hi[t] = v
    return fastiv.FI(lo, hi)


def _class_axes(packing: RingPacking, n1, n2, m, s):
    a1 = Axis((Fraction(n1), Fraction(0)), packing.height(n1))
    if m == 0:
        a2 = Axis((Fraction(n2), Fraction(0)), packing.height(n2))
    else:
        a2 = Axis.polar(n2, AngleSpec(m, s, packing.params.epsilon), packing.height(n2))
    return a1, a2


def _certify_ring_classes(packing, n1, n2, ms, ss, mult, same, tally, precision_ceiling, trig,
                          hcache):
    n = len(ms)
    if n == 0:
        return
    n1a = np.full(n, n1, dtype=np.int64)
    n2a = np.full(n, n2, dtype=np.int64)
    thr_f = _threshold_float(tally.thr)
    nz = ms != 0
    if nz.any():
        idx = np.nonzero(nz)[0]
        d, und = _ring_class_batch(packing, n1a[idx], n2a[idx], ms[idx], ss[idx], trig, hcache)
        ok = _classify(d.lo, d.hi, und, thr_f)
        tally.add_batch(d.lo[ok], d.hi[ok], mult[idx][ok])
        rest = idx[~ok]
    else:
        rest = np.zeros(0, dtype=np.int64)
    todo = np.concatenate([np.nonzero(~nz)[0], rest])
    for t in todo.tolist():
        m, s = int(ms[t]), int(ss[t])
        a1, a2 = _class_axes(packing, n1, n2, m, s)
        v = decide_pair(a1, a2, tally.thr, precision_ceiling)
        pid = None
        if v.outcome in ("fail", "parallel", "unknown"):
            pid = _witness(packing, n1, n2, m, s, same)
        tally.add_verdict(pid, v, int(mult[t]))


def _certify_rings(packing: RingPacking, strategy, tally, precision_ceiling, threads):
    trig = _TrigCache(packing.params.epsilon)
    hcache: dict = {}
    rings = list(range(packing.n_lo, packing.n_hi + 1))
    if isinstance(strategy, (Exhaustive, RingLocal)):
        dn = None if isinstance(strategy, Exhaustive) else strategy.dn
        dj = None if isinstance(strategy, Exhaustive) else strategy.dj
        for a, n1 in enumerate(rings):
            for n2 in rings[a:]:
                if dn is not None and n2 - n1 > dn:
                    break
                k1, k2 = ring_scale(n1), ring_scale(n2)
                J1 = packing.counts[n1 - packing.n_lo]
                J2 = packing.counts[n2 - packing.n_lo]
                same = n1 == n2
                ms, mult = ring_pair_classes(J1, k1, J2, k2, same)
                if dj is not None:
                    sel = ms <= dj
                    ms, mult = ms[sel], mult[sel]
                ss = np.full(len(ms), k2, dtype=np.int64)
                _certify_ring_classes(packing, n1, n2, ms, ss, mult, same, tally,
                                      precision_ceiling, trig, hcache)
        if isinstance(strategy, RingLocal) and strategy.far_pairs:
            _certify_ring_random(packing, strategy.far_pairs, strategy.seed, tally,
                                 precision_ceiling, trig, hcache)
    elif isinstance(strategy, RandomPairs):
        _certify_ring_random(packing, strategy.count, strategy.seed, tally,
                             precision_ceiling, trig, hcache)
    elif isinstance(strategy, ExplicitPairs):
        pairs = np.array(strategy.pairs, dtype=np.int64).reshape(-1, 2)
        _certify_ring_index_pairs(packing, pairs[:, 0], pairs[:, 1], tally, precision_ceiling,
                                  trig, hcache)
    else:
        raise ValueError(f"strategy {strategy} not supported for ring packings")


def _certify_ring_random(packing, count, seed, tally, precision_ceiling, trig, hcache):
    pairs = random_index_pairs(len(packing), count, seed)
    _certify_ring_index_pairs(packing, pairs[:, 0], pairs[:, 1], tally, precision_ceiling,
                              trig, hcache)


def _locate_many(packing: RingPacking, idx: np.ndarray):
    r = np.searchsorted(packing.offsets, idx, side="right") - 1
    n = packing.n_lo + r
    j = idx - packing.offsets[r] + 1
    return n.astype(np.int64), j.astype(np.int64)


def _certify_ring_index_pairs(packing, I, J, tally, precision_ceiling, trig, hcache):
    n1, j1 = _locate_many(packing, I)
    n2, j2 = _locate_many(packing, J)
    k1 = np.array([ring_scale(int(v)) for v in n1.tolist()], dtype=np.int64)
    k2 = np.array([ring_scale(int(v)) for v in n2.tolist()], dtype=np.int64)
    s = np.maximum(k1, k2)
    m = np.abs(j2 * (1 << (s - k2)) - j1 * (1 << (s - k1)))
    thr_f = _threshold_float(tally.thr)
    nz = m != 0
    idx = np.nonzero(nz)[0]
    if len(idx):
        d, und = _ring_class_batch(packing, n1[idx], n2[idx], m[idx], s[idx], trig, hcache)
        ok = _classify(d.lo, d.hi, und, thr_f)
        tally.add_batch(d.lo[ok], d.hi[ok], np.ones(int(ok.sum()), dtype=np.int64))
        rest = idx[~ok]
    else:
        rest = idx
    for t in np.concatenate([np.nonzero(~nz)[0], rest]).tolist():
        a1, a2 = _class_axes(packing, int(n1[t]), int(n2[t]), int(m[t]), int(s[t]))
        v = decide_pair(a1, a2, tally.thr, precision_ceiling)
        tally.add_verdict((int(I[t]), int(J[t])), v)


# ---------------------------------------------------------------------------
# Domain certification


@dataclass(frozen=True)
class ParamBox:
    """Box of (d1, d2, angle) with closed ranges; angles in radians."""

    d1: tuple
    d2: tuple
    angle: tuple
    constants: dict
    integer: bool = True

    def __post_init__(self):
        for name in ("d1", "d2", "angle"):
            lo, hi = getattr(self, name)
            if as_fraction(lo) > as_fraction(hi):
                raise ValueError(f"empty range for {name}")

    def describe(self) -> dict:
        return {"d1": [format_fraction(as_fraction(v)) for v in self.d1],
                "d2": [format_fraction(as_fraction(v)) for v in self.d2],
                "angle": [format_fraction(as_fraction(v)) for v in self.angle],
                "constants": {k: format_scalar(v) for k, v in self.constants.items()},
                "integer": self.integer}


PREDICATES = ("kuperberg_ge_1", "shell_ge_factor")


@dataclass
class _Node:
    d1: tuple
    d2: tuple
    th: tuple
    piece: str      # "diag", "up", "down", "free"
    depth: int


def _pow_frac(x: Fraction, e: Fraction) -> tuple:
    """Rational bounds (lo, hi) for x^e with x > 0."""
    from .numerics import rational_power_bounds
    if e >= 0:
        return rational_power_bounds(x, e.numerator, e.denominator)
    lo, hi = rational_power_bounds(x, -e.numerator, e.denominator)
    return 1 / hi, 1 / lo


class DomainProver:
    """Interval branch-and-bound for one predicate over a ParamBox."""

    def __init__(self, box: ParamBox, predicate: str, max_depth: int = 40,
                 precision: int = 64, max_leaves: int = 2_000_000):
        if predicate not in PREDICATES:
            raise ValueError(f"predicate must be one of {PREDICATES}")
        self.box = box
        self.pred = predicate
        self.max_depth = max_depth
        self.prec = precision
        self.max_leaves = max_leaves
        c = box.constants
        if predicate == "kuperberg_ge_1":
            self.K, self.L, self.eps = c["K"], as_fraction(c["L"]), as_fraction(c["epsilon"])
            self.Ki = Interval.from_value(self.K, precision + 16)
        else:
            self.T1, self.T2 = as_fraction(c["T1"]), as_fraction(c["T2"])
            self.eps = as_fraction(c["epsilon"])
            self.alpha = as_fraction(c.get("alpha", Fraction(39, 40)))
        self.stats = {"leaves_certified": 0, "boxes_infeasible": 0, "splits": 0, "max_depth": 0}

    # hypothesis region ------------------------------------------------------
    def infeasible(self, n: _Node) -> bool:
        if self.pred == "kuperberg_ge_1":
            dmax = max(as_fraction(n.d1[1]), as_fraction(n.d2[1]))
            return as_fraction(n.th[1]) < (1 + self.eps) / dmax
        # |cos th| < d2^-alpha everywhere; d2^-alpha >= d2.hi^-alpha
        c = interval_cos(Interval.from_bounds(n.th[0], n.th[1], self.prec), self.prec)
        cmax = max(abs(c.lower()), abs(c.upper()))
        if c.lower() <= 0 <= c.upper():
            cmax = max(abs(c.lower()), c.upper())
        thr_lo, _ = _pow_frac(as_fraction(n.d2[1]), -self.alpha)
        return cmax < thr_lo or as_fraction(n.d1[0]) > as_fraction(n.d2[1])

    # leaf evaluation --------------------------------------------------------
    def leaf_ok(self, n: _Node) -> Optional[bool]:
        """True certified, False refuted at a concrete point, None undecided."""
        try:
            if self.pred == "kuperberg_ge_1":
                return True if self._kup_box(n) else None
            return True if self._shell_box(n) else None
        except (ZeroDivisionError, DenominatorError):
            return None

    def _angle_iv(self, n: _Node, dmax_hi: Fraction):
        lo = as_fraction(n.th[0])
        if self.pred == "kuperberg_ge_1":
            lo = max(lo, (1 + self.eps) / dmax_hi)
        return Interval.from_bounds(lo, n.th[1], self.prec)

    def _kup_box(self, n: _Node) -> bool:
        p = self.prec
        dmax = max(as_fraction(n.d1[1]), as_fraction(n.d2[1]))
        th = self._angle_iv(n, dmax)
        c = interval_cos(th, p + 16)
        u = (1 - c).round(p)
        if u.lo <= 0:
            return False
        K, L = self.Ki, Interval.from_value(self.L, p)
        if n.piece == "diag":
            d = Interval.from_bounds(n.d1[0], n.d1[1], p)
            P, S, g2 = d.sqr(), d * 2, Interval.from_value(0, p)
        else:
            d1 = Interval.from_bounds(n.d1[0], n.d1[1], p)
            d2 = Interval.from_bounds(n.d2[0], n.d2[1], p)
            P, S = d1 * d2, d1 + d2
            glo = as_fraction(n.d2[0]) - as_fraction(n.d1[1])
            ghi = as_fraction(n.d2[1]) - as_fraction(n.d1[0])
            if n.piece == "up":
                glo = max(glo, Fraction(1))
            elif n.piece == "down":
                ghi = min(ghi, Fraction(-1))
            if glo > ghi:
                return True  # empty piece
            g2 = Interval.from_bounds(glo, ghi, p).sqr()
        gamma = K * S + 2 * L
        uP = u * P
        # dist^2 - 1 = uP G / den with
        # G = uP (1 + gamma^2) + 2 [K L S (g^2 - 1) + L^2 (2 g^2 - 1 - P)] + L^2 g^2 (g^2 - 1) / (uP)
        G = (uP * (1 + gamma.sqr()) + 2 * (K * L * S * (g2 - 1) + L.sqr() * (2 * g2 - 1 - P))
             + L.sqr() * g2 * (g2 - 1) / uP)
        den = -(uP.sqr()) + 2 * uP * (L.sqr() * (1 + P) + K * L * S) + L.sqr() * g2
        if den.lo <= 0:
            return False
        if G.lo >= 0:
            return True
        # direct quotient as a second route
        num = uP.sqr() * gamma.sqr() + 2 * L * uP * gamma * g2 + L.sqr() * g2.sqr()
        return (num / den).lower() >= 1

    def _shell_box(self, n: _Node) -> bool:
        p = self.prec
        d1 = Interval.from_bounds(n.d1[0], n.d1[1], p)
        d2 = Interval.from_bounds(n.d2[0], n.d2[1], p)
        c = interval_cos(Interval.from_bounds(n.th[0], n.th[1], p), p)
        T1 = Interval.from_value(self.T1, p)
        T2 = Interval.from_value(self.T2, p)
        num = (d1.sqr() * T2 + d2.sqr() * T1 - (T1 + T2) * d1 * d2 * c).sqr()
        den = (1 - c.sqr()) * d2.sqr() * (d1.sqr() + T1.sqr()) + (d1 * T2 - c * T1 * d2).sqr()
        if den.lo <= 0:
            return False
        return (num - (1 - self.eps) * d1.sqr() * den).lo >= 0

    # point check for refutation --------------------------------------------
    def point_refutes(self, n: _Node) -> Optional[tuple]:
        """Evaluate at a feasible box corner; return the witness if violated."""
        if self.pred == "kuperberg_ge_1":
            d1 = as_fraction(n.d1[0])
            d2 = d1 if n.piece == "diag" else as_fraction(n.d2[0])
            if n.piece == "up" and d2 < d1 + 1:
                d2 = d1 + 1
            if n.piece == "down" and d1 < d2 + 1:
                d1 = d2 + 1
            th = max(as_fraction(n.th[0]), (1 + self.eps) / max(d1, d2))
            if th > as_fraction(n.th[1]) or d1 > as_fraction(n.d1[1]) or d2 > as_fraction(n.d2[1]):
                return None
            v = kuperberg_distance_sq(d1, d2, interval_cos(th, 128), self.K, self.L, 128)
            if v.upper() < 1:
                return (d1, d2, th)
            return None
        d1, d2, th = as_fraction(n.d1[0]), as_fraction(n.d2[1]), as_fraction(n.th[0])
        c = interval_cos(th, 128)
        thr_lo, thr_hi = _pow_frac(d2, -self.alpha)
        if not (abs(c.lower()) >= thr_hi and abs(c.upper()) >= thr_hi) or d1 > d2:
            return None
        v = shell_distance_sq(d1, d2, c, self.T1, self.T2, 128)
        if v.upper() < (1 - self.eps) * d1 * d1:
            return (d1, d2, th)
        return None

    # splitting ----------------------------------------------------------------
    def split(self, n: _Node) -> list:
        def rel(r):
            lo, hi = as_fraction(r[0]), as_fraction(r[1])
            return float((hi - lo) / lo) if lo > 0 else float(hi - lo)
        dims = [("d1", rel(n.d1)), ("d2", rel(n.d2) if n.piece != "diag" else -1.0),
                ("th", rel(n.th))]
        name = max(dims, key=lambda t: t[1])[0]   # max keeps the first of ties
        lo, hi = (as_fraction(v) for v in getattr(n, name))
        integer = self.box.integer and name in ("d1", "d2")
        if integer and hi - lo < 1:
            return []
        if lo > 0 and hi / lo > 4:
            mid = Fraction(math.isqrt(int(lo * hi))) if integer else _geo_mid(lo, hi)
        else:
            mid = (lo + hi) / 2
        if integer:
            mid = Fraction(math.floor(mid))
            parts = [(lo, mid), (mid + 1, hi)]
        else:
            parts = [(lo, mid), (mid, hi)]
        out = []
        for a, b in parts:
            kw = dict(d1=n.d1, d2=n.d2, th=n.th, piece=n.piece, depth=n.depth + 1)
            kw[name] = (a, b)
            if n.piece == "diag" and name == "d1":
                kw["d2"] = (a, b)
            out.append(_Node(**kw))
        return out

    def initial_nodes(self) -> list:
        b = self.box
        d1 = tuple(as_fraction(v) for v in b.d1)
        d2 = tuple(as_fraction(v) for v in b.d2)
        th = tuple(as_fraction(v) for v in b.angle)
        if self.pred != "kuperberg_ge_1" or not b.integer:
            return [_Node(d1, d2, th, "free", 0)]
        out = []
        lo, hi = max(d1[0], d2[0]), min(d1[1], d2[1])
        if lo <= hi:
            out.append(_Node((lo, hi), (lo, hi), th, "diag", 0))
        out.append(_Node(d1, d2, th, "up", 0))
        out.append(_Node(d1, d2, th, "down", 0))
        return out

    def _empty(self, n: _Node) -> bool:
        if n.piece == "up":
            return as_fraction(n.d2[1]) < as_fraction(n.d1[0]) + 1
        if n.piece == "down":
            return as_fraction(n.d1[1]) < as_fraction(n.d2[0]) + 1
        return False

    def run(self) -> Certificate:
        cert = Certificate({"box": self.box.describe(), "predicate": self.pred,
                            "max_depth": self.max_depth}, precision_ceiling=self.prec)
        nodes = self.initial_nodes()
        if all(self.infeasible(n) for n in nodes):
            raise PreconditionError("box lies outside the hypothesis region")
        stack = list(reversed(nodes))
        leaves = 0
        while stack:
            n = stack.pop()
            if self._empty(n):
                continue
            if self.infeasible(n):
                self.stats["boxes_infeasible"] += 1
                continue
            self.stats["max_depth"] = max(self.stats["max_depth"], n.depth)
            ok = self.leaf_ok(n)
            leaves += 1
            if ok:
                self.stats["leaves_certified"] += 1
                continue
            w = self.point_refutes(n)
            if w is not None:
                cert.failures.append((_box_id(n), f"violated at d1={w[0]}, d2={w[1]}, angle={w[2]}"))
                continue
            kids = self.split(n) if n.depth < self.max_depth else []
            if not kids or leaves > self.max_leaves:
                cert.unknown.append((_box_id(n), "undecided at max depth"))
                continue
            self.stats["splits"] += 1
            stack.extend(reversed(kids))
        cert.pairs_checked = leaves
        cert.extras = dict(self.stats)
        return cert


def _geo_mid(lo: Fraction, hi: Fraction) -> Fraction:
    m = Fraction(math.sqrt(float(lo) * float(hi)))
    return m if lo < m < hi else (lo + hi) / 2


def _box_id(n: _Node) -> dict:
    return {"d1": [str(v) for v in n.d1], "d2": [str(v) for v in n.d2],
            "angle": [str(v) for v in n.th], "piece": n.piece, "depth": n.depth}


def certify_domain(box: ParamBox, predicate: str, max_depth: int = 40,
                   precision: int = 64) -> Certificate:
    """Branch-and-bound proof of the named inequality over a parameter box."""
    return DomainProver(box, predicate, max_depth, precision).run()


def kuperberg_box(params, d_lo, d_hi, angle_hi=None) -> ParamBox:
    """The box d1, d2 in [d_lo, d_hi], angle in [(1+e)/d_hi, angle_hi]."""
    eps = params.epsilon
    if angle_hi is None:
        angle_hi = pi_interval(64).upper()
    return ParamBox((Fraction(d_lo), Fraction(d_hi)), (Fraction(d_lo), Fraction(d_hi)),
                    ((1 + eps) / d_hi, as_fraction(angle_hi)),
                    {"K": params.K, "L": params.L, "epsilon": eps}, integer=True)


# ---------------------------------------------------------------------------
# Dense grid falsification


@dataclass
class GridReport:
    points: int
    min_dist_sq: float
    argmin: tuple
    counterexamples: list

    @property
    def clean(self) -> bool:
        return not self.counterexamples


def _kup_float(d1, d2, c, K, L):
    u = 1 - c
    P = d1 * d2
    g2 = (d2 - d1) ** 2
    gamma = K * (d1 + d2) + 2 * L
    num = u * u * P * P * gamma * gamma + 2 * L * u * P * gamma * g2 + L * L * g2 * g2
    den = -(u * u * P * P) + 2 * u * P * (L * L * (1 + P) + K * L * (d1 + d2)) + L * L * g2
    return num / den


def dense_grid_falsify(params, d_lo: int, d_hi: int, band: int = 8, d_step_far: int = 64,
                       angle_step: float = 1e-3, near_boundary: int = 64,
                       confirm_precision: int = 128) -> GridReport:
    """Search for counterexamples to dist^2 >= 1 on a dense grid.

    Pairs with |d2 - d1| <= band use every integer d1; other pairs use
    d1, d2 on a grid of step d_step_far.  Angles start at the hypothesis
    boundary (1+e)/max(d1, d2), add ``near_boundary`` log-spaced samples
    just above it, then proceed in steps of ``angle_step`` up to pi.  Float
    candidates below 1 + 1e-9 are confirmed with interval arithmetic.
    """
    e = float(params.epsilon)
    K = float(params.K)
    L = float(params.L)
    thetas_rel = np.concatenate([[1.0], 1 + np.geomspace(1e-6, 1.0, near_boundary)])
    pairs = []
    for d1 in range(d_lo, d_hi + 1):
        for g in range(0, band + 1):
            if d1 + g <= d_hi:
                pairs.append((d1, d1 + g))
    far = range(d_lo, d_hi + 1, d_step_far)
    for d1 in far:
        for d2 in far:
            if d2 - d1 > band:
                pairs.append((d1, d2))
    pairs = np.array(pairs, dtype=np.float64)
    best = (np.inf, None)
    counter = []
    count = 0
    coarse = np.arange(0, math.pi, angle_step)
    for s in range(0, len(pairs), 2048):
        P = pairs[s:s + 2048]
        d1, d2 = P[:, 0:1], P[:, 1:2]
        tmin = (1 + e) / np.maximum(d1, d2)
        th = np.concatenate([tmin * thetas_rel[None, :], tmin + coarse[None, :]], axis=1)
        th = np.minimum(th, math.pi)
        # 1 - cos computed as 2 sin^2(th/2) to avoid cancellation
        u = 2 * np.sin(th / 2) ** 2
        v = _kup_float_u(d1, d2, u, K, L)
        count += v.size
        k = np.unravel_index(np.argmin(v), v.shape)
        if v[k] < best[0]:
            best = (float(v[k]), (int(d1[k[0], 0]), int(d2[k[0], 0]), float(th[k])))
        for r, c in zip(*np.nonzero(v < 1 + 1e-9)):
            a, b, t = int(d1[r, 0]), int(d2[r, 0]), Fraction(float(th[r, c]))
            iv = kuperberg_distance_sq(a, b, interval_cos(t, confirm_precision), params.K,
                                       params.L, confirm_precision)
            if iv.upper() < 1:
                counter.append((a, b, t))
    return GridReport(count, best[0], best[1], counter)


def _kup_float_u(d1, d2, u, K, L):
    P = d1 * d2
    g2 = (d2 - d1) ** 2
    gamma = K * (d1 + d2) + 2 * L
    num = u * u * P * P * gamma * gamma + 2 * L * u * P * gamma * g2 + L * L * g2 * g2
    den = -(u * u * P * P) + 2 * u * P * (L * L * (1 + P) + K * L * (d1 + d2)) + L * L * g2
    return num / den


# ---------------------------------------------------------------------------
# Lemma-level checks


def check_ismailescu(r, R, T, A1, A2, precision: int = 128) -> tuple[bool, bool]:
    """Return (8 r^2 T >= R^4, dist >= 2 r (1 - 1/T)) for axes with height T.

    The preconditions |A1 A2| >= 2r and |A1|, |A2| <= R raise
    PreconditionError when violated.
    """
    r, R, T = as_fraction(r), as_fraction(R), as_fraction(T)
    A1 = tuple(as_fraction(v) if not isinstance(v, QuadSurd) else v for v in A1)
    A2 = tuple(as_fraction(v) if not isinstance(v, QuadSurd) else v for v in A2)
    dx, dy = A2[0] - A1[0], A2[1] - A1[1]
    if exact_sign(dx * dx + dy * dy - 4 * r * r) < 0:
        raise PreconditionError("|A1 A2| < 2r")
    for A in (A1, A2):
        if exact_sign(A[0] * A[0] + A[1] * A[1] - R * R) > 0:
            raise PreconditionError("anchor outside the ball of radius R")
    pre = 8 * r * r * T >= R ** 4
    l1 = Axis((A1[0], A1[1]), T).line()
    l2 = Axis((A2[0], A2[1]), T).line()
    target = (2 * r * (1 - 1 / T)) ** 2
    d = skew_distance_sq_exact(l1, l2)
    return pre, exact_sign(d - target) >= 0


@dataclass(frozen=True)
class ShellPairCheck:
    k1: int
    k2: int
    passed: bool
    detail: str


def check_nonparallel_shells(params: ShellParams) -> list[ShellPairCheck]:
    """Exact check that shell norm ratios never reach the height ratios.

    Axes (x, y, 0) + t(y, -x, T) from shells k1 < k2 are parallel only if
    x2 = (T2/T1) x1, which needs |x2|/|x1| = T2/T1.  The largest possible
    norm ratio is 2^(hi a_k2) / 2^(lo a_k1); the check is
    2^(hi a_k2) T1 < T2 2^(lo a_k1), in exact integers.  Same-shell pairs
    would need T2/T1 = 1, i.e. identical anchors.
    """
    seq = shell_sequences(params)
    out = []
    for k1 in range(params.k_min, params.k_max + 1):
        for k2 in range(k1, params.k_max + 1):
            a1, T1 = seq[k1 - 1]
            a2, T2 = seq[k2 - 1]
            if k1 == k2:
                out.append(ShellPairCheck(k1, k2, True, "same shell: ratio 1 forces identical anchors"))
                continue
            lo1, _ = params.shell_bounds(a1)
            _, hi2 = params.shell_bounds(a2)
            ok = (T1 << hi2) < (T2 << lo1)
            out.append(ShellPairCheck(k1, k2, ok, f"2^{hi2} * T{k1} < T{k2} * 2^{lo1}"))
    return out


def smallest_passing_k0(packing, pairs: np.ndarray, epsilon, precision_ceiling: int = 256):
    """Smallest k0 such that every sampled cross-shell pair with both shells
    >= k0 satisfies dist^2 >= (1 - e) d1^2 (d1 the smaller norm).

    Returns (k0 or None, per-pair shells and outcomes).
    """
    e = as_fraction(epsilon)
    shells = np.asarray(packing.shell_of)
    results = []
    for i, j in pairs.tolist():
        k1, k2 = int(shells[i]), int(shells[j])
        if k1 == k2:
            continue
        a1, a2 = packing[i].axis, packing[j].axis
        n1, n2 = a1.norm_sq(), a2.norm_sq()
        d1sq = min(n1, n2, key=lambda v: Interval.from_value(v, 64).mid())
        thr = (1 - e) * d1sq
        l1, l2 = a1.line(), a2.line()
        d = skew_distance_sq_exact(l1, l2)
        results.append((min(k1, k2), exact_sign(d - thr) >= 0))
    if not results:
        return None, results
    ks = sorted({k for k, _ in results})
    for k0 in ks:
        if all(ok for k, ok in results if k >= k0):
            return k0, results
    return None, results
