"""Command-line entry point: gen, certify, density, verify."""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import certify as C
from . import constructions as K
from . import density as D
from .geom import (
    DELTA_VARIANTS,
    Axis,
    DenominatorError,
    planar_pair_lines,
    pythagorean_angle,
    delta_terms,
    kuperberg_distance_sq_exact,
    shell_distance_sq_exact,
    skew_distance_sq_exact,
)
from .numerics import AngleSpec, as_fraction, exact_sign, format_fraction, format_scalar

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_UNKNOWN = 0, 1, 2, 3


@dataclass
class RunConfig:
    subcommand: str
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return K.config_hash(self.to_dict())


class UsageError(ValueError):
    pass


def _rational(s: str) -> Fraction:
    try:
        return as_fraction(s)
    except (ValueError, TypeError) as e:
        raise argparse.ArgumentTypeError(f"expected an exact rational 'num/den', got {s!r}") from e


_RING_TERM = re.compile(r"^\s*(\d*)\s*(r0)?\s*([+-]\s*\d+)?\s*$")


def parse_ring_bound(text: str, r0: int) -> int:
    """Evaluate 'r0', '4r0', 'r0+3', '8192' and the like."""
    m = _RING_TERM.match(text)
    if not m or (not m.group(1) and not m.group(2)):
        raise UsageError(f"bad ring bound {text!r}")
    mult, has_r0, off = m.group(1), m.group(2), m.group(3)
    if has_r0:
        v = (int(mult) if mult else 1) * r0
    else:
        if off:
            raise UsageError(f"bad ring bound {text!r}")
        return int(mult)
    return v + (int(off.replace(" ", "")) if off else 0)


def parse_rings(text: str, r0: int) -> tuple[int, int]:
    if ".." not in text:
        raise UsageError("rings must be written LO..HI")
    lo, hi = text.split("..", 1)
    a, b = parse_ring_bound(lo, r0), parse_ring_bound(hi, r0)
    if b < a:
        raise UsageError("empty ring range")
    return a, b


# ---------------------------------------------------------------------------
# gen


def _near_touch_packing(params: K.KuperbergParams, gap_bits: int) -> K.Packing:
    """Two collinear ring axes at squared distance exactly 1, radius shrunk by 2^-gap_bits.

    The pair passes with margin about 2^-gap_bits, which no float or
    low-precision enclosure can resolve.
    """
    n = params.r0
    ang = AngleSpec(1, K.ring_scale(n), params.epsilon)
    rad = (1 - Fraction(1, 1 << gap_bits)) / 2
    cyl = [K.CylinderSpec(Axis.polar(m, ang, params.height(m)), rad) for m in (n, n + 1)]
    prov = {"construction": "near-touch", "gap_bits": gap_bits, **params.as_dict()}
    return K.Packing(cyl, rad, prov)


def cmd_gen(args) -> int:
    cfg = RunConfig("gen", {k: _plain(v) for k, v in vars(args).items() if k != "func"})
    t0 = time.perf_counter()
    if args.construction in ("kuperberg", "near-touch"):
        params = K.select_kuperberg_params(args.epsilon)
        if args.construction == "near-touch":
            pk = _near_touch_packing(params, args.gap_bits)
        else:
            lo, hi = parse_rings(args.rings or "r0..r0+3", params.r0)
            heights = {}
            for n in args.perturb or []:
                n = parse_ring_bound(n, params.r0)
                heights[n] = params.K * n
            try:
                pk = K.build_kuperberg_packing(params, lo, hi, enforce_r0=not args.allow_below_r0,
                                               heights=heights or None)
            except ValueError as e:
                raise UsageError(str(e)) from e
        print(f"params: epsilon={format_fraction(params.epsilon)} L={format_fraction(params.L)} "
              f"K={format_scalar(params.K)} r0={params.r0}")
    elif args.construction == "shell":
        sp = K.ShellParams(a_growth=args.a_growth, t_exponent=args.t_exp, k_max=args.kmax)
        lat = _hex()
        filt = K.shell_filter(lat, sp)
        for s in filt.shells:
            print(f"shell {s.k}: a={s.a_k} candidates={s.candidates} removed={s.removed} "
                  f"({s.removed_fraction:.3f})")
        if args.audit:
            audit = K.shell_filter_bruteforce(lat, sp)
            ok = audit == filt.removed_counts()
            print(f"recount audit: {'match' if ok else 'MISMATCH'} {audit}")
            if not ok:
                return EXIT_FAIL
        pk = K.build_shell_packing(filt, radius_rule="half")
    else:  # argparse restricts choices
        raise UsageError(args.construction)
    h = K.write_packing(pk, args.out)
    print(f"wrote {len(pk)} cylinders to {args.out} (config {h}, run {cfg.hash()}) "
          f"in {time.perf_counter() - t0:.2f}s")
    return EXIT_OK


def _hex():
    lat = K.hexagonal_lattice(1)
    return lat[0] if isinstance(lat, tuple) else lat


def _plain(v):
    if isinstance(v, Fraction):
        return format_fraction(v)
    return v


# ---------------------------------------------------------------------------
# certify


def _strategy(args, packing):
    s = args.strategy
    if s == "exhaustive":
        return C.Exhaustive()
    if s == "random":
        return C.RandomPairs(args.count, args.seed)
    if s == "ring-local":
        return C.RingLocal(args.dn, args.dj, args.count, args.seed)
    if s == "cross-groups":
        return C.CrossGroups()
    if s == "neighbours":
        return C.Neighbours(args.neighbour_radius)
    raise UsageError(s)


def cmd_certify(args) -> int:
    cfg = RunConfig("certify", {k: _plain(v) for k, v in vars(args).items() if k != "func"})
    try:
        pk = K.read_packing(args.packing)
    except FileNotFoundError:
        print(f"no such packing file: {args.packing}", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    cert = C.certify_packing(pk, args.radius_threshold, _strategy(args, pk),
                             precision_ceiling=args.precision_ceiling, threads=args.threads)
    cert.extras["config_hash"] = cfg.hash()
    cert.extras["packing_hash"] = K.config_hash(pk.provenance)
    with open(args.out, "w") as fh:
        fh.write(cert.to_json(indent=1) + "\n")
    md = cert.min_distance_sq
    mds = "n/a" if md is None else f"[{float(md[0]):.6g}, {float(md[1]):.6g}]"
    print(f"status={cert.status} pairs={cert.pairs_checked} min_dist_sq={mds} "
          f"touching={cert.touching_pairs} parallel={cert.parallel_pairs} "
          f"failures={len(cert.failures)} unknown={len(cert.unknown)} "
          f"({time.perf_counter() - t0:.2f}s)")
    if cert.failures:
        print(f"witness: {cert.failures[0]}")
    return {C.CERTIFIED: EXIT_OK, C.REFUTED: EXIT_FAIL, C.UNKNOWN: EXIT_UNKNOWN}[cert.status]


# ---------------------------------------------------------------------------
# density


def ring_density_summary(epsilon, k_max: int, c_points: int, k_tail_lo: int = 6):
    """Power-of-two profile and c-grid families for the ring construction from n = 1."""
    cs = K.ring_circle_set(epsilon, 1, 1 << (k_max + 1))
    table = D.NormTable(cs)
    low = D.density_profile(table, D.powers_of_two(0, k_max),
                            {"schedule": "powers-of-two", "k_max": k_max})
    fams = {}
    for c in D.c_grid(c_points):
        radii = [r for r in D.subsequence_radii(c, k_tail_lo, k_max) if r <= (1 << k_max)]
        fams[c] = D.density_profile(table, radii, {"schedule": "2^k(1+c)", "c": format_fraction(c)})
    return low, fams


def cmd_density(args) -> int:
    cfg = RunConfig("density", {k: _plain(v) for k, v in vars(args).items() if k != "func"})
    try:
        pk = K.read_packing(args.packing)
    except FileNotFoundError:
        print(f"no such packing file: {args.packing}", file=sys.stderr)
        return EXIT_USAGE
    header = {"config_hash": cfg.hash(), "packing_hash": K.config_hash(pk.provenance)}
    prov = pk.provenance
    if prov.get("construction") == "kuperberg":
        eps = as_fraction(prov["epsilon"])
        low, fams = ring_density_summary(eps, args.k_max, args.c_points)
        low.to_csv(args.out, header)
        try:
            est = D.subsequence_max_estimate(fams, tolerance=args.tolerance)
        except D.NonStabilizedError as e:
            print(f"upper estimate failed: {e}")
            return EXIT_FAIL
        lo_t = math.pi / (6 * (1 + float(eps)))
        hi_t = 3 * math.pi / (16 * (1 + float(eps)))
        print(f"lower density (power-of-two tail at 2^{args.k_max}): "
              f"{float(low.values[-1].mid()):.6f} target {lo_t:.6f}")
        print(f"upper density (c-grid max, c={format_fraction(est.argmax_c)}): "
              f"{float(est.value.mid()):.6f} target {hi_t:.6f}")
        if args.svg:
            low.to_svg(args.svg, {"lower": lo_t, "upper": hi_t})
        return EXIT_OK
    if len(pk) == 0:
        prof = D.DensityProfile([Fraction(1)], [D.Interval.from_value(0)], {"empty": True})
        prof.to_csv(args.out, header)
        print("lower density 0.000000, upper density 0.000000 (empty packing)")
        return EXIT_OK
    circles = K.dual_circle_packing(pk)
    table = D.NormTable(circles)
    rmax = math.sqrt(float(table.fkeys[-1]))
    kmax = max(0, int(math.floor(math.log2(rmax))))
    sched = D.powers_of_two(0, kmax)
    prof = D.density_profile(table, sched, {"schedule": "powers-of-two"})
    prof.to_csv(args.out, header)
    print(f"profile over r = 1..2^{kmax}: max {prof.midpoints().max():.6f} "
          f"at r = {sched[int(prof.midpoints().argmax())]}")
    shells = getattr(pk, "shell_of", None)
    if shells:
        tails = shell_tail_maxima(pk, table)
        for k, v in tails:
            print(f"shell {k} tail max {v:.6f}")
        mono = all(b >= a for (_, a), (_, b) in zip(tails, tails[1:]))
        print(f"shell tail maxima monotone: {mono}")
    if args.svg:
        prof.to_svg(args.svg)
    return EXIT_OK


def shell_tail_maxima(pk, table: "D.NormTable", samples: int = 16) -> list:
    """Max density ratio over radii inside each shell's annulus."""
    params = K.ShellParams(**{k: v for k, v in pk.provenance["params"].items()
                              if k != "angle_exponent"},
                           angle_exponent=as_fraction(pk.provenance["params"]["angle_exponent"]))
    out = []
    for k in sorted(set(pk.shell_of)):
        a_k = K.shell_sequences(params)[k - 1][0]
        lo, hi = params.shell_bounds(a_k)
        radii = sorted({Fraction(round(2 ** (lo + (hi - lo) * t / samples)))
                        for t in range(1, samples + 1)})
        vals = [float(D.density_ratio(table, r).mid()) for r in radii]
        out.append((k, max(vals)))
    return out


# ---------------------------------------------------------------------------
# verify


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str


def random_pythagorean_config(g, d_hi: int = 2000):
    """Integer norms d1, d2 and an angle with rational cosine and sine."""
    d1 = int(g.integers(1, d_hi))
    d2 = int(g.integers(1, d_hi))
    m = int(g.integers(2, 200))
    n = int(g.integers(1, m))
    c, s = pythagorean_angle(m, n)
    return d1, d2, c, s


def verify_suite(seed: int = 0, inject_bad_shell: bool = False, scale: int = 1) -> list[PropertyResult]:
    g = np.random.Generator(np.random.Philox(seed))
    res = []
    # formula equivalences in exact arithmetic
    params = K.select_kuperberg_params(Fraction(1, 10))
    n = 200 * scale
    bad = skipped = 0
    for _ in range(n):
        d1, d2, c, sn = random_pythagorean_config(g)
        l1, l2 = planar_pair_lines(d1, d2, c, params.height(d1), params.height(d2), sine=sn)
        try:
            a = kuperberg_distance_sq_exact(d1, d2, c, params.K, params.L)
        except DenominatorError:
            skipped += 1
            continue
        bad += exact_sign(a - skew_distance_sq_exact(l1, l2)) != 0
    res.append(PropertyResult("ring closed form = generic skew distance", bad == 0,
                              f"{n} exact cases, seed {seed}, {bad} mismatches, {skipped} degenerate"))
    bad = skipped = 0
    for _ in range(n):
        d1, d2, c, sn = random_pythagorean_config(g)
        T1 = int(g.integers(1, 50))
        T2 = T1 * int(g.integers(2, 50))
        l1, l2 = planar_pair_lines(d1, d2, c, T1, T2, sine=sn)
        try:
            a = shell_distance_sq_exact(d1, d2, c, T1, T2)
        except DenominatorError:
            skipped += 1
            continue
        bad += exact_sign(a - skew_distance_sq_exact(l1, l2)) != 0
    res.append(PropertyResult("shell closed form = generic skew distance", bad == 0,
                              f"{n} exact cases, seed {seed}, {bad} mismatches, {skipped} degenerate"))
    # delta variants
    rep = {v: delta_terms(200, 203, Fraction(99, 100), params.K, params.L, variant=v)
           for v in DELTA_VARIANTS}
    ok = rep["corrected"].matches_difference and not rep["printed"].matches_difference
    res.append(PropertyResult("delta variant comparison", ok,
                              "printed: matches N-D = %s; corrected: matches N-D = %s"
                              % (rep["printed"].matches_difference, rep["corrected"].matches_difference)))
    # thin-cylinder lemma grid
    viol = pre_bad = 0
    m = 500 * scale
    for _ in range(m):
        r = Fraction(int(g.integers(1, 20)), int(g.integers(1, 20)))
        R = r * int(g.integers(2, 20))
        T = max(1, math.ceil(R ** 4 / (8 * r * r)))
        T += int(g.integers(0, 5))
        A1, A2 = _anchors_in_ball(g, r, R)
        pre, ok = C.check_ismailescu(r, R, T, A1, A2)
        pre_bad += not pre
        viol += not ok
    res.append(PropertyResult("thin-cylinder distance bound", viol == 0 and pre_bad == 0,
                              f"{m} tuples, {viol} violations"))
    # shell ratios
    sp = K.ShellParams(a_growth=2, t_exponent=1, k_max=3) if inject_bad_shell else \
        K.ShellParams(a_growth=2, t_exponent=3, k_max=3)
    for label, p in (("full-size", K.FULL_SHELL_PARAMS), ("scaled", sp)):
        checks = C.check_nonparallel_shells(p)
        ok = all(c.passed for c in checks)
        res.append(PropertyResult(f"shell height ratios ({label})", ok,
                                  f"{len(checks)} shell pairs, {sum(not c.passed for c in checks)} failing"))
    # sector counts
    lat = _hex()
    disc = D.LatticeDisc(lat, 64)
    mism = 0
    for t in range(5):
        a = Fraction(int(g.integers(0, 3000)), 1000)
        b = a + Fraction(int(g.integers(100, 3000)), 1000)
        mism += disc.sector(a, b) != D.sector_count_bruteforce(lat, 64, a, b)
    full = D.sector_count(lat, 256, 0, D.TWO_PI)
    dens = full.count / (math.pi * 256 ** 2)
    ok = mism == 0 and abs(dens / (2 / math.sqrt(3)) - 1) < 0.01
    res.append(PropertyResult("lattice sector counts", ok,
                              f"brute-force mismatches {mism}, full-ball density {dens:.5f}"))
    # dual-volume Monte Carlo
    mc_ok = True
    details = []
    for t in range(2):
        x, y = int(g.integers(-30, 30)), int(g.integers(-30, 30))
        cyl = K.CylinderSpec(Axis((Fraction(x), Fraction(y)), Fraction(int(g.integers(1, 40)))),
                             Fraction(1, 2))
        mc = D.mc_volume_check(cyl, 50, 10 ** 6 * scale, seed=seed + t)
        mc_ok &= bool(mc.agrees)
        details.append(f"{mc.diff:+.3f}+-{mc.se_diff:.3f}")
    res.append(PropertyResult("dual cylinder volumes", mc_ok, ", ".join(details)))
    # density curve
    c_star, val, c_grid = D.curve_argmax(Fraction(1, 10))
    res.append(PropertyResult("density curve argmax", c_star == Fraction(1, 3),
                              f"c* = {c_star}, grid {c_grid:.6f}, value {float(val.mid()):.6f}"))
    return res


def _anchors_in_ball(g, r, R):
    while True:
        pts = []
        for _ in range(2):
            while True:
                x = Fraction(int(g.integers(-1000, 1001)), 1000) * R
                y = Fraction(int(g.integers(-1000, 1001)), 1000) * R
                if x * x + y * y <= R * R:
                    pts.append((x, y))
                    break
        (x1, y1), (x2, y2) = pts
        if (x2 - x1) ** 2 + (y2 - y1) ** 2 >= 4 * r * r:
            return pts


def cmd_verify(args) -> int:
    cfg = RunConfig("verify", {k: _plain(v) for k, v in vars(args).items() if k != "func"})
    res = verify_suite(args.seed, args.inject_bad_shell, args.scale)
    for r in res:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"config_hash": cfg.hash(), "seed": args.seed,
                       "results": [asdict(r) for r in res]}, fh, indent=1, sort_keys=True)
    return EXIT_OK if all(r.passed for r in res) else EXIT_FAIL


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cylpack", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a packing file")
    g.add_argument("--construction", choices=("kuperberg", "shell", "near-touch"), default="kuperberg")
    g.add_argument("--epsilon", type=_rational, default=Fraction(1, 10))
    g.add_argument("--rings", help="ring range LO..HI, e.g. r0..r0+3")
    g.add_argument("--perturb", action="append", metavar="N",
                   help="replace ring N's height K*n+L by K*n (deliberate violation)")
    g.add_argument("--allow-below-r0", action="store_true")
    g.add_argument("--gap-bits", type=int, default=60)
    g.add_argument("--a-growth", type=int, default=2)
    g.add_argument("--t-exp", type=int, default=3)
    g.add_argument("--kmax", type=int, default=3)
    g.add_argument("--audit", action="store_true", help="recount removed points by brute force")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("certify", help="certify a packing file")
    c.add_argument("packing")
    c.add_argument("--out", required=True)
    c.add_argument("--strategy", default="exhaustive",
                   choices=("exhaustive", "random", "ring-local", "cross-groups", "neighbours"))
    c.add_argument("--count", type=int, default=10 ** 5)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--dn", type=int, default=1)
    c.add_argument("--dj", type=int, default=8)
    c.add_argument("--neighbour-radius", type=_rational, default=Fraction(4))
    c.add_argument("--radius-threshold", type=_rational, default=None)
    c.add_argument("--precision-ceiling", type=int, default=256)
    c.add_argument("--threads", type=int, default=1)
    c.set_defaults(func=cmd_certify)

    d = sub.add_parser("density", help="density profile of a packing file")
    d.add_argument("packing")
    d.add_argument("--out", required=True)
    d.add_argument("--svg")
    d.add_argument("--k-max", type=int, default=13)
    d.add_argument("--c-points", type=int, default=64)
    d.add_argument("--tolerance", type=float, default=0.02)
    d.add_argument("--threads", type=int, default=1)
    d.set_defaults(func=cmd_density)

    v = sub.add_parser("verify", help="run the property suite")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--scale", type=int, default=1)
    v.add_argument("--inject-bad-shell", action="store_true")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
