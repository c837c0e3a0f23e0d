import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cylpack.constructions import (
    FULL_SHELL_PARAMS,
    AxisParallelToPlane,
    CylinderSpec,
    EpsilonSchedule,
    Lattice2,
    ShellParams,
    SizeGuardError,
    build_kuperberg_packing,
    build_shell_packing,
    dual_circle_packing,
    dual_cylinder,
    hexagonal_lattice,
    kl_conditions,
    lattice_min_distance_sq,
    r0_conditions,
    read_packing,
    ring_count,
    ring_points,
    ring_scale,
    select_kuperberg_params,
    shell_filter,
    shell_filter_bruteforce,
    shell_sequences,
    write_packing,
)
from cylpack.geom import Axis, Line3, skew_distance_sq_exact
from cylpack.numerics import AngleSpec, QuadSurd, exact_sign

E = Fraction(1, 10)
PARAMS = select_kuperberg_params(E)
SCALED = ShellParams(a_growth=2, t_exponent=3, k_max=3)


# --- parameters ----------------------------------------------------------


def test_params_for_one_tenth():
    # golden values, frozen after the oracle checks below
    assert PARAMS.L == 16
    assert PARAMS.K == QuadSurd(0, 1, 255)
    assert PARAMS.r0 == 8192
    assert PARAMS.K * PARAMS.K + 1 == PARAMS.L * PARAMS.L


def test_L_matches_closed_form_bound():
    # the h-free condition is L^2 >= (1 + 2e + e^2/2) / (e^2/2)
    bound = (1 + 2 * E + E * E / 2) / (E * E / 2)
    assert bound == 241
    assert PARAMS.L ** 2 >= bound > (PARAMS.L - Fraction(1, 2)) ** 2
    assert not all(c.holds for c in kl_conditions(E, PARAMS.L - Fraction(1, 2)))


def test_r0_is_minimal_power_of_two():
    assert all(c.holds for c in r0_conditions(E, PARAMS.L, PARAMS.r0))
    assert not all(c.holds for c in r0_conditions(E, PARAMS.L, PARAMS.r0 // 2))


def test_r0_conditions_against_float_oracle():
    """Direct evaluation of the conditions at sampled d >= r0 with mpmath."""
    e, L = mpmath.mpf(1) / 10, mpmath.mpf(16)
    K = mpmath.sqrt(L * L - 1)
    delta = (1 - mpmath.sqrt(1 - 4 * e)) / 4
    for d in [8192, 8193, 10 ** 4, 3 * 8192, 10 ** 6]:
        d = mpmath.mpf(d)
        assert 1 - mpmath.cos((1 + e) / d) > (1 + e / 2) / (2 * d * d)
        assert L * L + 2 * K * L * d < e / 4 * L * L * d * d
        assert delta ** 2 * (delta ** 2 * d * d - 1) >= 250


def test_larger_epsilon_needs_smaller_L():
    assert select_kuperberg_params(Fraction(1)).L < PARAMS.L
    assert select_kuperberg_params(Fraction(1, 2)).L < PARAMS.L


# --- rings ---------------------------------------------------------------


def test_ring_counts():
    assert ring_count(0, E) == 5 == math.floor(2 * math.pi / 1.1)
    assert len(ring_points(1, E)) == 5
    assert ring_count(13, E) == 46792
    for k in range(0, 40, 3):
        assert ring_count(k, E) == int(mpmath.floor(2 * mpmath.pi * 2 ** k / mpmath.mpf("1.1")))


@given(st.integers(1, 30))
def test_ring_count_depends_on_scale_only(k):
    n = 1 << k
    assert ring_scale(n) == k and ring_scale(2 * n - 1) == k
    if k <= 8:
        assert len(ring_points(n, E)) == len(ring_points(2 * n - 1, E)) == ring_count(k, E)
    # doubling up to the floor
    assert abs(ring_count(k, E) - 2 * ring_count(k - 1, E)) <= 1


def test_consecutive_ring_angles():
    pts = ring_points(37, E)
    for (_, a), (_, b) in zip(pts, pts[1:]):
        assert b.value - a.value == (1 + E) / (1 << ring_scale(37))
    assert pts[-1][1].value < 2 * math.pi


def test_packing_counts_and_axes():
    pk = build_kuperberg_packing(PARAMS, PARAMS.r0, PARAMS.r0 + 3)
    assert len(pk) == sum(ring_count(13, E) for _ in range(4)) == 187168
    for i in (0, 1, 46791, 46792, len(pk) - 1):
        ax = pk[i].axis
        ln = ax.line(64)
        dot = ln.anchor[0] * ln.direction[0] + ln.anchor[1] * ln.direction[1]
        assert 0 in dot
    with pytest.raises(ValueError):
        build_kuperberg_packing(PARAMS, 5, 10)


def test_collinear_pairs_distance_at_least_one():
    pk = build_kuperberg_packing(PARAMS, PARAMS.r0, PARAMS.r0 + 3)
    # same j on consecutive rings of the same scale lie on one ray
    a, b = pk.axis(PARAMS.r0, 7), pk.axis(PARAMS.r0 + 2, 7)
    assert a.anchor.angle == b.anchor.angle
    # rotate to the x-axis: exact lines
    la = Axis((Fraction(PARAMS.r0), Fraction(0)), a.H).line()
    lb = Axis((Fraction(PARAMS.r0 + 2), Fraction(0)), b.H).line()
    assert exact_sign(skew_distance_sq_exact(la, lb) - 1) >= 0


@given(st.integers(0, 3), st.integers(1, 46792), st.integers(0, 3), st.integers(1, 46792))
@settings(max_examples=200)
def test_noncollinear_pairs_meet_angle_hypothesis(r1, j1, r2, j2):
    n1, n2 = PARAMS.r0 + r1, PARAMS.r0 + r2
    a1, a2 = AngleSpec(j1, 13, E), AngleSpec(j2, 13, E)
    if j1 == j2:
        return
    diff = abs(a1.value - a2.value)
    gap = min(diff, 2 * Fraction(math.pi) - diff)  # exact grid spacing dominates float error
    assert diff >= (1 + E) / max(n1, n2)
    assert gap > (1 + E) / max(n1, n2) / 2


# --- shells --------------------------------------------------------------


def test_shell_sequences():
    seq = shell_sequences(ShellParams(k_max=2))
    assert seq[1] == (100, 1 << 1000)
    scaled = shell_sequences(SCALED)
    assert [a for a, _ in scaled] == [1, 2, 4]
    assert scaled[1][1] == 1 << 6
    for (a0, t0), (a1, t1) in zip(scaled, scaled[1:]):
        assert t1 // t0 == 1 << (3 * a1)
    with pytest.raises(SizeGuardError):
        shell_sequences(ShellParams(k_max=4))
    assert len(shell_sequences(FULL_SHELL_PARAMS)) == 3


def test_shells_disjoint():
    seq = shell_sequences(SCALED)
    bounds = [SCALED.shell_bounds(a) for a, _ in seq]
    for (lo0, hi0), (lo1, hi1) in zip(bounds, bounds[1:]):
        assert hi0 <= lo1


def test_hexagonal_lattice():
    lat, pts = hexagonal_lattice(1, 512)
    assert lattice_min_distance_sq(lat) == 1
    dens = len(pts) / (math.pi * 512 ** 2)
    assert abs(dens / (2 / math.sqrt(3)) - 1) < 0.01
    di = lat.density_interval(64)
    target = 2 / mpmath.sqrt(3)
    lo, hi = di.lower(), di.upper()
    assert mpmath.mpf(lo.numerator) / lo.denominator <= target <= mpmath.mpf(hi.numerator) / hi.denominator


def test_lattice_enumeration_lexicographic():
    lat = hexagonal_lattice(1)
    pts = lat.enumerate(6)
    assert [tuple(p) for p in pts] == sorted(tuple(p) for p in pts)


@pytest.fixture(scope="module")
def small_filter():
    sp = ShellParams(a_growth=2, t_exponent=3, k_max=2)
    return hexagonal_lattice(1), sp, shell_filter(hexagonal_lattice(1), sp)


def test_first_shell_untouched_and_audit(small_filter):
    lat, sp, res = small_filter
    assert res.shells[0].removed == 0
    assert res.removed_counts() == shell_filter_bruteforce(lat, sp)


def test_perpendicular_candidate_removed():
    lat = Lattice2((Fraction(1), Fraction(0)), (Fraction(0), Fraction(1)))
    sp = ShellParams(a_growth=2, t_exponent=3, k_max=2)
    res = shell_filter(lat, sp)
    kept1 = [tuple(p) for p in res.shells[0].coords.tolist()]
    kept2 = {tuple(p) for p in res.shells[1].coords.tolist()}
    lo, hi = sp.shell_bounds(2)
    checked = 0
    for x, y in kept1:
        for m in range(1, 200):
            q = (-y * m, x * m)
            n2 = q[0] ** 2 + q[1] ** 2
            if (1 << (2 * lo)) < n2 <= (1 << (2 * hi)):
                assert q not in kept2  # cos = 0 is always removed
                checked += 1
    assert checked > 0


def test_build_shell_packing_rescaling(small_filter):
    lat, sp, res = small_filter
    plain = build_shell_packing(res)
    for c in plain[:5]:
        assert isinstance(c.axis.anchor, tuple)
    sched = EpsilonSchedule(((1, Fraction(1, 10)), (2, Fraction(1, 20))))
    resc = build_shell_packing(res, sched)
    for a, b in zip(plain, resc):
        k = 1 if b.axis.H == Fraction(10, 9) * a.axis.H else 2
        lam = Fraction(10, 9) if k == 1 else Fraction(20, 19)
        # rescaled axis is lam times the original line, as a set
        assert b.axis == a.axis.scaled(lam)


def test_rescaled_distance_chain(small_filter):
    """dist(l'_1, l'_2) >= dist(l_1, l_2) - |lam2/lam1 - 1| d1 on sampled pairs."""
    lat, sp, res = small_filter
    sched = EpsilonSchedule(((1, Fraction(1, 10)), (2, Fraction(1, 20))))
    a = build_shell_packing(res)
    b = build_shell_packing(res, sched)
    g = np.random.Generator(np.random.Philox(3))
    n = len(a)
    for _ in range(100):
        i, j = (int(x) for x in g.choice(n, 2, replace=False))
        d = math.sqrt(float(skew_distance_sq_exact(a[i].axis.line(), a[j].axis.line())))
        dp = math.sqrt(float(skew_distance_sq_exact(b[i].axis.line(), b[j].axis.line())))
        e1 = sched.epsilon_for(a.shell_of[i])
        e2 = sched.epsilon_for(a.shell_of[j])
        d1 = math.sqrt(float(min(a[i].axis.norm_sq(), a[j].axis.norm_sq())))
        slack = abs(float((1 - e2) / (1 - e1)) - 1) * d1
        assert dp >= d - slack - 1e-9


# --- dual objects ----------------------------------------------------------


def test_dual_circles_of_ring_packing():
    pk = build_kuperberg_packing(PARAMS, PARAMS.r0, PARAMS.r0 + 1)
    cs = dual_circle_packing(pk)
    assert len(cs) == len(pk)
    hist = cs.norm_sq_histogram()
    assert set(hist) == {Fraction(PARAMS.r0) ** 2, Fraction(PARAMS.r0 + 1) ** 2}
    assert cs[3].center == pk[3].axis.anchor


def test_dual_cylinder():
    v = CylinderSpec(Line3((Fraction(2), Fraction(1), Fraction(0)), (0, 0, 1)), Fraction(1, 2))
    assert dual_cylinder(v) is v
    t = CylinderSpec(Axis((Fraction(3), Fraction(4)), Fraction(5)), Fraction(1, 2))
    d = dual_cylinder(t)
    assert d.axis.anchor[:2] == (3, 4) and d.radius == t.radius
    flat = CylinderSpec(Line3((Fraction(0), Fraction(0), Fraction(1)), (1, 0, 0)), Fraction(1, 2))
    with pytest.raises(AxisParallelToPlane):
        dual_cylinder(flat)


def test_vertical_cylinders_dual_circles():
    from cylpack.constructions import Packing
    cyl = [CylinderSpec(Line3((Fraction(i), Fraction(0), Fraction(3)), (0, 0, 1)), Fraction(1, 2))
           for i in range(3)]
    cs = dual_circle_packing(Packing(cyl, Fraction(1, 2), {}))
    assert [c.center for c in cs] == [(i, 0) for i in range(3)]


# --- files ---------------------------------------------------------------------


def test_packing_files_deterministic(tmp_path, small_filter):
    lat, sp, res = small_filter
    pk = build_shell_packing(res)
    h1 = write_packing(pk, tmp_path / "a.jsonl")
    h2 = write_packing(build_shell_packing(shell_filter(lat, sp)), tmp_path / "b.jsonl")
    assert h1 == h2
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    back = read_packing(tmp_path / "a.jsonl")
    assert len(back) == len(pk)
    assert back.shell_of == pk.shell_of
    assert all(x.axis == y.axis for x, y in zip(back, pk))


def test_ring_packing_file_roundtrip(tmp_path):
    pk = build_kuperberg_packing(PARAMS, PARAMS.r0, PARAMS.r0)
    write_packing(pk, tmp_path / "r.jsonl")
    lines = (tmp_path / "r.jsonl").read_text().splitlines()
    assert len(lines) == 1 + len(pk)
    back = read_packing(tmp_path / "r.jsonl")
    assert len(back) == len(pk) and back[17].axis == pk[17].axis
