from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from cylpack.constructions import select_kuperberg_params
from cylpack.fastiv import FI, skew_distance_sq_batch
from cylpack.geom import (
    Axis,
    DenominatorError,
    Line3,
    are_parallel,
    axes_parallel,
    delta_terms,
    kuperberg_distance_sq,
    kuperberg_distance_sq_exact,
    planar_pair_lines,
    pythagorean_angle,
    shell_distance_sq,
    shell_distance_sq_exact,
    skew_distance_sq,
    skew_distance_sq_exact,
)
from cylpack.numerics import AngleSpec, Interval, QuadSurd, exact_sign

PARAMS = select_kuperberg_params(Fraction(1, 10))
small = st.fractions(min_value=-50, max_value=50, max_denominator=20)
vec = st.tuples(small, small, small)
norms = st.integers(1, 5000)
pyth = st.tuples(st.integers(2, 300), st.integers(1, 299)).filter(lambda t: t[1] < t[0])


def line(a, v):
    return Line3(tuple(Fraction(x) for x in a), tuple(Fraction(x) for x in v))


# --- generic distance -----------------------------------------------------


def test_skew_examples():
    v = line((0, 0, 0), (0, 0, 1))
    w = line((3, 4, 0), (0, 0, 1))
    assert skew_distance_sq_exact(v, w) == 25
    assert skew_distance_sq(v, w).lower() == 25
    o1 = line((0, 0, 0), (1, 2, 3))
    o2 = line((0, 0, 0), (-1, 5, 2))
    assert skew_distance_sq_exact(o1, o2) == 0
    a = line((1, 0, 0), (0, -1, 1))
    b = line((0, 1, 0), (1, 0, 1))
    assert skew_distance_sq_exact(a, b) == Fraction(4, 3)


@given(st.integers(1, 100))
def test_skew_example_family(T):
    a = line((1, 0, 0), (0, -1, T))
    b = line((0, 1, 0), (1, 0, T))
    assert skew_distance_sq_exact(a, b) == Fraction(4 * T * T, 2 * T * T + 1)


@given(vec, vec, vec, vec)
def test_interval_encloses_exact(a1, v1, a2, v2):
    assume(any(v1) and any(v2))
    l1, l2 = line(a1, v1), line(a2, v2)
    exact = skew_distance_sq_exact(l1, l2)
    noisy1 = Line3(tuple(Interval.from_value(x, 40) for x in a1), tuple(Interval.from_value(x, 40) for x in v1))
    iv = skew_distance_sq(noisy1, l2, 40)
    assert iv.lower() <= exact <= iv.upper()


@given(vec, vec, vec, vec, pyth)
def test_rotation_invariance(a1, v1, a2, v2, mn):
    assume(any(v1) and any(v2))
    c, s = pythagorean_angle(*mn)

    def rot(p):
        return (c * p[0] - s * p[1], s * p[0] + c * p[1], p[2])

    l1, l2 = line(a1, v1), line(a2, v2)
    r1, r2 = Line3(rot(l1.anchor), rot(l1.direction)), Line3(rot(l2.anchor), rot(l2.direction))
    assert skew_distance_sq_exact(l1, l2) == skew_distance_sq_exact(r1, r2)


@given(vec, vec, vec, vec, st.fractions(min_value=Fraction(1, 10), max_value=10, max_denominator=50))
def test_scaling_covariance(a1, v1, a2, v2, lam):
    assume(any(v1) and any(v2))
    l1, l2 = line(a1, v1), line(a2, v2)
    d = skew_distance_sq_exact(l1, l2)
    assert skew_distance_sq_exact(l1.scaled(lam), l2.scaled(lam)) == lam * lam * d


def test_parallel_predicates():
    assert are_parallel(line((0, 0, 0), (0, 0, 1)), line((1, 1, 0), (0, 0, 2)))
    assert not are_parallel(line((0, 0, 0), (1, 0, 1)), line((1, 1, 0), (0, 1, 1)))
    a = Axis((Fraction(3), Fraction(4)), Fraction(2))
    assert axes_parallel(a, a.scaled(3))
    assert not axes_parallel(a, Axis((Fraction(3), Fraction(4)), Fraction(5)))
    e = Fraction(1, 10)
    p1 = Axis.polar(5, AngleSpec(1, 3, e), 7)
    p2 = Axis.polar(10, AngleSpec(2, 4, e), 14)
    assert axes_parallel(p1, p2)
    assert not axes_parallel(p1, Axis.polar(10, AngleSpec(3, 4, e), 14))


def test_axis_direction_perpendicular_to_anchor():
    ax = Axis((Fraction(3), Fraction(-7)), Fraction(2))
    ln = ax.line()
    assert ln.anchor[0] * ln.direction[0] + ln.anchor[1] * ln.direction[1] == 0
    with pytest.raises(ValueError):
        Axis((Fraction(1), Fraction(0)), Fraction(0))


# --- closed forms ---------------------------------------------------------


def test_kuperberg_degenerate_and_symmetric():
    assert kuperberg_distance_sq_exact(7, 7, 1, PARAMS.K, PARAMS.L) == 0
    a = kuperberg_distance_sq_exact(100, 140, Fraction(9, 10), PARAMS.K, PARAMS.L)
    b = kuperberg_distance_sq_exact(140, 100, Fraction(9, 10), PARAMS.K, PARAMS.L)
    assert a == b


@given(norms, norms, pyth)
def test_kuperberg_matches_generic_exact(d1, d2, mn):
    c, s = pythagorean_angle(*mn)
    l1, l2 = planar_pair_lines(d1, d2, c, PARAMS.height(d1), PARAMS.height(d2), sine=s)
    try:
        k = kuperberg_distance_sq_exact(d1, d2, c, PARAMS.K, PARAMS.L)
    except DenominatorError:
        return
    assert exact_sign(k - skew_distance_sq_exact(l1, l2)) == 0


@given(norms, norms, st.fractions(min_value=-1, max_value=Fraction(999, 1000), max_denominator=10 ** 6))
def test_kuperberg_interval_overlaps_generic(d1, d2, c):
    l1, l2 = planar_pair_lines(d1, d2, c, PARAMS.height(d1), PARAMS.height(d2))
    g = skew_distance_sq(l1, l2, 96)
    k = kuperberg_distance_sq(d1, d2, Interval.from_value(c, 96), PARAMS.K, PARAMS.L, 96)
    assert k.overlaps(g)


def test_shell_examples():
    assert shell_distance_sq_exact(1, 1, 0, 1, 1) == Fraction(4, 3)
    assert shell_distance_sq_exact(5, 5, 1, 3, 3) == 0


@given(norms, norms, pyth, st.integers(1, 10 ** 6), st.integers(1, 10 ** 6))
def test_shell_matches_generic_exact(d1, d2, mn, T1, T2):
    c, s = pythagorean_angle(*mn)
    l1, l2 = planar_pair_lines(d1, d2, c, T1, T2, sine=s)
    try:
        v = shell_distance_sq_exact(d1, d2, c, T1, T2)
    except DenominatorError:
        return
    assert v == skew_distance_sq_exact(l1, l2)


@given(norms, norms, st.fractions(min_value=-1, max_value=1, max_denominator=10 ** 6),
       st.integers(1, 10 ** 6), st.integers(1, 10 ** 6))
def test_shell_interval_overlaps_generic(d1, d2, c, T1, T2):
    l1, l2 = planar_pair_lines(d1, d2, c, T1, T2)
    g = skew_distance_sq(l1, l2, 96)
    try:
        v = shell_distance_sq(d1, d2, Interval.from_value(c, 96), T1, T2, 96)
    except DenominatorError:
        return
    assert v.overlaps(g)


def test_fastiv_batch_encloses_exact():
    g = np.random.Generator(np.random.Philox(5))
    a1 = [FI.point(g.integers(-100, 100, 200).astype(float)) for _ in range(3)]
    v1 = [FI.point(g.integers(-100, 100, 200).astype(float)) for _ in range(3)]
    a2 = [FI.point(g.integers(-100, 100, 200).astype(float)) for _ in range(3)]
    v2 = [FI.point(g.integers(-100, 100, 200).astype(float)) for _ in range(3)]
    d, bad = skew_distance_sq_batch(a1, v1, a2, v2)
    for i in range(200):
        if bad[i]:
            continue
        l1 = line([a1[t].lo[i] for t in range(3)], [v1[t].lo[i] for t in range(3)])
        l2 = line([a2[t].lo[i] for t in range(3)], [v2[t].lo[i] for t in range(3)])
        ex = skew_distance_sq_exact(l1, l2)
        assert Fraction(d.lo[i]) <= ex <= Fraction(d.hi[i])


def test_fastiv_rejects_inexact_scalars():
    with pytest.raises(ValueError):
        FI.point([1.0]) * 0.1


# --- Delta decomposition ---------------------------------------------------


def test_delta_second_factor_vanishes_for_adjacent_norms():
    r = delta_terms(300, 301, Fraction(99, 100), PARAMS.K, PARAMS.L, variant="corrected")
    assert r.delta_tilde2 == 0


def test_delta_printed_variant_is_a_misprint():
    printed = delta_terms(300, 350, Fraction(99, 100), PARAMS.K, PARAMS.L, variant="printed")
    corrected = delta_terms(300, 350, Fraction(99, 100), PARAMS.K, PARAMS.L, variant="corrected")
    assert corrected.matches_difference and corrected.identity_holds
    assert not printed.matches_difference


@given(st.integers(1, 3000), st.integers(1, 3000), pyth)
def test_delta_sign_consistent_with_distance(d1, d2, mn):
    assume(d1 != d2)
    c, _ = pythagorean_angle(*mn)
    r = delta_terms(d1, d2, c, PARAMS.K, PARAMS.L, variant="corrected")
    assert r.consistent
    if exact_sign(r.delta_tilde) >= 0 and exact_sign(r.delta_tilde2) >= 0:
        assert exact_sign(r.delta) >= 0


def test_delta_uses_quadsurd_constants():
    assert isinstance(PARAMS.K, QuadSurd)
