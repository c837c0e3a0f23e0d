from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, strategies as st

from cylpack.numerics import (
    AngleSpec,
    DomainError,
    Interval,
    QuadSurd,
    as_fraction,
    exact_sign,
    float_down,
    float_up,
    format_fraction,
    grid_difference,
    interval_acos,
    interval_cos,
    interval_sin,
    interval_sqrt,
    parse_scalar,
    pi_interval,
    rational_power_bounds,
    refine_until,
)

rationals = st.fractions(min_value=-10 ** 6, max_value=10 ** 6, max_denominator=10 ** 9)
positive = st.fractions(min_value=Fraction(1, 10 ** 6), max_value=10 ** 6, max_denominator=10 ** 9)
angles = st.fractions(min_value=-200, max_value=200, max_denominator=10 ** 6)
precisions = st.sampled_from([24, 53, 64, 128, 256])


def mp(q):
    q = as_fraction(q)
    return mpmath.mpf(q.numerator) / q.denominator


def encloses(iv: Interval, x) -> bool:
    return mp(iv.lower()) <= x <= mp(iv.upper())


# --- parsing -------------------------------------------------------------


def test_as_fraction_parses_rational_strings():
    assert as_fraction("1/10") == Fraction(1, 10)
    assert as_fraction("-7") == -7
    with pytest.raises(ValueError):
        as_fraction("0.1")


def test_format_roundtrip():
    q = Fraction(-355, 113)
    assert as_fraction(format_fraction(q)) == q


@given(rationals, st.fractions(min_value=-100, max_value=100, max_denominator=100),
       st.sampled_from([2, 3, 5, 255]))
def test_quadsurd_roundtrip_and_sign(a, b, d):
    x = QuadSurd(a, b, d)
    y = parse_scalar(str(x))
    assert exact_sign(x - y) == 0
    ref = mp(a) + mp(b) * mpmath.sqrt(d)
    assert exact_sign(x) == (0 if ref == 0 else (1 if ref > 0 else -1))


def test_quadsurd_sqrt_rational_case():
    assert QuadSurd.sqrt(Fraction(9, 4)) == Fraction(3, 2)
    s = QuadSurd.sqrt(255)
    assert s * s == 255


@given(st.fractions(min_value=1, max_value=1000, max_denominator=50),
       st.fractions(min_value=1, max_value=1000, max_denominator=50))
def test_quadsurd_division_inverts(a, b):
    x = QuadSurd(a, b, 255)
    assert (x / x) == 1
    assert (1 / x) * x == 1


@given(st.fractions(min_value=Fraction(1, 10 ** 6), max_value=10 ** 6).filter(lambda q: q != 0))
def test_rational_arithmetic_exact(q):
    assert q * (1 / q) == 1


# --- intervals -----------------------------------------------------------


@given(rationals, precisions)
def test_from_fraction_encloses(q, p):
    iv = Interval.from_fraction(q, p)
    assert iv.lower() <= q <= iv.upper()


@given(rationals, rationals, precisions)
def test_arithmetic_soundness(a, b, p):
    A, B = Interval.from_value(a, p), Interval.from_value(b, p)
    assert a + b in A + B
    assert a - b in A - B
    assert a * b in A * B
    assert a * a in A.sqr()
    if b != 0:
        assert a / b in A / B


@given(rationals)
def test_to_floats_is_rigorous(q):
    lo, hi = Interval.from_value(q, 128).to_floats()
    assert Fraction(lo) <= q <= Fraction(hi)
    assert Fraction(float_down(q)) <= q <= Fraction(float_up(q))


def test_sign_three_valued():
    assert Interval.from_value(3).sign() == 1
    assert Interval.from_value(0).sign() == 0
    assert Interval.from_bounds(-1, 1).sign() is None


# --- transcendental ------------------------------------------------------


def test_cos_zero_is_exact():
    iv = interval_cos(0)
    assert iv.lower() == iv.upper() == 1


def test_cos_of_pi_enclosure_contains_minus_one():
    iv = interval_cos(pi_interval(64), 64)
    assert -1 in iv
    assert iv.width() < Fraction(1, 1 << 50)


def test_cos_one_radian():
    iv = interval_cos(1, 64)
    assert Fraction("0.54030230586") <= iv.lower()
    assert iv.upper() <= Fraction("0.54030230587")


@given(angles, precisions)
def test_cos_sin_soundness(t, p):
    assert encloses(interval_cos(t, p), mpmath.cos(mp(t)))
    assert encloses(interval_sin(t, p), mpmath.sin(mp(t)))


@given(angles, st.fractions(min_value=0, max_value=3, max_denominator=1000))
def test_cos_interval_argument_soundness(t, w):
    iv = Interval.from_bounds(t, t + w, 64)
    out = interval_cos(iv, 64)
    for s in (0, Fraction(1, 3), Fraction(1, 2), 1):
        assert encloses(out, mpmath.cos(mp(t + s * w)))


@given(angles)
def test_monotone_refinement(t):
    widths = [interval_cos(t, p).width() for p in (32, 64, 128, 256)]
    assert all(b <= a for a, b in zip(widths, widths[1:]))


def test_pi_enclosure():
    for p in (24, 64, 256, 1024):
        assert encloses(pi_interval(p), mpmath.pi)


def test_sqrt_examples():
    assert interval_sqrt(Interval.from_value(4)).lower() == 2
    assert interval_sqrt(Interval.from_value(4)).upper() == 2
    z = interval_sqrt(Interval.from_value(0))
    assert z.lower() == z.upper() == 0
    r2 = interval_sqrt(Interval.from_value(2))
    assert Fraction("1.41421356237") <= r2.lower() and r2.upper() <= Fraction("1.41421356238")
    with pytest.raises(DomainError):
        interval_sqrt(Interval.from_value(-1))


@given(positive, precisions)
def test_sqrt_soundness(q, p):
    assert encloses(interval_sqrt(Interval.from_value(q, p), p), mpmath.sqrt(mp(q)))


@given(st.fractions(min_value=-1, max_value=1, max_denominator=10 ** 6))
def test_acos_soundness(q):
    assert encloses(interval_acos(q, 64), mpmath.acos(mp(q)))


# --- angles and refinement ------------------------------------------------


def test_anglespec_grid():
    a = AngleSpec(3, 4, Fraction(1, 10))
    b = AngleSpec(1, 2, Fraction(1, 10))
    assert a.value == Fraction(33, 160)
    assert grid_difference(a, b) == (-1, 4)
    with pytest.raises(ValueError):
        AngleSpec(100, 0, Fraction(1, 10))


def test_refine_until_constant():
    r = refine_until(lambda p: Interval.from_value(1, p), 0)
    assert r.ok and r.precision == 64 and r.interval.lower() == 1


def test_refine_until_cos_one():
    r = refine_until(lambda p: interval_cos(1, p), Fraction(1, 10 ** 30))
    assert r.ok and r.interval.width() <= Fraction(1, 10 ** 30)
    assert encloses(r.interval, mpmath.cos(1))


def test_refine_until_exhausts_on_irrational_zero_width():
    r = refine_until(lambda p: interval_cos(1, p), 0, max_precision=512)
    assert r.exhausted and not r.ok


@given(st.fractions(min_value=Fraction(1, 100), max_value=1000, max_denominator=1000),
       st.integers(1, 40), st.integers(1, 40))
def test_rational_power_bounds(x, p, q):
    lo, hi = rational_power_bounds(x, p, q, 48)
    assert lo ** q <= x ** p <= hi ** q


def test_soundness_batch_seeded():
    """Seeded batch of 10^5 rational inputs against the mpmath oracle."""
    import numpy as np
    g = np.random.Generator(np.random.Philox(2024))
    nums = g.integers(-10 ** 9, 10 ** 9, size=100_000)
    dens = g.integers(1, 10 ** 6, size=100_000)
    with mpmath.workprec(120):
        for n, d in zip(nums.tolist(), dens.tolist()):
            q = Fraction(n, d)
            t = q / 1000
            c = interval_cos(t, 64)
            assert encloses(c, mpmath.cos(mp(t)))
            s = interval_sqrt(Interval.from_value(abs(q), 64), 64)
            assert encloses(s, mpmath.sqrt(mp(abs(q))))
