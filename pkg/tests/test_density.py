import csv
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cylpack.constructions import (
    Circle,
    CircleSet,
    CylinderSpec,
    hexagonal_lattice,
    ring_circle_set,
)
from cylpack.density import (
    TWO_PI,
    DensityProfile,
    NonStabilizedError,
    NormTable,
    c_grid,
    curve_argmax,
    density_profile,
    density_ratio,
    disc_ball_area,
    fit_sector_constant,
    mc_volume_check,
    packing_area_in_ball,
    powers_of_two,
    sector_count,
    sector_count_bruteforce,
    subsequence_max_estimate,
    subsequence_radii,
    upper_density_curve,
)
from cylpack.geom import Axis, Line3
from cylpack.numerics import Interval

E = Fraction(1, 10)
HALF = Fraction(1, 2)


def lens_mp(d, a, R):
    """Two-circle intersection area, evaluated with mpmath."""
    d, a, R = (mpmath.mpf(q.numerator) / q.denominator for q in map(Fraction, (d, a, R)))
    if d + a <= R:
        return mpmath.pi * a * a
    if d >= a + R:
        return mpmath.mpf(0)
    if d + R <= a:
        return mpmath.pi * R * R
    t1 = a * a * mpmath.acos((d * d + a * a - R * R) / (2 * d * a))
    t2 = R * R * mpmath.acos((d * d + R * R - a * a) / (2 * d * R))
    k = (-d + a + R) * (d + a - R) * (d - a + R) * (d + a + R)
    return t1 + t2 - mpmath.sqrt(k) / 2


def contains(iv: Interval, x) -> bool:
    lo, hi = iv.lower(), iv.upper()
    return mpmath.mpf(lo.numerator) / lo.denominator <= x <= mpmath.mpf(hi.numerator) / hi.denominator


# --- areas -----------------------------------------------------------------


@given(st.fractions(min_value=Fraction(1, 100), max_value=30, max_denominator=100),
       st.fractions(min_value=Fraction(1, 10), max_value=5, max_denominator=20),
       st.fractions(min_value=Fraction(1, 2), max_value=20, max_denominator=20))
@settings(max_examples=40)
def test_disc_ball_area_matches_lens_oracle(d, a, R):
    assert contains(disc_ball_area(d, a, R), lens_mp(d, a, R))


def test_disc_ball_area_cases():
    pi = disc_ball_area(0, 1, 2)
    assert contains(pi, mpmath.pi)
    assert disc_ball_area(5, 1, 2).upper() == 0
    assert contains(disc_ball_area(0, 3, 2), 4 * mpmath.pi)
    with pytest.raises(ValueError):
        disc_ball_area(0, 0, 1)


def test_area_against_monte_carlo():
    circles = [Circle((Fraction(x), Fraction(y)), HALF) for x in range(-6, 7) for y in range(-6, 7)]
    r = Fraction(9, 2)
    iv = packing_area_in_ball(circles, r)
    g = np.random.Generator(np.random.Philox(1))
    n = 400_000
    p = g.uniform(-4.5, 4.5, (n, 2))
    inside_ball = (p ** 2).sum(1) <= 4.5 ** 2
    q = p - np.round(p)
    in_disc = (q ** 2).sum(1) <= 0.25
    est = (inside_ball & in_disc).mean() * 81
    assert abs(est - float(iv.mid())) < 5 * 81 * math.sqrt(0.25 / n)


@given(st.integers(1, 40))
@settings(max_examples=20)
def test_area_additivity(split):
    circles = [Circle((Fraction(i), Fraction(2 * i % 7)), HALF) for i in range(41)]
    r = Fraction(30)
    whole = packing_area_in_ball(circles, r)
    parts = packing_area_in_ball(circles[:split], r) + packing_area_in_ball(circles[split:], r)
    assert whole.overlaps(parts)


def test_empty_and_unit_disc():
    empty = CircleSet([], HALF)
    assert density_ratio(empty, 5).upper() == 0
    one = CircleSet([Circle((Fraction(0), Fraction(0)), Fraction(3))], Fraction(3))
    ratio = density_ratio(one, 3)
    assert ratio.lower() <= 1 <= ratio.upper()
    with pytest.raises(ValueError):
        density_ratio(one, 0)


def test_norm_table_boundary_keys():
    cs = ring_circle_set(E, 1, 40)
    t = NormTable(cs)
    assert t._split(Fraction(100)) == 10
    assert t._split(Fraction(100) - Fraction(1, 10 ** 30)) == 9
    assert packing_area_in_ball(t, 20).overlaps(packing_area_in_ball(cs, 20))


def test_profile_bounds_and_csv(tmp_path):
    cs = ring_circle_set(E, 1, 1 << 9)
    prof = density_profile(cs, powers_of_two(2, 8), {"construction": "kuperberg"})
    for v in prof.values:
        assert 0 <= v.lower() <= v.upper() <= 1
    path = tmp_path / "p.csv"
    prof.to_csv(path, {"seed": 0})
    text = path.read_text().splitlines()
    assert text[0].startswith("#")
    rows = list(csv.reader(line for line in text if not line.startswith("#")))
    assert rows[0] == ["radius", "ratio_lo", "ratio_hi"]
    assert len(rows) == 1 + len(prof.schedule)
    with pytest.raises(ValueError):
        DensityProfile([1], [Interval.from_bounds(2, 3)], {})


def test_ring_lower_density_small_radius():
    cs = ring_circle_set(E, 1, 1 << 11)
    v = density_ratio(cs, 1 << 10)
    assert abs(float(v.mid()) / (math.pi / 6.6) - 1) < 0.03


# --- curve and estimator -------------------------------------------------------


def test_curve_values():
    assert contains(upper_density_curve(0, E), 10 * mpmath.pi / 66)
    assert contains(upper_density_curve(Fraction(1, 3), E), 30 * mpmath.pi / 176)
    assert contains(upper_density_curve(Fraction(1, 3), 0), 3 * mpmath.pi / 16)
    with pytest.raises(ValueError):
        upper_density_curve(2, E)


def test_curve_argmax():
    c, val, cg = curve_argmax(E, grid_step=1e-5)
    assert c == Fraction(1, 3)
    assert abs(cg - 1 / 3) <= 1e-5
    for t in np.linspace(0, 1, 101):
        assert upper_density_curve(Fraction(t), E).upper() <= val.upper() + Fraction(1, 10 ** 15)


def test_estimator_constant_families():
    fam = {Fraction(i, 4): [Interval.from_value(Fraction(i, 10))] * 5 for i in range(5)}
    est = subsequence_max_estimate(fam)
    assert est.argmax_c == 1 and Fraction(4, 10) in est.value


def test_estimator_rejects_oscillation():
    fam = {Fraction(0): [Interval.from_value(v) for v in (Fraction(1, 10), Fraction(1, 2), Fraction(1, 10))]}
    with pytest.raises(NonStabilizedError):
        subsequence_max_estimate(fam)


def test_subsequence_radii_and_grid():
    assert subsequence_radii(0, 3, 5) == [8, 16, 32]
    assert subsequence_radii(Fraction(1, 2), 3, 4) == [12, 24]
    g = c_grid(5)
    assert g[0] == 0 and g[-1] == 1 and len(g) == 5


# --- sectors ---------------------------------------------------------------------


@given(st.fractions(min_value=0, max_value=6, max_denominator=1000),
       st.fractions(min_value=Fraction(1, 100), max_value=3, max_denominator=1000))
@settings(max_examples=40)
def test_sector_count_matches_bruteforce(t1, w):
    lat = hexagonal_lattice(1)
    t2 = t1 + w
    if t2 >= 6:
        return
    assert sector_count(lat, 12, t1, t2).count == sector_count_bruteforce(lat, 12, t1, t2)


def test_sector_edge_cases():
    lat = hexagonal_lattice(1)
    # boundary ray through lattice points: half-open [t1, t2)
    assert sector_count(lat, 10, 0, Fraction(1, 10 ** 6)).count == 10
    full = sector_count(lat, 10, 0, TWO_PI)
    assert full.count == sector_count_bruteforce(lat, 10, 0, TWO_PI)
    assert sector_count(lat, Fraction(1, 2), 0, 1).count == 0
    with pytest.raises(ValueError):
        sector_count(lat, 10, 1, 1)


def test_sector_constant_small_radius():
    lat = hexagonal_lattice(1)
    C, counts = fit_sector_constant(lat, 64, n_sectors=50, seed=1)
    assert 0 < C < 5
    assert len(counts) == 50


# --- Monte Carlo volumes ---------------------------------------------------------


def test_mc_vertical_cylinder_identical_streams():
    cyl = CylinderSpec(Line3((Fraction(3), Fraction(4), Fraction(0)), (0, 0, 1)), HALF)
    r = mc_volume_check(cyl, 20, samples=200_000, seed=2)
    assert r.diff == 0 and r.agrees
    exact = math.pi / 4 * 2 * math.sqrt(400 - 25)
    assert abs(r.vol_c - exact) < 5 * r.se_c + 0.05


def test_mc_tilted_axis_agrees():
    cyl = CylinderSpec(Axis((Fraction(3), Fraction(4)), Fraction(2)), HALF)
    r = mc_volume_check(cyl, 20, samples=400_000, seed=3)
    assert r.in_hypothesis and r.agrees


def test_mc_outside_hypothesis():
    cyl = CylinderSpec(Line3((Fraction(1), Fraction(0), Fraction(0)), (1, 1, 1)), HALF)
    r = mc_volume_check(cyl, 10, samples=10_000, seed=0)
    assert not r.in_hypothesis and r.agrees is None
