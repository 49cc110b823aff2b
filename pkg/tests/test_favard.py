import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from favardlab.favard import (CSV_COLUMNS, DecayTable, LengthEstimate, box_dimension, buffon_mc,
                              energy_lower_bound_check, favard_minkowski, favard_parameter_integral, fit_decay,
                              image_measure, marstrand_dimension_experiment, visibility, visibility_integral)
from favardlab.fractals import four_corner
from favardlab.geometry import CellSet, dilate
from favardlab.measures import equidistributed_measure
from favardlab.projections import (Circle, CurveSpec, Segment, SurfaceSpec, curve_family, orthogonal_family,
                                   straight_line_family, surface_family)


def unit_square():
    return CellSet(2, Fraction(1), [[0, 0]])


def disk_cells(rho, side=Fraction(1, 64), centre=(0.5, 0.5)):
    k = int(1 / side)
    i, j = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
    a = np.stack([i.ravel(), j.ravel()], 1)
    c = (a + 0.5) * float(side)
    keep = np.linalg.norm(c - np.asarray(centre), axis=1) <= rho
    return CellSet(2, side, a[keep])


def rotate_pi(cells):
    return CellSet(2, cells.side, -cells.anchors - 1)


# -- image measure -------------------------------------------------------------

def test_image_measure_axis_shadow_of_K1():
    res = 1 / 128
    v = image_measure(orthogonal_family(), 0.0, four_corner(1), res)
    assert 0.5 <= v <= 0.5 + 4 * res


def test_image_measure_single_cell_curve():
    fam = curve_family(CurveSpec.parabola())
    for w in (Fraction(1, 8), Fraction(1, 32)):
        cell = CellSet(2, w, [[1, 2]])
        res = float(w) / 32
        for lam in (0.0, 0.3, 0.77, 1.0):
            v = image_measure(fam, lam, cell, res)
            assert float(w) <= v <= 2 * float(w) + 4 * math.sqrt(2) * res


def test_image_measure_empty_and_outside_parameter():
    assert image_measure(orthogonal_family(), 0.2, CellSet.empty(2), 0.01) == 0.0
    with pytest.raises(ValueError):
        image_measure(curve_family(CurveSpec.parabola()), -0.5, four_corner(1), 0.01)
    with pytest.raises(ValueError):
        image_measure(orthogonal_family(), 4.0, four_corner(1), 0.01)


# -- parameter integrals -------------------------------------------------------

def test_orthogonal_average_of_disk_is_diameter():
    rho = 0.4
    D = disk_cells(rho)
    est = favard_parameter_integral(orthogonal_family(), D, 64, D.h / 8)
    assert est.normalization == "psi-average"
    assert est.value == pytest.approx(2 * rho, abs=3 * D.h)
    assert est.lebesgue == pytest.approx(math.pi * est.value)


def test_point_like_cell_vanishes():
    fam = curve_family(CurveSpec.parabola())
    vals = [favard_parameter_integral(fam, CellSet(2, 2.0 ** -k, [[3, 5]]), 16).value for k in (4, 6, 8)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 3 * 2.0 ** -8


def test_parameter_integral_empty():
    est = favard_parameter_integral(orthogonal_family(), CellSet.empty(2), 8)
    assert est.value == 0.0 and est.lebesgue == 0.0


def test_curve_decay_bounded_below():
    fam = curve_family(CurveSpec.parabola())
    nv = [n * favard_parameter_integral(fam, four_corner(n), 32, four_corner(n).h / 8).value for n in (1, 2, 3, 4)]
    assert min(nv) >= 0.5 * nv[0]


def test_surface_parameter_integral_positive():
    cube = CellSet(3, Fraction(1, 8), [[0, 0, 0], [1, 0, 0]])
    fam = surface_family(SurfaceSpec.paraboloid())
    big = favard_parameter_integral(fam, cube, 16, cube.h / 4)
    small = favard_parameter_integral(fam, CellSet(3, Fraction(1, 8), [[0, 0, 0]]), 16, cube.h / 4)
    assert 0 < small.value <= big.value


# -- Minkowski -----------------------------------------------------------------

def test_minkowski_examples():
    assert favard_minkowski(np.array([[0.0, 0.0]]), unit_square(), 1 / 64).value == pytest.approx(1.0)
    seg = np.stack([np.linspace(0, 1, 257), np.zeros(257)], 1)
    assert favard_minkowski(seg, unit_square(), 1 / 128).value == pytest.approx(2.0)
    with pytest.raises(ValueError):
        favard_minkowski(CurveSpec.parabola(), four_corner(1), 0.2)


def test_minkowski_agrees_with_parameter_integral_on_K2():
    K = four_corner(2)
    c = CurveSpec.parabola()
    par = favard_parameter_integral(curve_family(c), K, 64, K.h / 32)
    mk = favard_minkowski(c, K, K.h / 32)
    assert abs(mk.value - par.lebesgue) / mk.value <= 0.05


def test_minkowski_rotation_by_pi():
    K = four_corner(3)
    up = CurveSpec(lambda t: 0.5 * np.asarray(t) ** 2, lambda t: np.asarray(t), (-1.0, 1.0))
    pitch = K.h / 4
    a = favard_minkowski(CurveSpec.parabola(), K, pitch).value
    b = favard_minkowski(up, rotate_pi(K), pitch).value
    # the raster error is one-sided and at most about pitch times the perimeter
    assert abs(a - b) <= 0.02 * a


def test_minkowski_resolution_convergence_on_K3():
    K = four_corner(3)
    c = CurveSpec.parabola()
    a = favard_minkowski(c, K, K.h / 8).value
    b = favard_minkowski(c, K, K.h / 16).value
    assert abs(a - b) / b < 0.03
    p1 = favard_parameter_integral(curve_family(c), K, 32, K.h / 8).value
    p2 = favard_parameter_integral(curve_family(c), K, 32, K.h / 16).value
    assert abs(p1 - p2) / p2 < 0.03


def surface_volume_oracle(L, step=0.05, grid=0.01):
    """|cube + graph of |s|^2/2 over the disk| by brute-force window extrema."""
    s1 = np.arange(-L, L + grid / 2, grid)
    S = np.stack(np.meshgrid(s1, s1, indexing="ij"), -1).reshape(-1, 2)
    S = S[np.linalg.norm(S, axis=1) <= L]
    g = 0.5 * np.sum(S ** 2, axis=1)
    p1 = np.arange(-L - 0.5, 1 + L + 0.5, step) + step / 2
    total = 0.0
    for x in p1:
        for y in p1:
            w = (S[:, 0] >= x - 1) & (S[:, 0] <= x) & (S[:, 1] >= y - 1) & (S[:, 1] <= y)
            if w.any():
                total += 1.0 + g[w].max() - g[w].min()
    return total * step ** 2


def test_surface_minkowski_against_window_oracle():
    s = SurfaceSpec.paraboloid(0.5)
    cube = CellSet(3, Fraction(1), [[0, 0, 0]])
    v = favard_minkowski(s, cube, 2.0 ** -5).value
    assert v == pytest.approx(surface_volume_oracle(0.5), rel=0.03)
    with pytest.raises(ValueError):
        favard_minkowski(s, cube, 2.0 ** -8)


# -- Buffon --------------------------------------------------------------------

def test_buffon_full_box_and_empty():
    c = CurveSpec.parabola()
    est = buffon_mc(c, unit_square(), 5000, sample_box=((0, 0), (1, 1)), seed=1)
    assert est.value == pytest.approx(1.0)
    assert buffon_mc(c, CellSet.empty(2), 100).value == 0.0
    with pytest.raises(ValueError):
        buffon_mc(c, unit_square(), 0)


def test_buffon_matches_minkowski_on_K2():
    K = four_corner(2)
    c = CurveSpec.parabola()
    bf = buffon_mc(c, K, 400_000, seed=7)
    mk = favard_minkowski(c, K, K.h / 64)
    assert abs(bf.value - mk.value) <= 3 * bf.error_bar + 2 * mk.resolution


def test_buffon_deterministic():
    K = four_corner(2)
    c = CurveSpec.parabola()
    assert buffon_mc(c, K, 100_000, seed=3) == buffon_mc(c, K, 100_000, seed=3)


# -- monotonicity --------------------------------------------------------------

def test_estimators_monotone_under_inclusion():
    c = CurveSpec.parabola()
    small, big = four_corner(3), four_corner(2)
    pitch = small.h / 4
    assert favard_minkowski(c, small, pitch).value <= favard_minkowski(c, big, pitch).value
    fam = curve_family(c)
    assert (favard_parameter_integral(fam, small, 16, small.h / 8).value
            <= favard_parameter_integral(fam, big, 16, small.h / 8).value + 1e-9)
    box = ((-1.2, -0.7), (2.2, 1.2))
    assert buffon_mc(c, small, 50_000, box, seed=2).value <= buffon_mc(c, big, 50_000, box, seed=2).value
    circle = Circle((0.5, 0.5), 3.0)
    assert visibility_integral(circle, small, 64).value <= visibility_integral(circle, big, 64).value


# -- visibility ----------------------------------------------------------------

def test_visibility_segment_quarter_turn():
    seg = CellSet(2, Fraction(1), [[1, -1], [1, 0]], flat_axes=(0,))
    assert visibility((0.0, 0.0), seg) == pytest.approx(math.pi / 2)


@pytest.mark.parametrize("D", [2.0, 10.0, 100.0])
def test_visibility_far_square(D):
    v = visibility((0.5, -D), unit_square())
    assert v == pytest.approx(2 * math.atan(0.5 / D), rel=1e-12)
    if D >= 10:
        assert v == pytest.approx(1 / D, rel=0.01)


def test_visibility_ring_capped():
    ring = disk_cells(0.45)
    hole = disk_cells(0.3)
    keep = {tuple(a) for a in ring.anchors.tolist()} - {tuple(a) for a in hole.anchors.tolist()}
    annulus = CellSet(2, ring.side, sorted(keep))
    v = visibility((0.5, 0.5), annulus)
    assert v == pytest.approx(2 * math.pi)
    arc = CellSet(2, ring.side, [a for a in sorted(keep) if a[1] > 40])
    assert 0 < visibility((0.5, 0.5), arc) < 2 * math.pi


def test_visibility_rejects_touching_point():
    with pytest.raises(ValueError):
        visibility((0.5, 0.5), unit_square())
    with pytest.raises(ValueError):
        visibility((1.0, 0.5), unit_square())


def tangent_angle(a):
    corners = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], float) - a
    u = corners / np.linalg.norm(corners, axis=1, keepdims=True)
    return max(math.acos(min(1.0, float(u[i] @ u[j]))) for i in range(4) for j in range(i + 1, 4))


def test_visibility_integral_at_K0_tangent_oracle():
    circle = Circle((0.5, 0.5), 3.0)
    q = 128
    est = visibility_integral(circle, four_corner(0), q)
    pts = circle.point(np.arange(q) / q)
    oracle = np.mean([tangent_angle(p) for p in pts]) * circle.measure
    assert est.value == pytest.approx(oracle, rel=1e-12)
    assert est.extra["psi_average"] == pytest.approx(oracle / circle.measure)


def test_visibility_integral_K1_and_empty():
    circle = Circle((0.5, 0.5), 3.0)
    assert visibility_integral(circle, four_corner(1), 64).value > 0
    assert visibility_integral(circle, CellSet.empty(2), 64).value == 0.0
    seg = Segment((-2.0, -1.0), (-2.0, 2.0))
    assert visibility_integral(seg, four_corner(1), 33).value > 0


# -- energy bound --------------------------------------------------------------

def test_energy_bound_holds_on_Kn():
    fam = curve_family(CurveSpec.parabola())
    for n in (1, 2, 3):
        K = four_corner(n)
        fav = favard_parameter_integral(fam, K, 32, K.h / 8)
        rep = energy_lower_bound_check(fam, equidistributed_measure(K, 2), 1.0, fav)
        assert rep.holds and rep.consistent


def test_energy_bound_single_cell():
    fam = curve_family(CurveSpec.parabola())
    cell = CellSet(2, Fraction(1, 4), [[1, 1]])
    rep = energy_lower_bound_check(fam, equidistributed_measure(cell), 0.5,
                                   favard_parameter_integral(fam, cell, 16))
    assert math.isfinite(rep.product) and rep.product > 0


def test_energy_bound_fails_without_curvature():
    seg = CellSet(2, Fraction(1), [[0, 0]], flat_axes=(1,))
    fam = straight_line_family(0.0, box=((-1, -1), (2, 2)))
    products = []
    for k in (5, 7, 9):
        F = dilate(seg, 2.0 ** -k)
        fav = favard_parameter_integral(fam, F, 8, F.h / 2)
        rep = energy_lower_bound_check(fam, equidistributed_measure(F, 1), 1.0, fav)
        products.append(rep.product)
    # product behaves like r log(1/r): it collapses instead of staying above a floor
    assert products[0] > 2 * products[1] > 4 * products[2]
    assert not rep.holds


def test_energy_bound_flags_zero_length():
    fam = orthogonal_family()
    K = four_corner(1)
    zero = LengthEstimate(0.0, "parameter-integral", 0.01, normalization="psi-average")
    assert not energy_lower_bound_check(fam, equidistributed_measure(K, 1), 1.0, zero).consistent
    with pytest.raises(ValueError):
        energy_lower_bound_check(fam, equidistributed_measure(K, 1), 1.0, LengthEstimate(1.0, "minkowski", 0.1))


# -- fits and tables -----------------------------------------------------------

def test_fit_decay_synthetic():
    r = 4.0 ** -np.arange(1, 7)
    slope, _, r2 = fit_decay(r, 3 * r ** 0.5)
    assert slope == pytest.approx(0.5) and r2 == pytest.approx(1.0)
    n = np.arange(1, 8)
    assert fit_decay(n, 2.0 / n)[0] == pytest.approx(-1.0, abs=1e-9)
    y = 1 / np.log(1 / r)
    assert abs(fit_decay(r, y)[0]) < 0.5
    assert fit_decay(r, y, "log-linear")[2] == pytest.approx(1.0)


def test_fit_decay_rejects_degenerate():
    with pytest.raises(ValueError):
        fit_decay([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        fit_decay([1, 2], [1, 2])
    with pytest.raises(ValueError):
        fit_decay([1, 2, 3], [1, 2, 3], "cubic")


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 10), st.floats(-2, 2))
def test_fit_decay_recovers_power(c, p):
    x = np.linspace(1, 10, 7)
    slope, intercept, r2 = fit_decay(x, c * x ** p)
    assert slope == pytest.approx(p, abs=1e-9)
    assert intercept == pytest.approx(math.log(c), abs=1e-9)


def test_decay_table_csv():
    rows = [(n, LengthEstimate(1.0 / n, "minkowski", 0.01, seed=None)) for n in (1, 2, 3)]
    t = DecayTable.build(rows, "log-log")
    lines = t.to_csv().splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert lines[2] == "2,0.5,minkowski,0.01,0.0,"
    assert t.fit["slope"] == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        DecayTable(())


def test_length_estimate_validation():
    with pytest.raises(ValueError):
        LengthEstimate(-1.0, "buffon", 1)


# -- box dimension -------------------------------------------------------------

def test_box_dimension_of_interval():
    v = np.linspace(0, 1, 5000)
    assert box_dimension(v, [2.0 ** -k for k in range(6, 11)]) == pytest.approx(1.0, abs=0.02)


def test_marstrand_segment():
    seg = CellSet(2, Fraction(1, 1024), [[i, 0] for i in range(1024)], flat_axes=(1,))
    res = marstrand_dimension_experiment(orthogonal_family(), seg, 20, seed=1)
    assert res["median"] == pytest.approx(1.0, abs=0.05)


def test_marstrand_four_corner_unit_dimension():
    res = marstrand_dimension_experiment(orthogonal_family(), four_corner(5), 20, seed=2)
    assert res["median"] == pytest.approx(1.0, abs=0.1)


def test_marstrand_needs_scales():
    with pytest.raises(ValueError):
        marstrand_dimension_experiment(orthogonal_family(), four_corner(2), 4, seed=0, scales=3)
