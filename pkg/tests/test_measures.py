import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from favardlab.fractals import four_corner, linear_cantor
from favardlab.geometry import CellSet
from favardlab.measures import (CellMeasure, auxiliary_measure, c_self, equidistributed_measure,
                                frostman_check, pushforward, riesz_energy)
from favardlab.projections import orthogonal_family

# I_1 of the equidistributed measure on K_n from an independent oracle:
# 12-point Gauss-Legendre product rule on every pair of distinct cells plus
# the closed-form self-energy of the unit square.
ENERGY_ORACLE = {1: 3.882949174120278, 2: 4.79804430655456, 3: 5.713528151681016}
SQUARE_SELF = (4 / 3) * (1 - math.sqrt(2)) + 4 * math.log(1 + math.sqrt(2))
CUBE_SELF = 1.882312644  # mean inverse distance in the unit cube


def test_equidistributed_weights():
    for n, count in ((1, 4), (2, 16)):
        mu = equidistributed_measure(four_corner(n))
        assert mu.weights.shape == (count,)
        assert np.allclose(mu.weights, 1 / count)
    mu = equidistributed_measure(four_corner(0))
    assert mu.weights.tolist() == [1.0]
    with pytest.raises(ValueError):
        equidistributed_measure(CellSet.empty(2))


def test_measure_validation():
    K = four_corner(1)
    with pytest.raises(ValueError):
        CellMeasure(K, [0.5, 0.5, 0.5, 0.5])
    with pytest.raises(ValueError):
        CellMeasure(K, [1.5, -0.5, 0, 0])
    with pytest.raises(ValueError):
        CellMeasure(K, [1.0])


def test_quadrature_points_equally_weighted():
    mu = equidistributed_measure(four_corner(1), 3)
    pts, w = mu.quadrature()
    assert pts.shape == (36, 2)
    assert np.allclose(w, 1 / 36)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


def test_measure_json_roundtrip():
    mu = equidistributed_measure(four_corner(2), 2)
    back = CellMeasure.from_json(mu.to_json())
    assert back.quadrature_order == 2
    assert np.array_equal(back.weights, mu.weights)


# -- self-energy constants -----------------------------------------------------

def test_self_energy_constants():
    assert c_self(1.0, 2) == pytest.approx(SQUARE_SELF, rel=1e-6)
    assert c_self(1.0, 3) == pytest.approx(CUBE_SELF, rel=1e-5)
    for s in (0.25, 0.5, 0.75):
        assert c_self(s, 1) == pytest.approx(2 / ((1 - s) * (2 - s)), rel=1e-8)


def test_self_energy_matches_monte_carlo():
    rng = np.random.default_rng(1)
    x, y = rng.random((2, 400_000, 2))
    mc = np.mean(np.linalg.norm(x - y, axis=1) ** -0.5)
    assert c_self(0.5, 2) == pytest.approx(mc, rel=5e-3)


# -- energies ------------------------------------------------------------------

def test_two_cell_off_diagonal_energy():
    side = Fraction(1, 10 ** 6)
    cells = CellSet(2, side, [[0, 0], [10 ** 6, 0]])
    mu = CellMeasure(cells, [0.5, 0.5], quadrature_order=1)
    assert riesz_energy(mu, 1.0, self_term=False) == pytest.approx(0.5, rel=1e-9)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_energy_against_oracle(n):
    mu = equidistributed_measure(four_corner(n), 4)
    assert riesz_energy(mu, 1.0) == pytest.approx(ENERGY_ORACLE[n], rel=5e-4)


def test_energy_scaling_law():
    K = four_corner(2)
    for s in (0.5, 1.0, 1.5):
        e = riesz_energy(equidistributed_measure(K, 2), s)
        half = riesz_energy(equidistributed_measure(K.scaled(Fraction(1, 2)), 2), s)
        assert half == pytest.approx(2 ** s * e, rel=1e-10)


def test_energy_translation_invariant():
    K = four_corner(2)
    moved = CellSet(2, K.side, K.anchors + np.array([37, -11]))
    e1 = riesz_energy(equidistributed_measure(K, 2), 1.0)
    e2 = riesz_energy(equidistributed_measure(moved, 2), 1.0)
    assert e2 == pytest.approx(e1, rel=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 3), st.floats(0.1, 1.8), st.floats(0.1, 1.8))
def test_energy_monotone_in_s(n, s1, s2):
    s1, s2 = sorted((s1, s2))
    mu = equidistributed_measure(four_corner(n).scaled(Fraction(1, 2)), 2)
    assert riesz_energy(mu, s1) <= riesz_energy(mu, s2) * (1 + 1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_energy_quadrature_convergence(n):
    K = four_corner(n)
    a = riesz_energy(equidistributed_measure(K, 2), 1.0)
    b = riesz_energy(equidistributed_measure(K, 4), 1.0)
    assert abs(a - b) / b < 0.02


def test_energy_increments_nearly_constant():
    es = [riesz_energy(equidistributed_measure(four_corner(n), 2), 1.0) for n in range(2, 8)]
    d = np.diff(es)
    assert np.all(np.abs(d - np.median(d)) <= 0.2 * np.median(d))


def test_energy_errors():
    mu = equidistributed_measure(four_corner(1), 2)
    with pytest.raises(ValueError):
        riesz_energy(mu, 0.0)
    with pytest.raises(ValueError):
        riesz_energy(mu, 2.0)


def test_energy_of_flat_cells():
    c = linear_cantor(Fraction(1, 4), 0)
    mu = equidistributed_measure(c, 64)
    # uniform measure on the unit interval: I_s = 2 / ((1 - s)(2 - s))
    assert riesz_energy(mu, 0.5) == pytest.approx(8 / 3, rel=1e-12)


def test_atomic_measure_off_diagonal_only():
    cells = CellSet(2, Fraction(1, 2), [[0, 0], [1, 0]], flat_axes=(0, 1))
    mu = CellMeasure(cells, [0.5, 0.5], 1)
    assert riesz_energy(mu, 1.0, self_term=False) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        riesz_energy(mu, 1.0)


# -- pushforwards --------------------------------------------------------------

def test_pushforward_single_atom():
    cells = CellSet(2, Fraction(1, 4), [[1, 1]])
    mu = CellMeasure(cells, [1.0], 1)
    pf = pushforward(lambda p: p[:, 0], mu)
    assert pf.atoms.tolist() == [0.375]
    assert pf.mass == 1.0


def test_pushforward_orthogonal_axis_shadow_of_K1():
    fam = orthogonal_family()
    mu = equidistributed_measure(four_corner(1), 4)
    pf = pushforward(lambda p: fam.map(0.0, p), mu)
    left = pf.weights[(pf.atoms >= 0) & (pf.atoms <= 0.25)].sum()
    right = pf.weights[(pf.atoms >= 0.75) & (pf.atoms <= 1)].sum()
    assert left == pytest.approx(0.5, abs=1e-12)
    assert right == pytest.approx(0.5, abs=1e-12)
    edges, dens = pf.density()
    assert np.sum(dens) * pf.bin_width == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 3), st.floats(0, math.pi), st.integers(1, 5))
def test_pushforward_preserves_mass(n, theta, q):
    fam = orthogonal_family()
    mu = equidistributed_measure(four_corner(n), q)
    pf = pushforward(lambda p: fam.map(theta, p), mu)
    assert abs(pf.mass - 1.0) <= 1e-12


def test_pushforward_names_undefined_point():
    mu = equidistributed_measure(four_corner(0), 2)
    with pytest.raises(ValueError, match="quadrature point"):
        pushforward(lambda p: np.where(p[:, 0] > 0.5, np.nan, p[:, 0]), mu)


# -- Frostman ------------------------------------------------------------------

@pytest.mark.parametrize("n", range(1, 7))
def test_frostman_linear_growth_on_Kn(n):
    rep = frostman_check(equidistributed_measure(four_corner(n), 2), 1.0, 2000, seed=3)
    assert 0 < rep.constant <= 8


def test_frostman_unit_cell_area_growth():
    rep = frostman_check(equidistributed_measure(four_corner(0)), 2.0, 2000, seed=0)
    assert rep.constant <= math.pi


def test_frostman_quadratic_growth_violated_on_Kn():
    c = [frostman_check(equidistributed_measure(four_corner(n), 2), 2.0, 2000, seed=0).constant
         for n in range(1, 6)]
    assert all(b > 2 * a for a, b in zip(c, c[1:]))


def test_frostman_reproducible():
    mu = equidistributed_measure(four_corner(3), 2)
    assert frostman_check(mu, 1.0, 500, 9) == frostman_check(mu, 1.0, 500, 9)
    with pytest.raises(ValueError):
        frostman_check(mu, 3.0, 10, 0)


# -- auxiliary measure ---------------------------------------------------------

def test_auxiliary_single_ball():
    cells = CellSet(2, Fraction(1, 64), [[0, 0], [1, 0], [0, 1]])
    mu = equidistributed_measure(cells, 2)
    nu = auxiliary_measure(mu, 0.25)
    assert np.allclose(nu.weights, nu.weights[0])
    ctr = nu.support.centers()
    assert np.linalg.norm(ctr - ctr.mean(axis=0), axis=1).max() <= 0.25 + nu.support.h
    assert nu.support.measure() == pytest.approx(math.pi * 0.25 ** 2, rel=0.1)


def test_auxiliary_support_in_double_neighbourhood():
    K = four_corner(2)
    r = 1 / 16
    nu = auxiliary_measure(equidistributed_measure(K, 2), r)
    lo, hi = K.lower(), K.upper()
    c = nu.support.corners().reshape(-1, 2)
    d = np.maximum(0.0, np.maximum(lo[None] - c[:, None, :], c[:, None, :] - hi[None]))
    assert np.linalg.norm(d, axis=-1).min(axis=1).max() <= 2 * r
    assert nu.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_auxiliary_energy_log_bound_on_Kn():
    ratio = []
    for n in (1, 2, 3):
        nu = auxiliary_measure(equidistributed_measure(four_corner(n), 2), 4.0 ** -n)
        ratio.append(riesz_energy(nu.with_order(2), 1.0) / math.log(4 ** n))
    assert max(ratio) <= 1.05 * ratio[0]


def test_auxiliary_energy_power_bound_on_cantor():
    vals = []
    for k in range(2, 6):
        r = 4.0 ** -k
        mu = equidistributed_measure(linear_cantor(Fraction(1, 4), k), 4)
        nu = auxiliary_measure(mu, r, 0.5)
        vals.append(riesz_energy(nu.with_order(2), 0.5) * r ** 0.5)
    assert max(vals) <= 1.05 * vals[0]


def test_auxiliary_rejects_bad_radius():
    mu = equidistributed_measure(four_corner(1), 2)
    with pytest.raises(ValueError):
        auxiliary_measure(mu, 1.5)
    with pytest.raises(ValueError):
        auxiliary_measure(mu, 0.0)
