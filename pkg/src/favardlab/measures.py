"""Discrete probability measures on cell sets and their Riesz energies."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numba import njit, prange
from scipy import integrate

from .geometry import CellSet, refine_side
from .rng import stream

WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CellMeasure:
    """Probability measure given by per-cell weights, uniform inside each cell.

    Integrals are evaluated with a midpoint rule of ``quadrature_order``
    points per side along every non-flat axis.
    """

    support: CellSet
    weights: np.ndarray
    quadrature_order: int = 4

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if self.support.count == 0:
            raise ValueError("a measure needs a non-empty support")
        if w.shape[0] != self.support.count:
            raise ValueError(f"{w.shape[0]} weights for {self.support.count} cells")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL * max(1, len(w)) ** 0.5 + WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        if self.quadrature_order < 1:
            raise ValueError("quadrature_order must be >= 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def with_order(self, q: int) -> "CellMeasure":
        return CellMeasure(self.support, self.weights, q)

    @property
    def free_dims(self) -> int:
        return self.support.dim - len(self.support.flat_axes)

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Points ``(N, dim)`` and weights ``(N,)``; each cell's points are contiguous."""
        cells, q = self.support, self.quadrature_order
        free = [a for a in range(cells.dim) if a not in cells.flat_axes]
        t = (np.arange(q) + 0.5) / q * cells.h
        grids = np.meshgrid(*([t] * len(free)), indexing="ij")
        local = np.zeros((q ** len(free), cells.dim))
        for k, a in enumerate(free):
            local[:, a] = grids[k].ravel()
        pts = (cells.lower()[:, None, :] + local[None, :, :]).reshape(-1, cells.dim)
        w = np.repeat(self.weights / len(local), len(local))
        return pts, w

    def points_per_cell(self) -> int:
        return self.quadrature_order ** self.free_dims

    def to_json(self) -> dict:
        return {"support": self.support.to_json(), "weights": self.weights.tolist(),
                "quadrature_order": self.quadrature_order}

    @classmethod
    def from_json(cls, data: dict) -> "CellMeasure":
        return cls(CellSet.from_json(data["support"]), np.asarray(data["weights"]),
                   int(data.get("quadrature_order", 4)))


def equidistributed_measure(cells: CellSet, quadrature_order: int = 4) -> CellMeasure:
    """Equal weight on every cell."""
    if cells.count == 0:
        raise ValueError("cannot spread mass over an empty cell set")
    return CellMeasure(cells, np.full(cells.count, 1.0 / cells.count), quadrature_order)


# ---------------------------------------------------------------------------
# Riesz energy
# ---------------------------------------------------------------------------

@njit(parallel=True, fastmath=True, cache=True)
def _energy_rows(pts, w, start, stop, s):
    # row i sums over points outside i's own cell; rows are independent so
    # the result does not depend on how prange splits them
    n, d = pts.shape
    rows = np.zeros(n)
    bad = np.zeros(n, dtype=np.uint8)
    half = 0.5 * s
    for i in prange(n):
        acc = 0.0
        for seg in range(2):
            j0 = 0 if seg == 0 else stop[i]
            j1 = start[i] if seg == 0 else n
            for j in range(j0, j1):
                d2 = 0.0
                for k in range(d):
                    t = pts[i, k] - pts[j, k]
                    d2 += t * t
                if d2 == 0.0:
                    bad[i] = 1
                    continue
                if s == 1.0:
                    acc += w[j] / math.sqrt(d2)
                elif s == 0.5:
                    acc += w[j] / math.sqrt(math.sqrt(d2))
                else:
                    acc += w[j] * math.exp(-half * math.log(d2))
        rows[i] = w[i] * acc
    return rows, bad


def _radial_poly_integral(coeffs: np.ndarray, R: np.ndarray, s: float, base: int) -> np.ndarray:
    """``int_0^R rho^(base - s) * sum_k coeffs[k] rho^k d rho``."""
    out = np.zeros_like(R)
    for k, c in enumerate(coeffs):
        p = base - s + k + 1
        out = out + c * R ** p / p
    return out


@lru_cache(maxsize=None)
def c_self(s: float, k: int) -> float:
    """Exact ``s``-energy of the uniform probability measure on ``[0, 1]^k``.

    Finite only for ``s < k``. The difference of two independent uniform
    points has density ``prod(1 - |z_i|)`` on ``[-1, 1]^k``, which gives a
    one-line formula for ``k = 1`` and angular quadratures otherwise.
    """
    if not 0 < s < k:
        raise ValueError(f"self-energy of a {k}-cube is finite only for 0 < s < {k}, got s={s}")
    if k == 1:
        return 2.0 / ((1.0 - s) * (2.0 - s))
    if k == 2:
        def f(phi):
            c, sn = math.cos(phi), math.sin(phi)
            R = 1.0 / max(c, sn)
            poly = np.array([1.0, -(c + sn), c * sn])
            return float(_radial_poly_integral(poly, np.array(R), s, 1))
        val, _ = integrate.quad(f, 0.0, math.pi / 4, epsabs=1e-13, epsrel=1e-12, limit=200)
        return 8.0 * val
    if k == 3:
        def g(phi, theta):
            u = (math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta))
            R = 1.0 / max(u)
            e1 = u[0] + u[1] + u[2]
            e2 = u[0] * u[1] + u[0] * u[2] + u[1] * u[2]
            e3 = u[0] * u[1] * u[2]
            poly = np.array([1.0, -e1, e2, -e3])
            return float(_radial_poly_integral(poly, np.array(R), s, 2)) * math.sin(theta)
        val, _ = integrate.dblquad(g, 0.0, math.pi / 2, 0.0, math.pi / 2, epsabs=1e-11, epsrel=1e-10)
        return 8.0 * val
    raise ValueError(f"unsupported cell dimension {k}")


def riesz_energy(mu: CellMeasure, s: float, self_term: bool = True) -> float:
    """``I_s(mu)``: quadrature pair sum plus the exact within-cell energy.

    Pairs of quadrature points in the same cell are skipped; each cell then
    contributes ``w**2 * c_self(s, k) / side**s`` where ``k`` is the number
    of non-flat axes.
    """
    if not s > 0:
        raise ValueError(f"energy exponent must be positive, got {s}")
    k = mu.free_dims
    if self_term and s >= k:
        raise ValueError(f"s={s} gives infinite self-energy on {k}-dimensional cells")
    pts, w = mu.quadrature()
    per = mu.points_per_cell()
    cell = np.arange(len(pts)) // per
    start = (cell * per).astype(np.int64)
    stop = start + per
    rows, bad = _energy_rows(np.ascontiguousarray(pts), w, start, stop, float(s))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise FloatingPointError(f"distinct quadrature points coincide at {pts[i].tolist()}; "
                                 "the support has overlapping cells")
    total = float(np.sum(rows))
    if self_term:
        total += float(np.sum(mu.weights ** 2)) * c_self(float(s), k) / mu.support.h ** s
    if not math.isfinite(total):
        raise FloatingPointError(f"energy is not finite ({total})")
    return total


# ---------------------------------------------------------------------------
# Pushforwards
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PushforwardMeasure1D:
    """Weighted atoms on the line, or on the circle when ``period`` is set."""

    atoms: np.ndarray
    weights: np.ndarray
    bin_width: float
    period: float | None = None

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    def density(self) -> tuple[np.ndarray, np.ndarray]:
        """Histogram density: bin left edges and values."""
        a = np.mod(self.atoms, self.period) if self.period else self.atoms
        lo = 0.0 if self.period else math.floor(a.min() / self.bin_width) * self.bin_width
        hi = self.period if self.period else a.max() + self.bin_width
        edges = np.arange(lo, hi + self.bin_width, self.bin_width)
        hist, edges = np.histogram(a, bins=edges, weights=self.weights)
        return edges[:-1], hist / self.bin_width


def pushforward(family_map: Callable[[np.ndarray], np.ndarray], mu: CellMeasure,
                bin_width: float | None = None, period: float | None = None) -> PushforwardMeasure1D:
    """Image of ``mu`` under a vectorised map ``(N, dim) -> (N,)``."""
    pts, w = mu.quadrature()
    vals = np.asarray(family_map(pts), dtype=float).reshape(-1)
    if vals.shape[0] != pts.shape[0]:
        raise ValueError("map must return one value per point")
    bad = ~np.isfinite(vals)
    if bad.any():
        raise ValueError(f"map undefined at quadrature point {pts[np.flatnonzero(bad)[0]].tolist()}")
    bw = bin_width if bin_width is not None else mu.support.h / mu.quadrature_order
    return PushforwardMeasure1D(vals, w.copy(), float(bw), period)


# ---------------------------------------------------------------------------
# Frostman growth
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrostmanReport:
    t: float
    constant: float
    max_violation_ratio: float
    worst_x: tuple
    worst_r: float
    samples: int
    seed: int
    b: float = 1.0


@njit(parallel=True, cache=True)
def _ball_masses(pts, w, centres, radii):
    out = np.zeros(centres.shape[0])
    for i in prange(centres.shape[0]):
        r2 = radii[i] * radii[i]
        acc = 0.0
        for j in range(pts.shape[0]):
            d2 = 0.0
            for k in range(pts.shape[1]):
                t = pts[j, k] - centres[i, k]
                d2 += t * t
            if d2 <= r2:
                acc += w[j]
        out[i] = acc
    return out


def frostman_check(mu: CellMeasure, t: float, samples: int, seed: int, b: float = 1.0) -> FrostmanReport:
    """Largest sampled ``mu(B(x, r)) / r**t``.

    ``x`` is uniform in the bounding box of the support and ``r`` is
    log-uniform between the cell side and the support diameter. Ball masses
    are computed on the quadrature points. ``max_violation_ratio`` is the
    constant divided by the reference growth constant ``b``.
    """
    dim = mu.support.dim
    if not 0 < t <= dim:
        raise ValueError(f"growth exponent must lie in (0, {dim}], got {t}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    lo, hi = mu.support.bbox()
    diam = float(np.linalg.norm(hi - lo))
    r_min = mu.support.h
    r_max = max(diam, r_min)
    rng = stream(seed, 0xF0)
    x = lo + rng.random((samples, dim)) * (hi - lo)
    r = np.exp(np.log(r_min) + rng.random(samples) * (np.log(r_max) - np.log(r_min)))
    pts, w = mu.quadrature()
    mass = _ball_masses(np.ascontiguousarray(pts), w, x, r)
    ratio = mass / r ** t
    i = int(np.argmax(ratio))
    return FrostmanReport(float(t), float(ratio[i]), float(ratio[i] / b), tuple(x[i].tolist()),
                          float(r[i]), int(samples), int(seed), float(b))


# ---------------------------------------------------------------------------
# Auxiliary measure
# ---------------------------------------------------------------------------

@njit(cache=True)
def _greedy_centres(pts, w, sep):
    n = pts.shape[0]
    chosen = np.empty(n, dtype=np.int64)
    k = 0
    s2 = sep * sep
    for i in range(n):
        if w[i] <= 0.0:
            continue
        ok = True
        for c in range(k):
            d2 = 0.0
            for a in range(pts.shape[1]):
                t = pts[i, a] - pts[chosen[c], a]
                d2 += t * t
            if d2 <= s2:
                ok = False
                break
        if ok:
            chosen[k] = i
            k += 1
    return chosen[:k]


def auxiliary_measure(mu: CellMeasure, r: float, s: float | None = None) -> CellMeasure:
    """Normalised sum of uniform measures on a maximal disjoint family of ``r``-balls.

    Ball centres are quadrature points of positive mass, taken greedily in
    cell order and kept when they are more than ``2r`` from every earlier
    centre. Ball ``i`` receives mass ``mu(B_i) / tau`` with
    ``tau = sum_i mu(B_i)``, spread uniformly over the fine cells (side at
    most ``r/4``, on a dyadic refinement of the support lattice) whose
    centres lie in the ball. ``s`` is accepted for interface symmetry with
    the energy bounds and does not change the construction.
    """
    if not 0 < r < 1:
        raise ValueError(f"ball radius must lie in (0, 1), got {r}")
    if s is not None and not s > 0:
        raise ValueError("s must be positive")
    cells = mu.support
    pts, w = mu.quadrature()
    pts = np.ascontiguousarray(pts)
    centres_idx = _greedy_centres(pts, w, 2.0 * r)
    if len(centres_idx) == 0:
        raise ValueError("measure has no point of positive mass")
    centres = pts[centres_idx]
    radii = np.full(len(centres), r)
    ball_mass = _ball_masses(pts, w, centres, radii)
    tau = float(ball_mass.sum())
    if tau <= 0:
        raise ValueError("balls carry no mass")
    fine, _ = refine_side(cells.side, r / 4)
    h = float(fine)
    reach = int(math.ceil(r / h)) + 1
    grid = np.arange(-reach, reach + 1)
    offs = np.stack([g.ravel() for g in np.meshgrid(*([grid] * cells.dim), indexing="ij")], axis=1)
    anchors, weights = [], []
    for c, m in zip(centres, ball_mass):
        base = np.floor(c / h).astype(np.int64)
        cand = base + offs
        ctr = (cand + 0.5) * h
        inside = np.sum((ctr - c) ** 2, axis=1) <= r * r
        a = cand[inside]
        if len(a) == 0:
            a = base[None, :]
        anchors.append(a)
        weights.append(np.full(len(a), m / tau / len(a)))
    anchors = np.concatenate(anchors)
    weights = np.concatenate(weights)
    # fine cells of different balls never coincide (centres are > 2r apart)
    weights = weights / weights.sum()
    return CellMeasure(CellSet(cells.dim, fine, anchors), weights, mu.quadrature_order)
