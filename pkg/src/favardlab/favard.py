"""Length functionals: parameter integrals, Minkowski sums, Buffon drops, visibility."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from numba import njit, prange
from scipy.integrate import trapezoid

from .geometry import (CellSet, arc_union_measure, column_groups, column_raster_area,
                       merged_measure, minkowski_sum_raster)
from .measures import CellMeasure, riesz_energy
from .projections import Circle, CurveSpec, ProjectionFamily, Segment, SurfaceSpec
from .rng import stream

BUFFON_CHUNK = 1 << 16


@dataclass(frozen=True)
class LengthEstimate:
    """A length value with how it was obtained.

    ``normalization`` says whether ``value`` is a psi-average over the
    parameter set or an integral against Lebesgue measure.
    """

    value: float
    method: str
    resolution: float
    error_bar: float = 0.0
    seed: int | None = None
    normalization: str = "lebesgue"
    lebesgue: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.value < 0 or self.error_bar < 0:
            raise ValueError("length estimates and error bars are non-negative")

    def to_json(self) -> dict:
        return asdict(self)


CSV_COLUMNS = ("n_or_r", "value", "method", "resolution", "error_bar", "seed")


@dataclass(frozen=True)
class DecayTable:
    """Rows ``(n or r, LengthEstimate)`` with a regression fit."""

    rows: tuple
    model: str = "log-log"
    fit: dict = field(default_factory=dict)
    fit_r2: float = float("nan")
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.rows:
            raise ValueError("a decay table needs at least one row")

    @classmethod
    def build(cls, rows: Sequence[tuple], model: str = "log-log", metadata: dict | None = None) -> "DecayTable":
        rows = tuple(rows)
        fit, r2 = {}, float("nan")
        if len(rows) >= 3:
            slope, intercept, r2 = fit_decay([r[0] for r in rows], [r[1].value for r in rows], model)
            fit = {"slope": slope, "intercept": intercept}
        return cls(rows, model, fit, r2, dict(metadata or {}))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for key, est in self.rows:
            w.writerow([repr(float(key)) if not isinstance(key, int) else key, repr(float(est.value)),
                        est.method, repr(float(est.resolution)), repr(float(est.error_bar)),
                        "" if est.seed is None else est.seed])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"rows": [{"n_or_r": k, **e.to_json()} for k, e in self.rows], "model": self.model,
                "fit": self.fit, "fit_r2": self.fit_r2, "metadata": self.metadata}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def fit_decay(x: Sequence[float], y: Sequence[float], model: str = "log-log") -> tuple[float, float, float]:
    """Ordinary least squares on transformed coordinates; returns (slope, intercept, r^2).

    ``log-log``: log y against log x. ``log-linear``: 1/y against log(1/x),
    which is a straight line for ``y = 1/(a + b log(1/x))``. ``inverse``:
    y against 1/x. ``linear``: y against x.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) < 3 or len(x) != len(y):
        raise ValueError("fit needs at least 3 rows")
    if model == "log-log":
        if np.any(x <= 0) or np.any(y <= 0):
            raise ValueError("log-log fit needs positive data")
        X, Y = np.log(x), np.log(y)
    elif model == "log-linear":
        if np.any(x <= 0) or np.any(y <= 0):
            raise ValueError("log-linear fit needs positive data")
        X, Y = np.log(1.0 / x), 1.0 / y
    elif model == "inverse":
        X, Y = 1.0 / x, y
    elif model == "linear":
        X, Y = x, y
    else:
        raise ValueError(f"unknown model {model!r}")
    if np.ptp(X) == 0:
        raise ValueError("degenerate design matrix: all abscissae equal")
    A = np.stack([X, np.ones_like(X)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, Y, rcond=None)
    resid = Y - (slope * X + intercept)
    ss = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return float(slope), float(intercept), r2


# ---------------------------------------------------------------------------
# Parameter integrals
# ---------------------------------------------------------------------------

def _local_boundary(cells: CellSet, spacing: float) -> tuple[np.ndarray, float]:
    """Boundary sample pattern of one cell in local coordinates ``[0, 1]^dim``."""
    unit = CellSet(cells.dim, 1.0, np.zeros((1, cells.dim), dtype=np.int64), cells.flat_axes)
    pts, h = unit.boundary_samples(spacing / cells.h)
    return pts[0], h * cells.h


def image_measure(fam: ProjectionFamily, alpha, cells: CellSet, resolution: float,
                  check: bool = True) -> float:
    """Measure of the image of ``cells`` under ``pi_alpha``.

    Each cell boundary is sampled at spacing at most ``resolution``; each
    sample image is widened by the family's Lipschitz bound times the
    distance to the nearest sample, and the union is measured. The result
    is an upper bound that converges as ``resolution`` shrinks. With
    ``check=False`` a curve family also accepts parameters outside its
    parameter set; cells are then clipped to the strip where the map is
    defined, which lets the Lebesgue integral run over the whole line.
    """
    if cells.count == 0:
        return 0.0
    if check:
        fam.check_param(alpha)
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    if resolution > cells.h * (1 + 1e-12):
        raise ValueError(f"resolution {resolution} exceeds cell side {cells.h}")
    local, h = _local_boundary(cells, resolution)
    lo, hi = cells.lower(), cells.upper()
    if fam.admissible_x is not None:
        xa, xb = fam.admissible_x(float(alpha))
        lo = lo.copy()
        hi = hi.copy()
        lo[:, 0] = np.maximum(lo[:, 0], xa)
        hi[:, 0] = np.minimum(hi[:, 0], xb)
        keep = lo[:, 0] <= hi[:, 0]
        if not keep.any():
            return 0.0
        lo, hi = lo[keep], hi[keep]
    pts = lo[:, None, :] + local[None, :, :] * (hi - lo)[:, None, :]
    vals = fam.map(alpha, pts.reshape(-1, cells.dim))
    if np.isnan(vals).any():
        raise ValueError(f"{fam.name} map undefined on the cell set at alpha={alpha}")
    free = cells.dim - len(cells.flat_axes)
    L = fam.lipschitz if fam.local_lipschitz is None else fam.local_lipschitz(alpha, lo, hi)
    infl = L * h * math.sqrt(max(free - 1, 1)) / 2.0
    if fam.codomain == "circle":
        return float(arc_union_measure(vals - infl, vals + infl))
    if fam.codomain != "line":
        raise ValueError(f"image measure is not defined for codomain {fam.codomain}")
    return float(merged_measure(vals - infl, vals + infl))


def favard_parameter_integral(fam: ProjectionFamily, cells: CellSet, quad_points: int,
                              resolution: float | None = None) -> LengthEstimate:
    """Average of ``alpha -> |pi_alpha(E)|`` against psi, plus the Lebesgue integral.

    ``value`` is the psi-average over the parameter set. ``lebesgue`` is the
    integral against ``d alpha``: for the orthogonal family that is
    ``pi * value``; for curve families it runs over the full range where
    some point of the unit-size domain has an image, which makes it equal
    to ``|E + Gamma|``.
    """
    if quad_points < 2:
        raise ValueError("quad_points must be >= 2")
    res = cells.h / 32 if resolution is None else resolution
    if cells.count == 0:
        return LengthEstimate(0.0, "parameter-integral", res, normalization="psi-average", lebesgue=0.0)
    nodes, w = fam.quadrature(quad_points)
    vals = np.array([image_measure(fam, a, cells, res) for a in nodes])
    avg = float(np.dot(w, vals))
    if fam.lebesgue_range is not None:
        a, b = fam.lebesgue_range
        t = np.linspace(a, b, max(quad_points, 2 * quad_points * int(math.ceil((b - a) / fam.param_measure))))
        lv = np.array([image_measure(fam, x, cells, res, check=False) for x in t])
        leb = float(trapezoid(lv, t))
    else:
        leb = avg * fam.param_measure
    return LengthEstimate(avg, "parameter-integral", res, normalization="psi-average", lebesgue=leb,
                          extra={"quad_points": quad_points, "family": fam.name})


# ---------------------------------------------------------------------------
# Minkowski sums
# ---------------------------------------------------------------------------

def _surface_minkowski(s: SurfaceSpec, cells: CellSet, pitch: float) -> float:
    if cells.dim != 3:
        raise ValueError("a surface needs a 3-D cell set")
    groups = column_groups(cells)
    L = s.L

    def envelope(centres, g):
        # window of offsets sigma = column centre - footprint, a square
        sx_hi = centres[:, 0][:, None] - g.lower[:, 0][None, :]
        sy_hi = centres[:, 1][:, None] - g.lower[:, 1][None, :]
        sx_lo, sy_lo = sx_hi - g.width[0], sy_hi - g.width[1]
        nx = np.clip(0.0, sx_lo, sx_hi)
        ny = np.clip(0.0, sy_lo, sy_hi)
        near = np.hypot(nx, ny)
        far = np.hypot(np.maximum(np.abs(sx_lo), np.abs(sx_hi)), np.maximum(np.abs(sy_lo), np.abs(sy_hi)))
        ok = near <= L
        m = np.where(ok, s.profile(np.minimum(near, L)), np.nan)
        M = np.where(ok, s.profile(np.minimum(far, L)), np.nan)
        return m, M

    lo, hi = cells.bbox()
    return column_raster_area(groups, envelope, lo[:2] - L, hi[:2] + L, lo[2] + s.profile(0.0),
                              hi[2] + s.profile(L), pitch, batch=512)


def favard_minkowski(curve, cells: CellSet, pitch: float) -> LengthEstimate:
    """Rasterised measure of ``E + Gamma``.

    ``curve`` may be a :class:`CurveSpec` (sampled at spacing ``pitch/2``),
    a :class:`SurfaceSpec` (voxels, exact per-column envelope), or an array
    of planar curve samples.
    """
    if cells.count and pitch > cells.h / 2 * (1 + 1e-12) and not cells.flat_axes:
        raise ValueError(f"pitch {pitch} exceeds half the cell side {cells.h}")
    if isinstance(curve, SurfaceSpec):
        if pitch < 2.0 ** -7 * (1 - 1e-12):
            raise ValueError("surface rasterisation is limited to pitch >= 2**-7")
        val = 0.0 if cells.count == 0 else _surface_minkowski(curve, cells, pitch)
        return LengthEstimate(val, "minkowski", pitch)
    samples = curve.sample(pitch / 2) if isinstance(curve, CurveSpec) else np.asarray(curve, float)
    val = minkowski_sum_raster(cells, samples, pitch) if cells.count else 0.0
    return LengthEstimate(val, "minkowski", pitch)


# ---------------------------------------------------------------------------
# Buffon drops
# ---------------------------------------------------------------------------

@njit(parallel=True, cache=True)
def _buffon_hits(px, py, g_x0, width, ptr, iv_lo, iv_hi, L1, L2, ga_tab_t, ga_tab_v, tc, gc):
    n = px.shape[0]
    hits = np.zeros(n, dtype=np.uint8)
    for i in prange(n):
        for g in range(g_x0.shape[0]):
            a = px[i] - g_x0[g] - width
            b = px[i] - g_x0[g]
            if a < L1:
                a = L1
            if b > L2:
                b = L2
            if a > b:
                continue
            va = np.interp(a, ga_tab_t, ga_tab_v)
            vb = np.interp(b, ga_tab_t, ga_tab_v)
            mn = min(va, vb)
            mx = max(va, vb)
            if a <= tc <= b:
                mn = min(mn, gc)
                mx = max(mx, gc)
            # need k with iv_lo[k] <= py - mn and iv_hi[k] >= py - mx
            u = py[i] - mn
            lo, hi = ptr[g], ptr[g + 1]
            k = np.searchsorted(iv_lo[lo:hi], u, side="right") - 1
            if k >= 0 and iv_hi[lo + k] >= py[i] - mx:
                hits[i] = 1
                break
    return hits


def default_sample_box(curve: CurveSpec, cells: CellSet) -> tuple[np.ndarray, np.ndarray]:
    """Bounding box of ``E + Gamma`` padded by one cell side."""
    lo, hi = cells.bbox()
    L1, L2 = curve.interval
    t = np.linspace(L1, L2, 4097)
    g = curve.gamma(t)
    mn, mx = curve.window_extrema(np.array([L1]), np.array([L2]))
    pad = cells.h
    return (np.array([lo[0] + L1 - pad, lo[1] + min(float(mn[0]), g.min()) - pad]),
            np.array([hi[0] + L2 + pad, hi[1] + max(float(mx[0]), g.max()) + pad]))


def buffon_mc(curve: CurveSpec, cells: CellSet, drops: int, sample_box=None, seed: int = 0,
              table: int = 1 << 16) -> LengthEstimate:
    """Monte Carlo measure of the translates ``(alpha, beta)`` whose ``(alpha, beta) - Gamma`` meets ``E``.

    That set is ``E + Gamma``, so the hit fraction times the box area
    estimates ``|E + Gamma|``. Hits are tested exactly up to a tabulated
    gamma (``table`` nodes, linear interpolation) and the exact extremum at
    the critical point of gamma. Drops come in chunks, each from its own
    random stream.
    """
    if drops < 1:
        raise ValueError("drops must be >= 1")
    if cells.dim != 2:
        raise ValueError("buffon_mc works on planar cell sets")
    if cells.count == 0:
        return LengthEstimate(0.0, "buffon", float(drops), 0.0, seed)
    if sample_box is None:
        sample_box = default_sample_box(curve, cells)
    blo, bhi = np.asarray(sample_box[0], float), np.asarray(sample_box[1], float)
    area = float(np.prod(bhi - blo))
    if not area > 0:
        raise ValueError("sample box must have positive area")
    groups = column_groups(cells)
    L1, L2 = curve.interval
    tt = np.linspace(L1, L2, table)
    gv = np.asarray(curve.gamma(tt), float)
    tc = curve.critical_point()
    tcv = np.nan if tc is None else float(tc)
    gcv = 0.0 if tc is None else float(curve.gamma(tc))
    total = 0
    for c, start in enumerate(range(0, drops, BUFFON_CHUNK)):
        n = min(BUFFON_CHUNK, drops - start)
        rng = stream(seed, 0xB0, c)
        p = blo + rng.random((n, 2)) * (bhi - blo)
        hits = _buffon_hits(p[:, 0].copy(), p[:, 1].copy(), groups.lower[:, 0].copy(), float(groups.width[0]),
                            groups.ptr, groups.iv_lo, groups.iv_hi, L1, L2, tt, gv, tcv, gcv)
        total += int(hits.sum())
    frac = total / drops
    err = area * math.sqrt(max(frac * (1 - frac), 1.0 / drops) / drops)
    return LengthEstimate(area * frac, "buffon", float(drops), err, seed,
                          extra={"sample_box": [blo.tolist(), bhi.tolist()], "hits": total})


# ---------------------------------------------------------------------------
# Visibility
# ---------------------------------------------------------------------------

def _corner_angles(a: np.ndarray, cells: CellSet) -> tuple[np.ndarray, np.ndarray]:
    """Angular extent of every cell seen from each vantage point.

    ``a`` has shape ``(Q, 2)``; returns ``lo, hi`` of shape ``(Q, C)``.
    """
    corners = cells.corners()                       # (C, K, 2)
    centre = cells.centers()                        # (C, 2)
    dc = centre[None, :, :] - a[:, None, :]         # (Q, C, 2)
    base = np.arctan2(dc[..., 1], dc[..., 0])
    dk = corners[None, :, :, :] - a[:, None, None, :]
    ang = np.arctan2(dk[..., 1], dk[..., 0]) - base[..., None]
    ang = np.mod(ang + math.pi, 2 * math.pi) - math.pi
    return base + ang.min(axis=-1), base + ang.max(axis=-1)


def _min_distance(a: np.ndarray, cells: CellSet) -> np.ndarray:
    lo, hi = cells.lower(), cells.upper()
    d = np.maximum(0.0, np.maximum(lo[None] - a[:, None, :], a[:, None, :] - hi[None]))
    return np.linalg.norm(d, axis=-1).min(axis=1)


def visibility(a: Sequence[float], cells: CellSet, resolution: float | None = None) -> float:
    """Angular measure of the radial image of ``cells`` seen from ``a``.

    Each cell is convex and does not contain ``a``, so its image is the arc
    spanned by its extreme corner directions; the union of these arcs is
    measured exactly. ``resolution`` is validated but not needed.
    """
    if resolution is not None and not resolution > 0:
        raise ValueError("resolution must be positive")
    if cells.dim != 2:
        raise ValueError("visibility is implemented for planar sets")
    if cells.count == 0:
        return 0.0
    a = np.asarray(a, float).reshape(1, 2)
    if _min_distance(a, cells)[0] <= 0:
        raise ValueError(f"vantage point {a[0].tolist()} touches the set")
    lo, hi = _corner_angles(a, cells)
    return float(arc_union_measure(lo, hi)[0])


def visibility_integral(vantage, cells: CellSet, quad_points: int,
                        resolution: float | None = None, batch: int = 64) -> LengthEstimate:
    """Integral of ``a -> vis(a, E)`` over the vantage set against arc length.

    A closed circle uses the periodic equally spaced rule, a segment the
    trapezoid rule. ``extra['psi_average']`` holds the normalised value.
    """
    if quad_points < 2:
        raise ValueError("quad_points must be >= 2")
    if isinstance(vantage, Circle):
        t = np.arange(quad_points) / quad_points
        w = np.full(quad_points, 1.0 / quad_points)
    elif isinstance(vantage, Segment):
        t = np.linspace(0.0, 1.0, quad_points)
        w = np.full(quad_points, 1.0 / (quad_points - 1))
        w[[0, -1]] *= 0.5
    else:
        raise TypeError(f"unsupported vantage {vantage!r}")
    res = 0.0 if resolution is None else resolution
    if cells.count == 0:
        return LengthEstimate(0.0, "parameter-integral", res, extra={"psi_average": 0.0})
    pts = vantage.point(t)
    if np.any(_min_distance(pts, cells) <= 0):
        raise ValueError("vantage set touches the visible set")
    vals = np.empty(quad_points)
    for s in range(0, quad_points, batch):
        lo, hi = _corner_angles(pts[s:s + batch], cells)
        vals[s:s + batch] = arc_union_measure(lo, hi)
    avg = float(np.dot(w, vals))
    return LengthEstimate(avg * vantage.measure, "parameter-integral", res,
                          extra={"psi_average": avg, "quad_points": quad_points})


# ---------------------------------------------------------------------------
# Energy bound and Marstrand experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyBoundReport:
    energy: float
    length: float
    product: float
    floor: float
    holds: bool
    consistent: bool
    s: float

    def to_json(self) -> dict:
        return asdict(self)


def energy_lower_bound_check(fam: ProjectionFamily, nu: CellMeasure, s: float, fav: LengthEstimate,
                             floor: float = 0.1) -> EnergyBoundReport:
    """``I_s(nu) * fav.value`` against a positive floor.

    A zero length for a measure of positive mass cannot satisfy the lower
    bound and is flagged as inconsistent.
    """
    if fav.normalization != "psi-average":
        raise ValueError("the length must be a psi-average over the parameter set")
    lo, hi = nu.support.bbox()
    om = fam.omega
    if om["type"] == "box":
        olo, ohi = np.asarray(om["lo"]), np.asarray(om["hi"])
        if np.any(lo < olo - 1e-9) or np.any(hi > ohi + 1e-9):
            raise ValueError("measure is not supported in the family's domain")
    energy = riesz_energy(nu, s)
    product = energy * fav.value
    consistent = not (fav.value == 0 and float(np.sum(nu.weights)) > 0)
    return EnergyBoundReport(energy, fav.value, product, floor, bool(product >= floor), consistent, float(s))


def box_dimension(values: np.ndarray, scales: Sequence[float]) -> float:
    """Least-squares box-counting dimension of a 1-D point cloud."""
    v = np.asarray(values, float)
    counts = [len(np.unique(np.floor(v / e).astype(np.int64))) for e in scales]
    slope, _, _ = fit_decay(1.0 / np.asarray(scales), np.asarray(counts, float), "log-log")
    return slope


def marstrand_dimension_experiment(fam: ProjectionFamily, cells: CellSet, alphas: int, seed: int,
                                   scales: int = 5, quadrature_order: int = 4) -> dict:
    """Box-counting dimension of ``pi_alpha(E)`` for psi-random ``alpha``.

    The image cloud is the image of a midpoint grid with ``quadrature_order``
    points per cell side; boxes have sides ``side * 2**k``, ``k < scales``.
    """
    if scales < 4:
        raise ValueError("box counting needs at least 4 scales")
    if alphas < 1:
        raise ValueError("alphas must be >= 1")
    mu_pts = CellMeasure(cells, np.full(cells.count, 1.0 / cells.count), quadrature_order).quadrature()[0]
    rng = stream(seed, 0x3A)
    params = fam.sample_params(rng, alphas, stratified=False)
    eps = [cells.h * 2 ** k for k in range(scales)]
    dims = []
    for a in params:
        v = fam.map(a, mu_pts)
        if np.isnan(v).any():
            raise ValueError(f"{fam.name} map undefined on the set at alpha={a}")
        dims.append(box_dimension(v, eps))
    dims = np.asarray(dims)
    return {"family": fam.name, "alphas": params.tolist(), "estimates": dims.tolist(),
            "median": float(np.median(dims)), "scales": eps, "seed": int(seed)}
