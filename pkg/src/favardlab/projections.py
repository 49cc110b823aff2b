"""Projection families with a common interface, transversality and tube checks.

Every family maps a parameter ``alpha`` and a point ``x`` to a point of its
codomain (a real number, an angle on the circle, or a unit vector in 3-D).
Parameters are drawn through ``from_unit``, which pushes the uniform measure
on ``[0, 1]**param_dim`` forward to the normalised parameter measure psi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .rng import stratified_unit, stream

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Family container
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProjectionFamily:
    """Parameterised projections ``(alpha, x) -> pi_alpha(x)``.

    ``param_measure`` is the Lebesgue (or arc-length, area) measure of the
    parameter set, so an integral against ``d alpha`` is ``param_measure``
    times the psi-average. ``lebesgue_range`` is set for families whose
    length functional integrates over a wider range than the parameter set.
    """

    name: str
    dim: int
    param_dim: int
    param_domain: dict
    codomain: str
    omega: dict
    lipschitz: float
    param_measure: float
    _map: Callable = field(repr=False)
    _from_unit: Callable = field(repr=False)
    _contains: Callable = field(repr=False)
    m: int = 1
    periodic: bool = False
    lebesgue_range: tuple[float, float] | None = None
    admissible_x: Callable | None = field(default=None, repr=False)
    local_lipschitz: Callable | None = field(default=None, repr=False)

    def map(self, alpha, x) -> np.ndarray:
        """Broadcasting evaluation; NaN where the map is undefined."""
        return self._map(np.asarray(alpha, float), np.asarray(x, float))

    def from_unit(self, u) -> np.ndarray:
        u = np.asarray(u, float)
        if self.param_dim == 1 and u.ndim and u.shape[-1] == 1:
            u = u[..., 0]
        return self._from_unit(u)

    def contains(self, alpha) -> np.ndarray:
        return self._contains(np.asarray(alpha, float))

    def check_param(self, alpha) -> None:
        if not np.all(self.contains(alpha)):
            raise ValueError(f"parameter {np.asarray(alpha).tolist()} lies outside the parameter set of {self.name}")

    def gap(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Distance in the codomain."""
        if self.codomain == "line":
            return np.abs(u - v)
        if self.codomain == "circle":
            d = np.mod(u - v, TWO_PI)
            return np.minimum(d, TWO_PI - d)
        if self.codomain == "sphere":
            c = np.clip(np.sum(u * v, axis=-1), -1.0, 1.0)
            return np.arccos(c)
        raise ValueError(f"unknown codomain {self.codomain}")

    def sample_params(self, rng: np.random.Generator, n: int, stratified: bool = True) -> np.ndarray:
        u = stratified_unit(rng, n, self.param_dim) if stratified else rng.random((n, self.param_dim))
        return self.from_unit(u)

    def quadrature(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and psi-weights for averaging over the parameter set.

        Periodic parameter sets use the equally spaced periodic rule, open
        intervals the trapezoid rule, 2-D sets the midpoint rule on the
        unit square.
        """
        if n < 2:
            raise ValueError("quadrature needs at least 2 points")
        if self.param_dim == 1:
            if self.periodic:
                u = np.arange(n) / n
                w = np.full(n, 1.0 / n)
            else:
                u = np.linspace(0.0, 1.0, n)
                w = np.full(n, 1.0 / (n - 1))
                w[[0, -1]] *= 0.5
            return self.from_unit(u), w
        k = int(math.ceil(math.sqrt(n)))
        t = (np.arange(k) + 0.5) / k
        g = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
        return self.from_unit(g), np.full(len(g), 1.0 / len(g))

    def sample_omega(self, rng: np.random.Generator, n: int) -> np.ndarray:
        om = self.omega
        if om["type"] == "box":
            lo, hi = np.asarray(om["lo"], float), np.asarray(om["hi"], float)
            return lo + rng.random((n, self.dim)) * (hi - lo)
        if om["type"] == "ball":
            c, r = np.asarray(om["center"], float), float(om["radius"])
            v = rng.standard_normal((n, self.dim))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            rad = r * rng.random(n) ** (1.0 / self.dim)
            return c + v * rad[:, None]
        raise ValueError(f"unknown domain type {om['type']}")

    def describe(self) -> dict:
        return {"name": self.name, "dim": self.dim, "param_dim": self.param_dim,
                "param_domain": self.param_domain, "codomain": self.codomain, "m": self.m,
                "omega": self.omega, "lipschitz": self.lipschitz,
                "param_measure": self.param_measure}


def _box(lo, hi) -> dict:
    return {"type": "box", "lo": [float(v) for v in lo], "hi": [float(v) for v in hi]}


# ---------------------------------------------------------------------------
# Orthogonal projections
# ---------------------------------------------------------------------------

def orthogonal_family(box: tuple[Sequence[float], Sequence[float]] = ((0, 0), (1, 1))) -> ProjectionFamily:
    """``theta -> x1 cos theta + x2 sin theta`` with theta uniform on ``[0, pi)``."""
    def f(theta, x):
        return x[..., 0] * np.cos(theta) + x[..., 1] * np.sin(theta)

    return ProjectionFamily(
        name="orthogonal", dim=2, param_dim=1,
        param_domain={"type": "interval", "lo": 0.0, "hi": math.pi},
        codomain="line", omega=_box(*box), lipschitz=1.0, param_measure=math.pi,
        _map=f, _from_unit=lambda u: math.pi * u,
        _contains=lambda a: (a >= 0) & (a <= math.pi), periodic=True)


# ---------------------------------------------------------------------------
# Vantage sets and radial projections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float

    dim = 2

    @property
    def measure(self) -> float:
        return TWO_PI * self.radius

    def point(self, t):
        t = np.asarray(t, float)
        c = np.asarray(self.center, float)
        ang = TWO_PI * t
        return np.stack([c[0] + self.radius * np.cos(ang), c[1] + self.radius * np.sin(ang)], axis=-1)


@dataclass(frozen=True)
class Segment:
    start: tuple[float, ...]
    end: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.start)

    @property
    def measure(self) -> float:
        return float(np.linalg.norm(np.subtract(self.end, self.start)))

    def point(self, t):
        t = np.asarray(t, float)[..., None]
        p, q = np.asarray(self.start, float), np.asarray(self.end, float)
        return p + t * (q - p)


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float

    dim = 3

    @property
    def measure(self) -> float:
        return 4.0 * math.pi * self.radius ** 2

    def point(self, u):
        u = np.asarray(u, float)
        z = 1.0 - 2.0 * u[..., 0]
        phi = TWO_PI * u[..., 1]
        rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        c = np.asarray(self.center, float)
        return c + self.radius * np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def vantage_from_json(d: dict):
    kind = d["type"]
    if kind == "circle":
        return Circle(tuple(d["center"]), float(d["radius"]))
    if kind == "segment":
        return Segment(tuple(d["start"]), tuple(d["end"]))
    if kind == "sphere":
        return Sphere(tuple(d["center"]), float(d["radius"]))
    raise ValueError(f"unknown vantage type {kind!r}")


def _box_dist(p: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    d = np.maximum(0.0, np.maximum(lo - p, p - hi))
    return np.linalg.norm(d, axis=-1)


def _box_far(p: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    d = np.maximum(np.abs(p - lo), np.abs(p - hi))
    return np.linalg.norm(d, axis=-1)


def _segment_box_distance(seg: Segment, lo: np.ndarray, hi: np.ndarray) -> float:
    # distance is convex along the segment, so ternary search is exact enough
    a, b = 0.0, 1.0
    for _ in range(200):
        m1, m2 = a + (b - a) / 3, b - (b - a) / 3
        if _box_dist(seg.point(m1), lo, hi) <= _box_dist(seg.point(m2), lo, hi):
            b = m2
        else:
            a = m1
    return float(_box_dist(seg.point(0.5 * (a + b)), lo, hi))


def vantage_box_distance(vantage, lo, hi) -> float:
    """Distance between the vantage set and the box ``[lo, hi]``."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    if isinstance(vantage, (Circle, Sphere)):
        c = np.asarray(vantage.center, float)
        near, far = float(_box_dist(c, lo, hi)), float(_box_far(c, lo, hi))
        if near <= vantage.radius <= far:
            return 0.0
        return near - vantage.radius if near > vantage.radius else vantage.radius - far
    if isinstance(vantage, Segment):
        return _segment_box_distance(vantage, lo, hi)
    raise TypeError(f"unsupported vantage {vantage!r}")


def radial_family(vantage, visible_box: tuple[Sequence[float], Sequence[float]]) -> ProjectionFamily:
    """Radial projections ``x -> (x - a) / |x - a|`` from points ``a`` of the vantage set.

    Planar vantage sets (circle, segment) use a normalised arc-length
    parameter ``t`` and report directions as angles. A sphere in 3-D uses a
    two-parameter area-uniform chart and reports unit vectors.
    """
    lo, hi = np.asarray(visible_box[0], float), np.asarray(visible_box[1], float)
    if lo.shape[0] != vantage.dim:
        raise ValueError("vantage and visible box have different dimensions")
    dist = vantage_box_distance(vantage, lo, hi)
    if dist <= 1e-12 * max(1.0, float(np.linalg.norm(hi - lo))):
        raise ValueError("vantage set intersects the visible box")
    omega = _box(lo, hi)

    def local(alpha, clo, chi):
        a = vantage.point(alpha)
        return 1.0 / max(float(np.min(_box_dist(a, clo, chi))), 1e-300)

    if vantage.dim == 2:
        def f(t, x):
            d = x - vantage.point(t)
            out = np.arctan2(d[..., 1], d[..., 0])
            return np.where((d[..., 0] == 0) & (d[..., 1] == 0), np.nan, out)

        periodic = isinstance(vantage, Circle)
        desc = {"type": type(vantage).__name__.lower(), **vantage.__dict__}
        return ProjectionFamily(
            name="radial", dim=2, param_dim=1, param_domain=desc, codomain="circle",
            omega=omega, lipschitz=1.0 / dist, param_measure=vantage.measure,
            _map=f, _from_unit=lambda u: u, _contains=lambda a: (a >= 0) & (a <= 1),
            periodic=periodic, local_lipschitz=local)

    def g(u, x):
        d = x - vantage.point(u)
        n = np.linalg.norm(d, axis=-1, keepdims=True)
        return np.where(n > 0, d / np.where(n > 0, n, 1.0), np.nan)

    return ProjectionFamily(
        name="radial", dim=3, param_dim=2, param_domain={"type": "sphere", **vantage.__dict__},
        codomain="sphere", omega=omega, lipschitz=1.0 / dist, param_measure=vantage.measure,
        _map=g, _from_unit=lambda u: u,
        _contains=lambda a: np.all((a >= 0) & (a <= 1), axis=-1), m=2, local_lipschitz=local)


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------

class SpecError(ValueError):
    """A curve or surface fails a required sampled condition."""


@dataclass(frozen=True, eq=False)
class CurveSpec:
    """Graph ``t -> (t, gamma(t))`` over ``interval`` with bi-Lipschitz slope.

    On construction the slope bound ``|gamma'| <= 1`` and the two-sided
    bound ``|gamma'(s) - gamma'(t)| / |s - t| in [1/Lambda, Lambda]`` are
    checked on a sample grid. ``Lambda`` is computed when not given.
    ``rotation`` records the angle by which the original curve was turned
    to make it a graph.
    """

    gamma: Callable = field(repr=False)
    dgamma: Callable = field(repr=False)
    interval: tuple[float, float] = (-1.0, 1.0)
    Lambda: float | None = None
    concavity: int = 0
    rotation: float = 0.0
    name: str = "curve"
    samples: int = 2049

    def __post_init__(self):
        L1, L2 = map(float, self.interval)
        if not L1 < L2:
            raise SpecError(f"interval must have L1 < L2, got {self.interval}")
        object.__setattr__(self, "interval", (L1, L2))
        t = np.linspace(L1, L2, self.samples)
        dg = np.asarray(self.dgamma(t), float)
        g = np.asarray(self.gamma(t), float)
        if not (np.all(np.isfinite(dg)) and np.all(np.isfinite(g))):
            raise SpecError("gamma or its derivative is not finite on the interval")
        i = int(np.argmax(np.abs(dg)))
        if abs(dg[i]) > 1 + 1e-9:
            raise SpecError(f"|gamma'({t[i]:.6g})| = {abs(dg[i]):.6g} exceeds 1")
        q = np.diff(dg) / np.diff(t)
        if np.any(q > 0) and np.any(q < 0):
            j = int(np.flatnonzero(np.sign(q) != np.sign(q[0]))[0])
            raise SpecError(f"gamma' is not monotone near t = {t[j]:.6g}")
        aq = np.abs(q)
        lo_q, hi_q = float(aq.min()), float(aq.max())
        if lo_q <= 1e-9:
            j = int(np.argmin(aq))
            raise SpecError(f"gamma' is (nearly) constant near t = {t[j]:.6g}; "
                            "the lower bi-Lipschitz bound fails")
        lam = max(hi_q, 1.0 / lo_q)
        if self.Lambda is not None:
            if lam > self.Lambda * (1 + 1e-6):
                j = int(np.argmax(np.maximum(aq / self.Lambda, 1.0 / (aq * self.Lambda))))
                raise SpecError(f"difference quotient {aq[j]:.6g} of gamma' near t = {t[j]:.6g} "
                                f"violates Lambda = {self.Lambda}")
            lam = float(self.Lambda)
        object.__setattr__(self, "Lambda", lam)
        object.__setattr__(self, "concavity", -1 if q[0] < 0 else 1)

    @property
    def h(self) -> float:
        return 0.5 * (self.interval[1] - self.interval[0])

    def critical_point(self) -> float | None:
        """Root of ``gamma'`` inside the interval (bisection to 1e-12), if any."""
        a, b = self.interval
        fa, fb = float(self.dgamma(a)), float(self.dgamma(b))
        if fa == 0:
            return a
        if fb == 0:
            return b
        if fa * fb > 0:
            return None
        for _ in range(200):
            m = 0.5 * (a + b)
            fm = float(self.dgamma(m))
            if fm == 0 or b - a < 1e-12:
                return m
            if fa * fm < 0:
                b = m
            else:
                a, fa = m, fm
        return 0.5 * (a + b)

    def window_extrema(self, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exact min and max of gamma over ``[lo, hi] ∩ interval`` (NaN if empty)."""
        L1, L2 = self.interval
        a = np.maximum(lo, L1)
        b = np.minimum(hi, L2)
        ok = a <= b
        ga = self.gamma(np.where(ok, a, L1))
        gb = self.gamma(np.where(ok, b, L1))
        mn, mx = np.minimum(ga, gb), np.maximum(ga, gb)
        tc = self.critical_point()
        if tc is not None:
            inside = ok & (a <= tc) & (tc <= b)
            gc = float(self.gamma(tc))
            mn = np.where(inside, np.minimum(mn, gc), mn)
            mx = np.where(inside, np.maximum(mx, gc), mx)
        return np.where(ok, mn, np.nan), np.where(ok, mx, np.nan)

    def sample(self, spacing: float) -> np.ndarray:
        """Points on the graph whose arc-length spacing is at most ``spacing``."""
        L1, L2 = self.interval
        n = int(math.ceil((L2 - L1) / (spacing / math.sqrt(2)))) + 1
        t = np.linspace(L1, L2, n)
        return np.stack([t, self.gamma(t)], axis=1)

    def to_json(self) -> dict:
        return {"name": self.name, "interval": list(self.interval), "Lambda": self.Lambda,
                "concavity": self.concavity, "rotation": self.rotation}

    @classmethod
    def parabola(cls, c: float = 1.0, interval: tuple[float, float] = (-1.0, 1.0)) -> "CurveSpec":
        """``gamma(t) = -c t**2 / 2``; concave down."""
        return cls(lambda t: -0.5 * c * np.asarray(t, float) ** 2,
                   lambda t: -c * np.asarray(t, float), interval, name=f"parabola(c={c})")


def curve_family(c: CurveSpec) -> ProjectionFamily:
    """``lambda -> a2 + gamma(lambda - a1)`` on ``Omega = [0, h]^2``, ``A = [L1 + h, L2]``."""
    L1, L2 = c.interval
    h = c.h

    def f(lam, a):
        t = lam - a[..., 0]
        ok = (t >= L1 - 1e-12) & (t <= L2 + 1e-12)
        return np.where(ok, a[..., 1] + c.gamma(np.clip(t, L1, L2)), np.nan)

    return ProjectionFamily(
        name="curve", dim=2, param_dim=1,
        param_domain={"type": "interval", "lo": L1 + h, "hi": L2, "curve": c.to_json()},
        codomain="line", omega=_box((0.0, 0.0), (h, h)), lipschitz=math.sqrt(2.0),
        param_measure=L2 - (L1 + h), _map=f, _from_unit=lambda u: L1 + h + (L2 - L1 - h) * u,
        _contains=lambda a: (a >= L1 + h - 1e-12) & (a <= L2 + 1e-12),
        lebesgue_range=(L1, L2 + h), admissible_x=lambda lam: (lam - L2, lam - L1))


def straight_line_family(slope: float = 0.0, box=((0, 0), (1, 1))) -> ProjectionFamily:
    """``lambda -> a2 + slope * (lambda - a1)``: the non-transversal comparison case."""
    def f(lam, a):
        return a[..., 1] + slope * (lam - a[..., 0])

    return ProjectionFamily(
        name="line", dim=2, param_dim=1, param_domain={"type": "interval", "lo": 0.0, "hi": 1.0,
                                                        "slope": slope},
        codomain="line", omega=_box(*box), lipschitz=math.hypot(1.0, slope), param_measure=1.0,
        _map=f, _from_unit=lambda u: u, _contains=lambda a: (a >= 0) & (a <= 1))


def curve_intersection(c: CurveSpec, a: Sequence[float], b: Sequence[float], tol: float = 1e-10) -> float | None:
    """First coordinate of the point where ``a + Gamma`` and ``b + Gamma`` cross.

    ``t -> a2 - b2 + gamma(t - a1) - gamma(t - b1)`` is strictly monotone
    because gamma' is, so bisection finds the unique root when it exists.
    """
    L1, L2 = c.interval
    lo, hi = max(a[0], b[0]) + L1, min(a[0], b[0]) + L2
    if lo > hi:
        return None

    def g(t):
        return a[1] - b[1] + float(c.gamma(t - a[0])) - float(c.gamma(t - b[0]))

    ga, gb = g(lo), g(hi)
    if ga == 0:
        return lo
    if gb == 0:
        return hi
    if ga * gb > 0:
        return None
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0:
            return mid
        if ga * gm < 0:
            hi = mid
        else:
            lo, ga = mid, gm
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class CurvePiece:
    """Parametric piece ``t -> (x(t), y(t))`` for ``t`` in ``[t0, t1]``."""

    x: Callable
    y: Callable
    dx: Callable
    dy: Callable
    t0: float
    t1: float


def _bisect_roots(f: Callable, t0: float, t1: float, grid: int = 4097, tol: float = 1e-13) -> list[float]:
    t = np.linspace(t0, t1, grid)
    v = f(t)
    roots = []
    for i in np.flatnonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0):
        a, b = t[i], t[i + 1]
        fa = f(np.array(a))
        while b - a > tol:
            m = 0.5 * (a + b)
            fm = f(np.array(m))
            if fa * fm <= 0:
                b = m
            else:
                a, fa = m, fm
        roots.append(0.5 * (a + b))
    return roots


def _invert_monotone(fx: Callable, t0: float, t1: float, u: np.ndarray, iters: int = 80) -> np.ndarray:
    increasing = fx(np.array(t1)) > fx(np.array(t0))
    lo = np.full(np.shape(u), t0, float)
    hi = np.full(np.shape(u), t1, float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = (fx(mid) < u) == increasing
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def decompose_curve(pieces: Sequence[CurvePiece], samples: int = 2049) -> list[CurveSpec]:
    """Split pieces at slope +-1 points and turn each part into a graph.

    Parts steeper than 45 degrees are rotated by ``-pi/2`` (``(x, y) ->
    (y, -x)``) and carry ``rotation = -pi/2``. Each part is re-parametrised
    by its horizontal coordinate and validated as a :class:`CurveSpec`.
    """
    out: list[CurveSpec] = []
    for p in pieces:
        q = lambda t: np.abs(p.dy(t)) - np.abs(p.dx(t))
        cuts = [p.t0, *_bisect_roots(q, p.t0, p.t1), p.t1]
        for a, b in zip(cuts[:-1], cuts[1:]):
            mid = 0.5 * (a + b)
            steep = abs(p.dy(mid)) > abs(p.dx(mid))
            if steep:
                X, Y, DX, DY, rot = p.y, (lambda t: -p.x(t)), p.dy, (lambda t: -p.dx(t)), -math.pi / 2
            else:
                X, Y, DX, DY, rot = p.x, p.y, p.dx, p.dy, 0.0
            xa, xb = float(X(np.array(a))), float(X(np.array(b)))
            lo, hi = min(xa, xb), max(xa, xb)

            def gamma(u, X=X, Y=Y, a=a, b=b):
                return Y(_invert_monotone(X, a, b, np.asarray(u, float)))

            def dgamma(u, X=X, DX=DX, DY=DY, a=a, b=b):
                t = _invert_monotone(X, a, b, np.asarray(u, float))
                return DY(t) / DX(t)

            out.append(CurveSpec(gamma, dgamma, (lo, hi), rotation=rot, name="piece", samples=samples))
    return out


# ---------------------------------------------------------------------------
# Surfaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SurfaceSpec:
    """Even, convex profile ``f`` on ``[-L, L]``; ``gamma(s) = kappa * f(|s|)``.

    ``kappa`` rescales so that ``|grad gamma| <= 1`` on the disk of radius L.
    """

    f: Callable = field(repr=False)
    L: float = 1.0
    df: Callable | None = field(default=None, repr=False)
    name: str = "surface"
    samples: int = 1025

    def __post_init__(self):
        if not self.L > 0:
            raise SpecError("L must be positive")
        x = np.linspace(-self.L, self.L, self.samples)
        fx = np.asarray(self.f(x), float)
        if not np.allclose(fx, fx[::-1], rtol=1e-9, atol=1e-12):
            raise SpecError("profile f is not even")
        hstep = x[1] - x[0]
        f2 = (fx[2:] - 2 * fx[1:-1] + fx[:-2]) / hstep ** 2
        if np.any(f2 <= 0):
            i = int(np.argmin(f2))
            raise SpecError(f"f'' = {f2[i]:.3g} <= 0 near x = {x[i + 1]:.6g}")
        fp = self.df if self.df is not None else (lambda t: (np.asarray(self.f(t + 1e-6)) - np.asarray(self.f(t - 1e-6))) / 2e-6)
        object.__setattr__(self, "_fp", fp)
        slope = float(np.max(np.abs(fp(np.linspace(0, self.L, self.samples)))))
        object.__setattr__(self, "kappa", 1.0 if slope <= 1 else 1.0 / slope)
        # d^2 gamma / dx^2 on a sample grid of the disk
        g = np.linspace(-self.L, self.L, 65)
        X, Y = np.meshgrid(g, g, indexing="ij")
        R = np.hypot(X, Y)
        inside = (R <= self.L) & (R > 0)
        e = 1e-4 * self.L
        gxx = (self.gamma(np.stack([X + e, Y], -1)) - 2 * self.gamma(np.stack([X, Y], -1))
               + self.gamma(np.stack([X - e, Y], -1))) / e ** 2
        if np.any(gxx[inside] <= 0):
            raise SpecError("d^2 gamma / dx^2 is not positive on the disk")

    def gamma(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, float)
        return self.kappa * np.asarray(self.f(np.linalg.norm(s, axis=-1)), float)

    def profile(self, r: np.ndarray) -> np.ndarray:
        """``kappa * f(r)`` for radii ``r >= 0``."""
        return self.kappa * np.asarray(self.f(np.asarray(r, float)), float)

    def to_json(self) -> dict:
        return {"name": self.name, "L": self.L, "kappa": self.kappa}

    @classmethod
    def paraboloid(cls, L: float = 1.0) -> "SurfaceSpec":
        return cls(lambda x: 0.5 * np.asarray(x, float) ** 2, L, df=lambda x: np.asarray(x, float),
                   name="paraboloid")


def surface_family(s: SurfaceSpec) -> ProjectionFamily:
    """``alpha -> a3 + gamma(alpha - (a1, a2))`` for ``alpha`` in the disk of radius ``L/3``."""
    rA = s.L / 3.0

    def f(alpha, a):
        d = alpha - a[..., :2]
        ok = np.linalg.norm(d, axis=-1) <= s.L * (1 + 1e-12)
        return np.where(ok, a[..., 2] + s.gamma(d), np.nan)

    def from_unit(u):
        r = rA * np.sqrt(u[..., 0])
        th = TWO_PI * u[..., 1]
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)

    return ProjectionFamily(
        name="surface", dim=3, param_dim=2,
        param_domain={"type": "disk", "center": [0.0, 0.0], "radius": rA, "surface": s.to_json()},
        codomain="line", omega={"type": "ball", "center": [0.0, 0.0, 0.0], "radius": rA},
        lipschitz=math.sqrt(2.0), param_measure=math.pi * rA ** 2, _map=f, _from_unit=from_unit,
        _contains=lambda a: np.linalg.norm(a, axis=-1) <= rA * (1 + 1e-12))


def family_from_json(d: dict) -> ProjectionFamily:
    """Build a family from a config descriptor ``{type: ..., params...}``."""
    kind = d["type"]
    if kind == "orthogonal":
        return orthogonal_family()
    if kind == "curve":
        return curve_family(curve_from_json(d.get("curve", {"name": "parabola"})))
    if kind == "surface":
        return surface_family(SurfaceSpec.paraboloid(float(d.get("L", 1.0))))
    if kind == "radial":
        box = d.get("visible_box", [[0, 0], [1, 1]])
        return radial_family(vantage_from_json(d["vantage"]), (box[0], box[1]))
    if kind == "line":
        return straight_line_family(float(d.get("slope", 0.0)))
    raise ValueError(f"unknown family type {kind!r}")


def curve_from_json(d: dict) -> CurveSpec:
    name = d.get("name", "parabola")
    if name == "parabola":
        return CurveSpec.parabola(float(d.get("c", 1.0)), tuple(d.get("interval", (-1.0, 1.0))))
    raise ValueError(f"unknown curve {name!r}")


# ---------------------------------------------------------------------------
# Transversality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransversalityReport:
    family: str
    s: float
    m: int
    deltas: list
    worst_ratio: float
    worst_pair: dict
    worst_by_delta: list
    psi_mean: list
    psi_min: list
    psi_max: list
    standard_error: list
    pair_count: int
    psi_samples: int
    seed: int

    @property
    def decade_growth(self) -> float:
        """Growth factor of the worst ratio per decade of delta."""
        return _decade_growth(self.deltas, self.worst_by_delta)

    @property
    def ratio_at_smallest_delta(self) -> float:
        return self.worst_by_delta[int(np.argmin(self.deltas))]

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["decade_growth"] = self.decade_growth
        return out


def _decade_growth(deltas, values) -> float:
    d = np.asarray(deltas, float)
    v = np.asarray(values, float)
    i, j = int(np.argmin(d)), int(np.argmax(d))
    decades = math.log10(d[j] / d[i])
    if decades <= 0:
        return 1.0
    if v[j] <= 0:
        return math.inf if v[i] > 0 else 1.0
    return float((v[i] / v[j]) ** (1.0 / decades))


def transversality_estimate(fam: ProjectionFamily, s: float, deltas: Sequence[float], pairs: int,
                            psi_samples: int, seed: int, block: int | None = None) -> TransversalityReport:
    """Sampled version of ``psi{alpha : |pi(x) - pi(y)| <= delta |x - y|}``.

    Pairs are drawn uniformly from the family's domain. For each pair the
    psi-measure is estimated with stratified parameters, and the ratio to
    ``delta**m * |x - y|**(m - s)`` is recorded. Pairs are processed in
    blocks, each with its own random stream keyed by the block index.
    """
    deltas = [float(d) for d in deltas]
    if not deltas or any(not 0 < d <= 1 for d in deltas):
        raise ValueError("deltas must lie in (0, 1]")
    if pairs < 1 or psi_samples < 1:
        raise ValueError("pairs and psi_samples must be >= 1")
    dl = np.asarray(deltas)
    if block is None:
        block = max(1, min(pairs, 2_000_000 // psi_samples))
    nblocks = (pairs + block - 1) // block
    psi_all = np.empty((pairs, len(dl)))
    xs = np.empty((pairs, fam.dim))
    ys = np.empty((pairs, fam.dim))
    for b in range(nblocks):
        rng = stream(seed, 0x7A, b)
        n = min(block, pairs - b * block)
        x = fam.sample_omega(rng, n)
        y = fam.sample_omega(rng, n)
        alpha = fam.sample_params(rng, psi_samples)
        a_b = alpha[None, :] if fam.param_dim == 1 else alpha[None, :, :]
        shape = (slice(None), None, slice(None))
        try:
            u = fam.map(a_b, x[shape])
            v = fam.map(a_b, y[shape])
        except Exception as exc:  # map failures carry the family name
            raise RuntimeError(f"{fam.name} map failed during transversality sampling: {exc}") from exc
        gap = fam.gap(u, v)
        if np.isnan(gap).any():
            raise RuntimeError(f"{fam.name} map undefined for a sampled pair")
        dist = np.linalg.norm(x - y, axis=1)
        hit = gap[:, :, None] <= dl[None, None, :] * dist[:, None, None]
        sl = slice(b * block, b * block + n)
        psi_all[sl] = hit.mean(axis=1)
        xs[sl], ys[sl] = x, y
    dist = np.linalg.norm(xs - ys, axis=1)
    m = fam.m
    ratio = psi_all / (dl[None, :] ** m * dist[:, None] ** (m - s))
    i, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    pm = psi_all.mean(axis=0)
    return TransversalityReport(
        family=fam.name, s=float(s), m=m, deltas=deltas, worst_ratio=float(ratio[i, j]),
        worst_pair={"x": xs[i].tolist(), "y": ys[i].tolist(), "delta": deltas[j]},
        worst_by_delta=ratio.max(axis=0).tolist(), psi_mean=pm.tolist(),
        psi_min=psi_all.min(axis=0).tolist(), psi_max=psi_all.max(axis=0).tolist(),
        standard_error=np.sqrt(pm * (1 - pm) / psi_samples).tolist(), pair_count=int(pairs),
        psi_samples=int(psi_samples), seed=int(seed))


def pair_psi(fam: ProjectionFamily, x, y, delta: float, psi_samples: int, seed: int) -> float:
    """Stratified estimate of the psi-measure of the delta-bad set of one pair."""
    rng = stream(seed, 0x7B)
    alpha = fam.sample_params(rng, psi_samples)
    x, y = np.asarray(x, float), np.asarray(y, float)
    gap = fam.gap(fam.map(alpha, x), fam.map(alpha, y))
    return float(np.mean(gap <= delta * np.linalg.norm(x - y)))


# ---------------------------------------------------------------------------
# Tube condition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TubeReport:
    deltas: list
    max_ratio: list
    worst_ratio: float
    n: int
    lines: int
    seed: int
    growth_threshold: float

    @property
    def decade_growth(self) -> float:
        return _decade_growth(self.deltas, self.max_ratio)

    @property
    def fails(self) -> bool:
        return self.decade_growth >= self.growth_threshold

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["decade_growth"] = self.decade_growth
        out["fails"] = self.fails
        return out


def _tube_fraction(vantage, p: np.ndarray, d: np.ndarray, delta: float,
                   rng: np.random.Generator | None = None, mc: int = 200_000) -> np.ndarray:
    """psi-measure of the vantage points within ``delta`` of lines ``p + t d``."""
    if isinstance(vantage, Circle):
        nrm = np.stack([-d[:, 1], d[:, 0]], axis=1)
        off = nrm @ np.asarray(vantage.center, float) - np.sum(nrm * p, axis=1)
        R = vantage.radius
        lo = np.clip((-delta - off) / R, -1.0, 1.0)
        hi = np.clip((delta - off) / R, -1.0, 1.0)
        # measure of {phi : cos(phi) in [lo, hi]} over the full circle
        return 2.0 * (np.arccos(lo) - np.arccos(hi)) / TWO_PI
    if isinstance(vantage, Segment) and vantage.dim == 2:
        nrm = np.stack([-d[:, 1], d[:, 0]], axis=1)
        P, Q = np.asarray(vantage.start, float), np.asarray(vantage.end, float)
        f0 = nrm @ P - np.sum(nrm * p, axis=1)
        f1 = nrm @ Q - np.sum(nrm * p, axis=1)
        slope = f1 - f0
        flat = np.abs(slope) < 1e-15
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (-delta - f0) / slope
            tb = (delta - f0) / slope
        lo = np.clip(np.minimum(ta, tb), 0.0, 1.0)
        hi = np.clip(np.maximum(ta, tb), 0.0, 1.0)
        out = np.where(flat, (np.abs(f0) <= delta).astype(float), hi - lo)
        return out
    if isinstance(vantage, Sphere):
        u = rng.random((mc, 2))
        pts = vantage.point(u)
        out = np.empty(len(p))
        for i in range(len(p)):
            w = pts - p[i]
            perp = w - (w @ d[i])[:, None] * d[i]
            out[i] = np.mean(np.linalg.norm(perp, axis=1) <= delta)
        return out
    raise TypeError(f"unsupported vantage {vantage!r}")


def tube_condition_check(vantage, visible_box, deltas: Sequence[float], lines: int, seed: int,
                         growth_threshold: float = 3.0) -> TubeReport:
    """Largest sampled ``psi(T_delta) / delta**(n - 1)`` over random lines.

    Lines pass through two uniform points of ``visible_box`` (degenerate
    boxes, such as a segment, are allowed). ``fails`` is set when the worst
    ratio grows by at least ``growth_threshold`` per decade of delta.
    """
    if lines < 1:
        raise ValueError("lines must be >= 1")
    deltas = [float(x) for x in deltas]
    if not deltas or any(x <= 0 for x in deltas):
        raise ValueError("deltas must be positive")
    lo, hi = np.asarray(visible_box[0], float), np.asarray(visible_box[1], float)
    n = lo.shape[0]
    rng = stream(seed, 0x7C)
    p = np.empty((lines, n))
    d = np.empty((lines, n))
    filled = 0
    while filled < lines:
        a = lo + rng.random((lines, n)) * (hi - lo)
        b = lo + rng.random((lines, n)) * (hi - lo)
        dv = b - a
        ln = np.linalg.norm(dv, axis=1)
        ok = ln > 1e-12 * max(1.0, float(np.linalg.norm(hi - lo)))
        take = min(int(ok.sum()), lines - filled)
        if take == 0 and not ok.any() and np.allclose(lo, hi):
            raise ValueError("visible box is a single point; no line is determined")
        p[filled:filled + take] = a[ok][:take]
        d[filled:filled + take] = (dv[ok] / ln[ok][:, None])[:take]
        filled += take
    mc_rng = stream(seed, 0x7D)
    ratios = []
    for delta in deltas:
        frac = _tube_fraction(vantage, p, d, delta, mc_rng)
        ratios.append(float(np.max(frac)) / delta ** (n - 1))
    return TubeReport(deltas, ratios, float(max(ratios)), n, int(lines), int(seed), float(growth_threshold))
