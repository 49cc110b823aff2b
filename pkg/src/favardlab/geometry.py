"""Exact low-level geometry: cell sets, 1-D unions, rasterisation, dilation.

A :class:`CellSet` is a finite union of congruent axis-aligned cells whose
lower corners sit on the integer lattice scaled by ``side``. Cells may be
flat along some axes (zero extent), which is how Cantor sets on a line are
stored. All values are immutable; every function here is pure.
"""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from numba import njit, prange

TWO_PI = 2.0 * math.pi


def _check_finite(*values) -> None:
    for v in values:
        if not math.isfinite(float(v)):
            raise ValueError(f"non-finite value {v!r}")


# ---------------------------------------------------------------------------
# Points and cell sets
# ---------------------------------------------------------------------------

def as_point(coords: Sequence[float]) -> np.ndarray:
    """Validate a 2-D or 3-D point and return it as a float array."""
    p = np.asarray(coords, dtype=float)
    if p.ndim != 1 or p.shape[0] not in (2, 3):
        raise ValueError(f"points must have 2 or 3 coordinates, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"point has non-finite coordinates: {p}")
    return p


@dataclass(frozen=True, eq=False)
class CellSet:
    """Union of congruent axis-aligned cells on a scaled integer lattice.

    ``anchors[i] * side`` is the lower corner of cell ``i``. Along the axes
    in ``flat_axes`` cells have zero extent, so a Cantor set on the x-axis is
    a ``CellSet`` with ``flat_axes=(1,)``.
    """

    dim: int
    side: Fraction | float
    anchors: np.ndarray
    flat_axes: tuple[int, ...] = ()

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if not float(self.side) > 0 or not math.isfinite(float(self.side)):
            raise ValueError(f"side must be positive and finite, got {self.side}")
        a = np.asarray(self.anchors, dtype=np.int64).reshape(-1, self.dim)
        if len(a) and len(np.unique(a, axis=0)) != len(a):
            raise ValueError("cell anchors must be pairwise distinct")
        a.setflags(write=False)
        object.__setattr__(self, "anchors", a)
        flat = tuple(sorted(set(int(k) for k in self.flat_axes)))
        if any(k < 0 or k >= self.dim for k in flat):
            raise ValueError(f"flat axes {flat} out of range for dim {self.dim}")
        object.__setattr__(self, "flat_axes", flat)

    @classmethod
    def empty(cls, dim: int = 2, side: Fraction | float = 1) -> "CellSet":
        return cls(dim, side, np.zeros((0, dim), dtype=np.int64))

    @property
    def h(self) -> float:
        """Cell side as a float."""
        return float(self.side)

    @property
    def count(self) -> int:
        return int(self.anchors.shape[0])

    def __len__(self) -> int:
        return self.count

    @property
    def extent(self) -> np.ndarray:
        """Per-axis cell extent (``side`` or 0 on flat axes)."""
        e = np.full(self.dim, self.h)
        e[list(self.flat_axes)] = 0.0
        return e

    def measure(self) -> float:
        """Lebesgue measure of the union (cells never overlap in interior)."""
        return float(self.count * np.prod(self.extent))

    def lower(self) -> np.ndarray:
        return self.anchors * self.h

    def upper(self) -> np.ndarray:
        return self.lower() + self.extent

    def centers(self) -> np.ndarray:
        return self.lower() + 0.5 * self.extent

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if self.count == 0:
            raise ValueError("empty cell set has no bounding box")
        return self.lower().min(axis=0), self.upper().max(axis=0)

    def exact_corners(self) -> list[tuple[Fraction, ...]]:
        """Lower corners in exact rational arithmetic."""
        side = Fraction(self.side)
        return [tuple(side * int(v) for v in row) for row in self.anchors]

    def scaled(self, factor: Fraction | float) -> "CellSet":
        """Image under ``x -> factor * x`` (``factor > 0``)."""
        side = self.side * factor if isinstance(factor, Fraction) else float(self.side) * factor
        return CellSet(self.dim, side, self.anchors, self.flat_axes)

    def corners(self) -> np.ndarray:
        """All ``2**k`` corners of every cell, shape ``(count, 2**k, dim)``."""
        free = [k for k in range(self.dim) if k not in self.flat_axes]
        bits = np.array(np.meshgrid(*[[0.0, 1.0]] * len(free), indexing="ij")).reshape(len(free), -1).T
        offs = np.zeros((bits.shape[0], self.dim))
        offs[:, free] = bits * self.h
        return self.lower()[:, None, :] + offs[None, :, :]

    def boundary_samples(self, spacing: float) -> tuple[np.ndarray, float]:
        """Points on every cell boundary at spacing at most ``spacing``.

        Returns ``(points, h)`` with points of shape ``(count, S, dim)`` and
        ``h`` the actual sample spacing; every boundary point lies within
        ``h * sqrt(dim - 1) / 2`` of some sample.
        """
        k = max(1, int(math.ceil(self.h / spacing - 1e-12)))
        h = self.h / k
        free = [a for a in range(self.dim) if a not in self.flat_axes]
        t = np.linspace(0.0, 1.0, k + 1)
        if len(free) == 0:
            local = np.zeros((1, 0))
        elif len(free) == 1:
            local = t[:, None]
        else:
            faces = []
            for fixed in range(len(free)):
                others = [f for f in range(len(free)) if f != fixed]
                grids = np.meshgrid(*([t] * len(others)), indexing="ij")
                flat = np.stack([g.ravel() for g in grids], axis=1)
                for val in (0.0, 1.0):
                    face = np.empty((flat.shape[0], len(free)))
                    face[:, others] = flat
                    face[:, fixed] = val
                    faces.append(face)
            local = np.unique(np.concatenate(faces), axis=0)
        offs = np.zeros((local.shape[0], self.dim))
        offs[:, free] = local * self.h
        return self.lower()[:, None, :] + offs[None, :, :], h

    def to_json(self) -> dict:
        out = {"dim": self.dim, "side": self.h, "anchors": self.lower().tolist()}
        if isinstance(self.side, Fraction):
            out["side_exact"] = str(self.side)
        if self.flat_axes:
            out["flat_axes"] = list(self.flat_axes)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "CellSet":
        side = Fraction(data["side_exact"]) if "side_exact" in data else float(data["side"])
        corners = np.asarray(data["anchors"], dtype=float).reshape(-1, data["dim"])
        idx = np.rint(corners / float(side))
        if not np.allclose(idx * float(side), corners, rtol=0, atol=1e-9 * max(1.0, float(side))):
            raise ValueError("anchors are not integer multiples of side")
        return cls(int(data["dim"]), side, idx.astype(np.int64), tuple(data.get("flat_axes", ())))

    def dumps(self) -> str:
        return json.dumps(self.to_json())


# ---------------------------------------------------------------------------
# 1-D unions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntervalUnion:
    """Canonical disjoint union of closed intervals on the line.

    Intervals are sorted, and intervals that overlap or touch are merged, so
    two unions covering the same set compare equal. Endpoints may be floats
    or :class:`~fractions.Fraction` values.
    """

    intervals: tuple[tuple, ...] = ()

    @classmethod
    def from_intervals(cls, items: Iterable[tuple]) -> "IntervalUnion":
        ivs = sorted((lo, hi) for lo, hi in items)
        for lo, hi in ivs:
            _check_finite(lo, hi)
            if lo > hi:
                raise ValueError(f"interval [{lo}, {hi}] has lo > hi")
        merged: list[list] = []
        for lo, hi in ivs:
            if merged and lo <= merged[-1][1]:
                if hi > merged[-1][1]:
                    merged[-1][1] = hi
            else:
                merged.append([lo, hi])
        return cls(tuple((a, b) for a, b in merged))

    @property
    def measure(self):
        return sum((hi - lo for lo, hi in self.intervals), 0)

    def __len__(self) -> int:
        return len(self.intervals)

    def insert(self, lo, hi) -> "IntervalUnion":
        _check_finite(lo, hi)
        if lo > hi:
            raise ValueError(f"interval [{lo}, {hi}] has lo > hi")
        ivs = list(self.intervals)
        # first interval whose hi >= lo, last whose lo <= hi
        i = bisect.bisect_left([b for _, b in ivs], lo)
        j = bisect.bisect_right([a for a, _ in ivs], hi)
        if i < j:
            lo = min(lo, ivs[i][0])
            hi = max(hi, ivs[j - 1][1])
        return IntervalUnion(tuple(ivs[:i]) + ((lo, hi),) + tuple(ivs[j:]))

    def contains(self, x) -> bool:
        i = bisect.bisect_right([a for a, _ in self.intervals], x) - 1
        return i >= 0 and x <= self.intervals[i][1]


def union_insert(u: IntervalUnion, iv: tuple) -> IntervalUnion:
    """Insert ``iv = (lo, hi)`` into ``u`` and return the canonical result."""
    return u.insert(iv[0], iv[1])


@dataclass(frozen=True)
class ArcUnion:
    """Disjoint union of arcs of the unit circle, stored on ``[0, 2*pi]``.

    An arc that crosses angle 0 is kept as two pieces.
    """

    arcs: tuple[tuple[float, float], ...] = ()

    @classmethod
    def from_arcs(cls, starts: Sequence[float], lengths: Sequence[float]) -> "ArcUnion":
        lo, hi = _arc_pieces(np.asarray(starts, float), np.asarray(lengths, float))
        u = IntervalUnion.from_intervals(zip(lo.tolist(), hi.tolist()))
        return cls(u.intervals)

    @property
    def measure(self) -> float:
        return min(TWO_PI, sum(b - a for a, b in self.arcs))


def _arc_pieces(starts: np.ndarray, lengths: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if np.any(lengths < 0) or not np.all(np.isfinite(starts)):
        raise ValueError("arcs need finite starts and non-negative lengths")
    lengths = np.minimum(lengths, TWO_PI)
    s = np.mod(starts, TWO_PI)
    e = s + lengths
    wrap = e > TWO_PI
    lo = np.concatenate([s, np.zeros(wrap.sum())])
    hi = np.concatenate([np.minimum(e, TWO_PI), e[wrap] - TWO_PI])
    return lo, hi


def merged_measure(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Measure of the union of intervals ``[lo, hi]`` along the last axis.

    Vectorised over leading axes. Each interval contributes the part that
    sticks out past the running maximum of previous right endpoints.
    """
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    if lo.shape[-1] == 0:
        return np.zeros(lo.shape[:-1])
    order = np.argsort(lo, axis=-1, kind="stable")
    lo_s = np.take_along_axis(lo, order, axis=-1)
    hi_s = np.take_along_axis(hi, order, axis=-1)
    reach = np.maximum.accumulate(hi_s, axis=-1)
    prev = np.concatenate([np.full(lo_s.shape[:-1] + (1,), -np.inf), reach[..., :-1]], axis=-1)
    return np.sum(np.maximum(0.0, hi_s - np.maximum(lo_s, prev)), axis=-1)


def merged_intervals(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sorted, merged version of a 1-D batch of intervals."""
    if len(lo) == 0:
        return np.zeros(0), np.zeros(0)
    order = np.argsort(lo, kind="stable")
    lo_s, hi_s = lo[order], hi[order]
    reach = np.maximum.accumulate(hi_s)
    starts = np.ones(len(lo_s), bool)
    starts[1:] = lo_s[1:] > reach[:-1]
    idx = np.flatnonzero(starts)
    ends = np.append(idx[1:] - 1, len(lo_s) - 1)
    return lo_s[idx], reach[ends]


def arc_union_measure(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Measure of a union of arcs ``[lo, hi]`` (angles, ``hi - lo <= 2 pi``).

    Vectorised over leading axes; wrap-around arcs are split in two.
    """
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    length = np.clip(hi - lo, 0.0, TWO_PI)
    s = np.mod(lo, TWO_PI)
    e = s + length
    over = np.maximum(e - TWO_PI, 0.0)
    l1, h1 = s, np.minimum(e, TWO_PI)
    l2, h2 = np.zeros_like(s), over
    total = merged_measure(np.concatenate([l1, l2], axis=-1), np.concatenate([h1, h2], axis=-1))
    return np.minimum(total, TWO_PI)


# ---------------------------------------------------------------------------
# Dilation
# ---------------------------------------------------------------------------

def refine_side(side: Fraction | float, target: float) -> tuple[Fraction | float, int]:
    """Halve ``side`` until it is at most ``target``; return ``(side', k)``."""
    k = 0
    s = side
    while float(s) > target * (1 + 1e-12):
        s = s / 2
        k += 1
    return s, k


def _dilation_stencil(ext: Sequence[int], R: float) -> np.ndarray:
    """Fine-cell offsets whose box lies within ``R`` of the box ``[0, ext]``."""
    reach = int(math.ceil(R)) + 1
    axes = [np.arange(-reach, e + reach + 1) for e in ext]
    grids = np.meshgrid(*axes, indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=1)
    d2 = np.zeros(len(offs))
    for k, e in enumerate(ext):
        o = offs[:, k]
        d = np.maximum(0, np.maximum(-o - 1, o - e))
        d2 += d.astype(float) ** 2
    # cells at distance exactly R touch the neighbourhood only on its boundary
    return offs[d2 < R * R * (1 - 1e-12)]


def dilate(cells: CellSet, r: float) -> CellSet:
    """Cell cover of the closed Euclidean ``r``-neighbourhood of ``cells``.

    Output cells have side ``side / 2**k <= r / 4``. A fine cell is kept when
    its box is closer than ``r`` to some input cell, so the result
    covers the true neighbourhood and is contained in its
    ``(r + side' * sqrt(dim))``-neighbourhood.
    """
    if not (r > 0 and math.isfinite(r)):
        raise ValueError(f"dilation radius must be positive and finite, got {r}")
    fine, k = refine_side(cells.side, r / 4)
    if cells.count == 0:
        return CellSet.empty(cells.dim, fine)
    scale = 1 << k
    ext = [0 if a in cells.flat_axes else scale for a in range(cells.dim)]
    stencil = _dilation_stencil(ext, r / float(fine))
    base = cells.anchors * scale
    out = []
    chunk = max(1, 4_000_000 // max(1, len(stencil)))
    for i in range(0, len(base), chunk):
        pts = (base[i:i + chunk, None, :] + stencil[None, :, :]).reshape(-1, cells.dim)
        out.append(np.unique(pts, axis=0))
    anchors = np.unique(np.concatenate(out), axis=0)
    return CellSet(cells.dim, fine, anchors)


# ---------------------------------------------------------------------------
# Rasterisation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Raster:
    """Occupancy grid; pixel ``idx`` has centre ``origin + (idx + 0.5) * pitch``."""

    origin: np.ndarray
    pitch: float
    bitmap: np.ndarray = field(repr=False)

    @property
    def area(self) -> float:
        return float(np.count_nonzero(self.bitmap)) * self.pitch ** self.bitmap.ndim


def _pixel_ranges(cells: CellSet, pitch: float, origin: np.ndarray):
    lo = (cells.lower() - origin) / pitch - 0.5
    hi = (cells.upper() - origin) / pitch - 0.5
    i0 = np.ceil(lo - 1e-9).astype(np.int64)
    i1 = np.floor(hi + 1e-9).astype(np.int64)
    return i0, i1


def _occupied_pixels(cells: CellSet, pitch: float, origin: np.ndarray) -> np.ndarray:
    """Integer pixel indices whose centres lie in the union, shape ``(P, dim)``."""
    i0, i1 = _pixel_ranges(cells, pitch, origin)
    span = np.maximum(i1 - i0 + 1, 0)
    if cells.count == 0 or np.any(span.max(axis=0) == 0):
        return np.zeros((0, cells.dim), dtype=np.int64)
    width = span.max(axis=0)
    grids = np.meshgrid(*[np.arange(w) for w in width], indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=1)
    out = []
    chunk = max(1, 4_000_000 // len(offs))
    for s in range(0, cells.count, chunk):
        pix = i0[s:s + chunk, None, :] + offs[None, :, :]
        ok = np.all(pix <= i1[s:s + chunk, None, :], axis=2)
        out.append(np.unique(pix[ok], axis=0))
    return np.unique(np.concatenate(out), axis=0)


def raster_area(cells: CellSet, pitch: float) -> float:
    """Pixel-centre estimate of the measure of ``cells`` on a grid anchored at 0.

    Exact whenever ``side / pitch`` is an integer and cells sit on the grid.
    """
    if not pitch > 0:
        raise ValueError(f"pitch must be positive, got {pitch}")
    if cells.count and pitch > cells.h * (1 + 1e-12):
        raise ValueError(f"pitch {pitch} exceeds cell side {cells.h}")
    if cells.count == 0 or cells.flat_axes:
        return 0.0
    pix = _occupied_pixels(cells, pitch, np.zeros(cells.dim))
    return float(len(pix)) * pitch ** cells.dim


def rasterize(cells: CellSet, pitch: float, origin: Sequence[float] | None = None,
              shape: Sequence[int] | None = None) -> Raster:
    """Dense occupancy bitmap of ``cells``; intended for small grids and tests."""
    if not pitch > 0:
        raise ValueError(f"pitch must be positive, got {pitch}")
    if origin is None:
        lo, _ = cells.bbox()
        origin = np.floor(lo / pitch) * pitch
    origin = np.asarray(origin, float)
    if shape is None:
        _, hi = cells.bbox()
        shape = np.ceil((hi - origin) / pitch).astype(int) + 1
    bitmap = np.zeros(tuple(int(s) for s in shape), dtype=bool)
    pix = _occupied_pixels(cells, pitch, origin)
    inside = np.all((pix >= 0) & (pix < np.asarray(bitmap.shape)), axis=1)
    pix = pix[inside]
    bitmap[tuple(pix.T)] = True
    return Raster(origin, float(pitch), bitmap)


# ---------------------------------------------------------------------------
# Minkowski sums by column rasterisation
# ---------------------------------------------------------------------------

@njit(parallel=True, cache=True)
def _fill_columns(env_lo, env_hi, group_ptr, iv_lo, iv_hi, row_origin, pitch, n_rows):
    n_cols, n_groups = env_lo.shape
    counts = np.zeros(n_cols, dtype=np.int64)
    for c in prange(n_cols):
        buf = np.zeros(n_rows, dtype=np.uint8)
        for g in range(n_groups):
            m = env_lo[c, g]
            if np.isnan(m):
                continue
            mm = env_hi[c, g]
            for k in range(group_ptr[g], group_ptr[g + 1]):
                a = (iv_lo[k] + m - row_origin) / pitch - 0.5
                b = (iv_hi[k] + mm - row_origin) / pitch - 0.5
                i0 = int(np.ceil(a - 1e-9))
                i1 = int(np.floor(b + 1e-9))
                if i0 < 0:
                    i0 = 0
                if i1 > n_rows - 1:
                    i1 = n_rows - 1
                for i in range(i0, i1 + 1):
                    buf[i] = 1
        total = 0
        for i in range(n_rows):
            total += buf[i]
        counts[c] = total
    return counts


@dataclass(frozen=True)
class _ColumnGroups:
    """Cells bucketed by their footprint in all axes but the last."""

    lower: np.ndarray        # (G, dim-1) lower corner of the footprint
    width: np.ndarray        # (dim-1,) footprint extent
    ptr: np.ndarray          # (G+1,) offsets into iv_lo / iv_hi
    iv_lo: np.ndarray        # merged last-axis intervals per group
    iv_hi: np.ndarray


def column_groups(cells: CellSet) -> _ColumnGroups:
    d = cells.dim
    ext = cells.extent
    keys, inverse = np.unique(cells.anchors[:, :-1], axis=0, return_inverse=True)
    inverse = inverse.ravel()
    z_lo = cells.anchors[:, -1] * cells.h
    z_hi = z_lo + ext[-1]
    order = np.lexsort((z_lo, inverse))
    ptr = [0]
    los, his = [], []
    inv_sorted = inverse[order]
    bounds = np.searchsorted(inv_sorted, np.arange(len(keys) + 1))
    for g in range(len(keys)):
        sel = order[bounds[g]:bounds[g + 1]]
        lo, hi = merged_intervals(z_lo[sel], z_hi[sel])
        los.append(lo)
        his.append(hi)
        ptr.append(ptr[-1] + len(lo))
    return _ColumnGroups(keys * cells.h, ext[:-1].copy(), np.asarray(ptr, np.int64),
                         np.concatenate(los), np.concatenate(his))


class _RangeMinMax:
    """Sparse-table range minimum / maximum over a fixed array."""

    def __init__(self, values: np.ndarray):
        self.mins = [values.astype(float)]
        self.maxs = [values.astype(float)]
        k = 1
        while 2 * k <= len(values):
            a, b = self.mins[-1], self.maxs[-1]
            self.mins.append(np.minimum(a[:-k], a[k:]))
            self.maxs.append(np.maximum(b[:-k], b[k:]))
            k *= 2

    def query(self, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Min and max over ``values[lo:hi]``; NaN where the range is empty."""
        n = hi - lo
        ok = n > 0
        level = np.zeros_like(n)
        level[ok] = np.floor(np.log2(n[ok])).astype(n.dtype)
        out_min = np.full(lo.shape, np.nan)
        out_max = np.full(lo.shape, np.nan)
        for L in np.unique(level[ok]):
            sel = ok & (level == L)
            a = lo[sel]
            b = hi[sel] - (1 << int(L))
            out_min[sel] = np.minimum(self.mins[L][a], self.mins[L][b])
            out_max[sel] = np.maximum(self.maxs[L][a], self.maxs[L][b])
        return out_min, out_max


def column_raster_area(groups: _ColumnGroups, envelope, col_lo: np.ndarray, col_hi: np.ndarray,
                       row_lo: float, row_hi: float, pitch: float, batch: int = 2048) -> float:
    """Pixel-centre area of ``U_g U_k [iv_lo + m, iv_hi + M]`` over columns.

    ``envelope(centres, groups)`` returns ``(m, M)`` arrays of shape
    ``(n_cols, G)`` giving the band that group ``g`` contributes to each
    column (NaN where it contributes nothing). Columns are pixels of the
    first ``dim - 1`` axes, rows are pixels of the last axis.
    """
    col_origin = np.floor(np.asarray(col_lo) / pitch) * pitch
    n_cols = np.ceil((np.asarray(col_hi) - col_origin) / pitch).astype(int) + 1
    row_origin = math.floor(row_lo / pitch) * pitch
    n_rows = int(math.ceil((row_hi - row_origin) / pitch)) + 1
    grids = np.meshgrid(*[np.arange(n) for n in n_cols], indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    total = 0
    for s in range(0, len(idx), batch):
        centres = col_origin + (idx[s:s + batch] + 0.5) * pitch
        m, M = envelope(centres, groups)
        counts = _fill_columns(np.ascontiguousarray(m), np.ascontiguousarray(M), groups.ptr,
                               groups.iv_lo, groups.iv_hi, row_origin, pitch, n_rows)
        total += int(counts.sum())
    return total * pitch ** (len(n_cols) + 1)


def minkowski_sum_raster(cells: CellSet, curve_samples: np.ndarray, pitch: float) -> float:
    """Rasterised area of ``cells + curve`` for a planar curve given by samples.

    The samples should trace a curve that is a graph over the x-axis, ordered
    or not, with spacing at most ``pitch``. A pixel is occupied when its
    centre lies in the sum set; the band a cell sweeps along one pixel
    column is bounded by the lowest and highest sample in the matching
    window of x-offsets.
    """
    pts = np.asarray(curve_samples, float).reshape(-1, 2) if len(curve_samples) else np.zeros((0, 2))
    if len(pts) == 0:
        raise ValueError("curve samples must be non-empty")
    if cells.dim != 2:
        raise ValueError("minkowski_sum_raster works on planar cell sets")
    if not pitch > 0:
        raise ValueError(f"pitch must be positive, got {pitch}")
    if cells.count == 0:
        return 0.0
    order = np.argsort(pts[:, 0], kind="stable")
    xs, ys = pts[order, 0], pts[order, 1]
    rmq = _RangeMinMax(ys)
    groups = column_groups(cells)
    eps = 1e-12 * max(1.0, float(np.abs(xs).max()))

    def envelope(centres, g):
        x0 = g.lower[:, 0][None, :]
        xc = centres[:, 0][:, None]
        t_lo = xc - x0 - g.width[0]
        t_hi = xc - x0
        lo = np.searchsorted(xs, t_lo - eps, side="left")
        hi = np.searchsorted(xs, t_hi + eps, side="right")
        return rmq.query(lo, hi)

    lo, hi = cells.bbox()
    return column_raster_area(groups, envelope, [lo[0] + xs[0]], [hi[0] + xs[-1]],
                              lo[1] + ys.min(), hi[1] + ys.max(), pitch)
