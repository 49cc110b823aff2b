"""Generations of self-similar sets as cell sets.

Maps are ``x -> ratio * x + offset`` with ``1/ratio`` an integer and every
offset a multiple of ``ratio``, so cell corners stay on an integer lattice
and coincidences between corners are exact.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .geometry import CellSet

DEFAULT_CELL_CAP = 4 ** 8


class ResourceLimitError(RuntimeError):
    """A construction would exceed the configured size cap."""


def _fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    f = Fraction(x).limit_denominator(10 ** 9)
    if abs(float(f) - float(x)) > 1e-15:
        raise ValueError(f"cannot represent {x!r} as a rational")
    return f


@dataclass(frozen=True)
class SimilarityIFS:
    """Homogeneous similarity IFS on the unit cube."""

    ratio: Fraction
    offsets: tuple[tuple[Fraction, ...], ...]
    dim: int = 2

    def __post_init__(self):
        ratio = _fraction(self.ratio)
        object.__setattr__(self, "ratio", ratio)
        if not (0 < ratio <= Fraction(1, 2)):
            raise ValueError(f"ratio must lie in (0, 1/2], got {ratio}")
        if ratio.numerator != 1:
            raise ValueError(f"1/ratio must be an integer, got ratio {ratio}")
        offs = tuple(tuple(_fraction(c) for c in o) for o in self.offsets)
        if not offs:
            raise ValueError("an IFS needs at least one map")
        for o in offs:
            if len(o) != self.dim:
                raise ValueError(f"offset {o} does not have dimension {self.dim}")
            for c in o:
                if not (0 <= c <= 1 - ratio):
                    raise ValueError(f"offset {o} leaves the unit cube")
                if (c / ratio).denominator != 1:
                    raise ValueError(f"offset {o} is not a multiple of the ratio")
        if len(set(offs)) != len(offs):
            raise ValueError("duplicate offsets")
        for a, b in itertools.combinations(offs, 2):
            # images [o, o + ratio]^dim may only touch on the boundary
            if all(abs(x - y) < ratio for x, y in zip(a, b)):
                raise ValueError(f"images of offsets {a} and {b} overlap")
        object.__setattr__(self, "offsets", offs)

    @property
    def maps(self) -> int:
        return len(self.offsets)

    def lattice_offsets(self) -> np.ndarray:
        return np.array([[int(c / self.ratio) for c in o] for o in self.offsets], dtype=np.int64)

    def similarity_dimension(self) -> float:
        return math.log(self.maps) / math.log(1 / float(self.ratio))

    @classmethod
    def four_corner(cls, ratio: Fraction | str | float = Fraction(1, 4)) -> "SimilarityIFS":
        r = _fraction(ratio)
        far = 1 - r
        return cls(r, ((0, 0), (far, 0), (0, far), (far, far)), 2)


@dataclass(frozen=True)
class GenerationSpec:
    ifs: SimilarityIFS
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"generation index must be >= 0, got {self.n}")


def generate(spec: GenerationSpec, cap: int = DEFAULT_CELL_CAP) -> CellSet:
    """Cells of generation ``n``: ``maps**n`` cubes of side ``ratio**n``."""
    ifs, n = spec.ifs, spec.n
    count = ifs.maps ** n
    if count > cap:
        raise ResourceLimitError(f"generation {n} has {count} cells, above the cap {cap}")
    q = ifs.ratio.denominator
    idx = ifs.lattice_offsets()
    anchors = np.zeros((1, ifs.dim), dtype=np.int64)
    for k in range(n):
        anchors = (anchors[None, :, :] + idx[:, None, :] * q ** k).reshape(-1, ifs.dim)
    return CellSet(ifs.dim, ifs.ratio ** n, anchors)


def four_corner(n: int, ratio: Fraction | str | float = Fraction(1, 4), cap: int = DEFAULT_CELL_CAP) -> CellSet:
    """Generation ``n`` of the four-corner Cantor set (``ratio`` 1/4 by default)."""
    return generate(GenerationSpec(SimilarityIFS.four_corner(ratio), n), cap)


def linear_cantor(ratio: Fraction | str | float, n: int, cap: int = DEFAULT_CELL_CAP) -> CellSet:
    """Two-map Cantor set on ``[0, 1] x {0}``, stored as flat cells.

    Dimension ``log 2 / log(1/ratio)``.
    """
    r = _fraction(ratio)
    if not (0 < r < Fraction(1, 2)):
        raise ValueError(f"ratio must lie in (0, 1/2), got {r}")
    if n < 0:
        raise ValueError(f"generation index must be >= 0, got {n}")
    if r.numerator != 1:
        raise ValueError(f"1/ratio must be an integer, got ratio {r}")
    if 2 ** n > cap:
        raise ResourceLimitError(f"generation {n} has {2 ** n} cells, above the cap {cap}")
    q = r.denominator
    xs = np.zeros(1, dtype=np.int64)
    for k in range(n):
        xs = np.concatenate([xs, xs + (q - 1) * q ** k])
    anchors = np.stack([np.sort(xs), np.zeros_like(xs)], axis=1)
    return CellSet(2, r ** n, anchors, flat_axes=(1,))


def product_offsets(ratio: Fraction, digits: Sequence[int], dim: int) -> tuple[tuple[Fraction, ...], ...]:
    """Offsets of the product IFS whose 1-D digits are ``digits``."""
    return tuple(tuple(Fraction(d) * ratio for d in combo)
                 for combo in itertools.product(digits, repeat=dim))
