"""Nonlinear projection lengths of fractal sets at desk scale.

Modules:

* ``geometry``: cell sets, interval and arc unions, rasters, dilation.
* ``fractals``: self-similar generations (four-corner set, Cantor sets).
* ``measures``: cell measures, Riesz energies, Frostman checks.
* ``projections``: orthogonal, radial, curve and surface families.
* ``favard``: Favard-type lengths, visibility, Buffon drops.
* ``experiments`` and ``cli``: reproducible experiment runs.
"""
import warnings

warnings.filterwarnings("ignore", message="The TBB threading layer", module="numba")

from .fractals import GenerationSpec, SimilarityIFS, four_corner, generate, linear_cantor  # noqa: E402
from .geometry import ArcUnion, CellSet, IntervalUnion, dilate, raster_area, union_insert  # noqa: E402
from .measures import CellMeasure, equidistributed_measure, riesz_energy  # noqa: E402

__version__ = "0.1.0"

__all__ = ["ArcUnion", "CellMeasure", "CellSet", "GenerationSpec", "IntervalUnion", "SimilarityIFS",
           "dilate", "equidistributed_measure", "four_corner", "generate", "linear_cantor",
           "raster_area", "riesz_energy", "union_insert"]
