"""Experiment suite: config parsing, runs and report emission.

Each experiment returns a CSV table and a JSON report. The CSV is the
contract for reproducibility: for a fixed config and seed it is
byte-identical across runs and thread counts.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from . import fractals
from .favard import (DecayTable, LengthEstimate, buffon_mc, favard_minkowski, favard_parameter_integral,
                     fit_decay, marstrand_dimension_experiment, visibility_integral)
from .geometry import CellSet, IntervalUnion, dilate
from .measures import equidistributed_measure, riesz_energy
from .projections import (Circle, CurveSpec, Segment, curve_family, family_from_json, orthogonal_family,
                          straight_line_family, transversality_estimate, tube_condition_check)


def load_schema() -> dict:
    return json.loads(resources.files("favardlab").joinpath("config_schema.json").read_text())


class ConfigError(ValueError):
    """The experiment config failed validation."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    family: dict | None = None
    set: dict = field(default_factory=dict)
    scales: dict | None = None
    params: dict = field(default_factory=dict)
    out: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(data, load_schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from None
        for rng_path, rng in (("set/n", data.get("set", {}).get("n")),
                              ("scales/k", (data.get("scales") or {}).get("k"))):
            if rng is not None and rng["from"] > rng["to"]:
                raise ConfigError(f"config invalid at {rng_path}: empty range")
        return cls(data["experiment"], int(data["seed"]), data.get("family"), dict(data.get("set", {})),
                   data.get("scales"), dict(data.get("params", {})), data.get("out"))

    def to_dict(self) -> dict:
        out = {"experiment": self.experiment, "seed": self.seed, "set": self.set, "params": self.params}
        if self.family is not None:
            out["family"] = self.family
        if self.scales is not None:
            out["scales"] = self.scales
        return out

    def n_range(self, default: tuple[int, int]) -> list[int]:
        r = self.set.get("n", {"from": default[0], "to": default[1]})
        return list(range(r["from"], r["to"] + 1))

    def k_range(self, default_base: float, default: tuple[int, int]) -> tuple[float, list[int]]:
        sc = self.scales or {"base": default_base, "k": {"from": default[0], "to": default[1]}}
        return float(sc["base"]), list(range(sc["k"]["from"], sc["k"]["to"] + 1))

    def p(self, key: str, default):
        return self.params.get(key, default)


@dataclass
class ExperimentResult:
    name: str
    csv: str
    report: dict

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        c, j = d / f"{self.name}.csv", d / f"{self.name}.json"
        c.write_text(self.csv)
        j.write_text(json.dumps(self.report, indent=2, sort_keys=True, default=_json_default) + "\n")
        return c, j


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Fraction):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _set_from(cfg: ExperimentConfig, n: int) -> CellSet:
    kind = cfg.set.get("kind", "four-corner")
    ratio = Fraction(cfg.set.get("ratio", "1/4"))
    if kind == "four-corner":
        return fractals.four_corner(n, ratio)
    if kind == "linear-cantor":
        return fractals.linear_cantor(ratio, n)
    if kind == "segment":
        return CellSet(2, Fraction(1), np.array([[0, 0]]), flat_axes=(1,))
    raise ConfigError(f"unknown set kind {kind!r}")


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _generate(cfg: ExperimentConfig) -> ExperimentResult:
    ns = cfg.n_range((2, 2))
    sets = {n: _set_from(cfg, n) for n in ns}
    rows = [(n, c.count, str(c.side), c.measure()) for n, c in sets.items()]
    report = {"target": "cell sets of self-similar generations", "config": cfg.to_dict(),
              "sets": {str(n): c.to_json() for n, c in sets.items()}}
    return ExperimentResult("generate", _csv(("n", "cells", "side", "measure"), rows), report)


def _favard_curve_decay(cfg: ExperimentConfig) -> ExperimentResult:
    curve = CurveSpec.parabola(float(cfg.p("c", 1.0)))
    rows = []
    for n in cfg.n_range((1, 6)):
        K = _set_from(cfg, n)
        pitch = float(cfg.p("pitch_base", 4.0)) ** -(n + int(cfg.p("pitch_offset", 1)))
        rows.append((n, favard_minkowski(curve, K, pitch)))
    table = DecayTable.build(rows, "inverse", {"target": "Favard curve length of the four-corner "
                                                         "generations decays no faster than 1/n"})
    nv = [n * e.value for n, e in rows]
    report = table.to_json()
    report.update(config=cfg.to_dict(), n_times_value=nv, max_over_min=max(nv) / min(nv),
                  min_over_first=min(nv) / nv[0])
    return ExperimentResult("favard-curve-decay", table.to_csv(), report)


def _mattila(cfg: ExperimentConfig) -> ExperimentResult:
    ratio = Fraction(cfg.set.get("ratio", "1/4"))
    s = math.log(2) / math.log(1 / ratio)
    base, ks = cfg.k_range(4.0, (2, 6))
    fam = orthogonal_family()
    quad = int(cfg.p("quad_points", 64))
    rows = []
    for k in ks:
        r = base ** -k
        gen = 0
        while float(ratio) ** gen >= r:
            gen += 1
        F = dilate(fractals.linear_cantor(ratio, gen), r)
        est = favard_parameter_integral(fam, F, quad, F.h / int(cfg.p("resolution_div", 4)))
        rows.append((r, est))
    table = DecayTable.build(rows, "log-log", {"target": "Favard length of r-neighbourhoods of an "
                                                         "s-dimensional set is at least of order r^(1-s)"})
    norm = [r ** (s - 1) * e.value for r, e in rows]
    report = table.to_json()
    report.update(config=cfg.to_dict(), s=s, normalized=norm, min_over_first=min(norm) / norm[0])
    return ExperimentResult("mattila-neighborhood", table.to_csv(), report)


def horizontal_segment_samples(length: float, spacing: float) -> np.ndarray:
    n = int(math.ceil(length / spacing)) + 1
    return np.stack([np.linspace(0.0, length, n), np.zeros(n)], axis=1)


def _non_transversal_line(cfg: ExperimentConfig) -> ExperimentResult:
    base, ks = cfg.k_range(2.0, (4, 8))
    seg = CellSet(2, Fraction(1), np.array([[0, 0]]), flat_axes=(1,))
    lf, lg = 1.0, float(cfg.p("curve_length", 1.0))
    fam = straight_line_family(0.0, box=((-1, -1), (2, 2)))
    rows, psi_ratio = [], []
    for k in ks:
        r = base ** -k
        F = dilate(seg, r)
        pitch = F.h / 2
        mk = favard_minkowski(horizontal_segment_samples(lg, pitch / 2), F, pitch)
        # per-alpha average over the range of alpha where the image is non-empty
        rows.append((r, LengthEstimate(mk.value / (lf + lg), "minkowski", pitch,
                                       normalization="alpha-range-average", lebesgue=mk.value)))
        psi_ratio.append(favard_parameter_integral(fam, F, 16, F.h / 4).value / r)
    table = DecayTable.build(rows, "log-log", {"target": "without curvature the Favard curve length of "
                                                         "F(r) is about 2r"})
    report = table.to_json()
    report.update(config=cfg.to_dict(), ratio_to_r=[e.value / r for r, e in rows],
                  psi_average_ratio_to_r=psi_ratio)
    return ExperimentResult("non-transversal-line", table.to_csv(), report)


def _energy_law(cfg: ExperimentConfig) -> ExperimentResult:
    s = float(cfg.p("s", 1.0))
    q = int(cfg.p("quadrature_order", 2))
    rows = []
    for n in cfg.n_range((2, 7)):
        mu = equidistributed_measure(_set_from(cfg, n), q)
        rows.append((n, s, riesz_energy(mu, s), q))
    ns = [r[0] for r in rows]
    es = [r[2] for r in rows]
    report = {"target": "energy of the equidistributed measure on K_n grows linearly in n",
              "config": cfg.to_dict(), "energies": es}
    if len(rows) >= 3:
        slope, intercept, r2 = fit_decay(ns, es, "linear")
        diffs = np.diff(es)
        med = float(np.median(diffs))
        report.update(slope=slope, intercept=intercept, r2=r2, differences=diffs.tolist(),
                      max_relative_deviation=float(np.max(np.abs(diffs - med)) / abs(med)))
    return ExperimentResult("energy-law", _csv(("n", "s", "I_s", "quadrature_order"), rows), report)


def _lemma_product(cfg: ExperimentConfig) -> ExperimentResult:
    fam = family_from_json(cfg.family or {"type": "curve"})
    q = int(cfg.p("quadrature_order", 2))
    quad = int(cfg.p("quad_points", 64))
    rows, products = [], []
    for n in cfg.n_range((2, 6)):
        K = _set_from(cfg, n)
        fav = favard_parameter_integral(fam, K, quad, K.h / int(cfg.p("resolution_div", 8)))
        energy = riesz_energy(equidistributed_measure(K, q), 1.0)
        products.append(energy * fav.value)
        rows.append((n, energy, fav.value, energy * fav.value))
    report = {"target": "energy times average projection length stays bounded below",
              "config": cfg.to_dict(), "products": products,
              "min_over_first": min(products) / products[0]}
    return ExperimentResult("lemma-product", _csv(("n", "I_1", "fav_psi_average", "product"), rows), report)


def _transversality(cfg: ExperimentConfig) -> ExperimentResult:
    fam = family_from_json(cfg.family or {"type": "orthogonal"})
    deltas = [float(d) for d in cfg.p("deltas", [0.1, 0.03, 0.01])]
    rep = transversality_estimate(fam, float(cfg.p("s", 1.0)), deltas, int(cfg.p("pairs", 1000)),
                                  int(cfg.p("psi_samples", 2000)), cfg.seed)
    rows = [(d, w, m, e) for d, w, m, e in zip(rep.deltas, rep.worst_by_delta, rep.psi_mean, rep.standard_error)]
    report = {"target": "sampled transversality constant of a projection family",
              "config": cfg.to_dict(), "family": fam.describe(), "report": rep.to_json()}
    return ExperimentResult("transversality",
                            _csv(("delta", "worst_ratio", "psi_mean", "standard_error"), rows), report)


def _visibility_decay(cfg: ExperimentConfig) -> ExperimentResult:
    R = float(cfg.p("radius", 3.0))
    circle = Circle((0.5, 0.5), R)
    quad = int(cfg.p("quad_points", 256))
    rows = [(n, visibility_integral(circle, _set_from(cfg, n), quad)) for n in cfg.n_range((1, 5))]
    table = DecayTable.build(rows, "inverse", {"target": "visibility of K_n from a surrounding circle "
                                                         "decays no faster than 1/n"})
    nv = [n * e.value for n, e in rows]
    report = table.to_json()
    report.update(config=cfg.to_dict(), n_times_value=nv, min_over_first=min(nv) / nv[0])
    return ExperimentResult("visibility-decay", table.to_csv(), report)


def slope_half_shadow(n: int, slope: Fraction = Fraction(1, 2)) -> IntervalUnion:
    """Exact union of the values ``y - slope * x`` over the cells of K_n."""
    K = fractals.four_corner(n)
    side = Fraction(K.side)
    ivs = []
    for x0, y0 in K.exact_corners():
        ivs.append((y0 - slope * (x0 + side), y0 + side - slope * x0))
    return IntervalUnion.from_intervals(ivs)


def _slope_half(cfg: ExperimentConfig) -> ExperimentResult:
    rows = []
    for n in cfg.n_range((0, 6)):
        u = slope_half_shadow(n)
        rows.append((n, str(u.measure), float(u.measure), len(u)))
    report = {"target": "with a straight curve of slope 1/2 the shadows of K_n do not decay",
              "config": cfg.to_dict(), "lengths": [r[2] for r in rows], "components": [r[3] for r in rows]}
    return ExperimentResult("slope-half-shadow", _csv(("n", "length_exact", "length", "components"), rows), report)


def _coplanar_tube(cfg: ExperimentConfig) -> ExperimentResult:
    deltas = [float(d) for d in cfg.p("deltas", [0.1, 0.01, 0.001])]
    lines = int(cfg.p("lines", 200))
    cop = tube_condition_check(Segment((0.0, 0.0), (1.0, 0.0)), ((2.0, 0.0), (3.0, 0.0)), deltas, lines, cfg.seed)
    ctl = tube_condition_check(Circle((0.5, 0.5), 3.0), ((0.0, 0.0), (1.0, 1.0)), deltas, lines, cfg.seed)
    rows = [("coplanar", d, v) for d, v in zip(cop.deltas, cop.max_ratio)]
    rows += [("circle", d, v) for d, v in zip(ctl.deltas, ctl.max_ratio)]
    report = {"target": "co-planar vantage and visible sets violate the tube condition",
              "config": cfg.to_dict(), "coplanar": cop.to_json(), "circle_control": ctl.to_json()}
    return ExperimentResult("coplanar-tube", _csv(("case", "delta", "max_ratio"), rows), report)


def _cross(cfg: ExperimentConfig) -> ExperimentResult:
    n = cfg.n_range((2, 2))[0]
    K = _set_from(cfg, n)
    curve = CurveSpec.parabola(float(cfg.p("c", 1.0)))
    fam = curve_family(curve)
    par = favard_parameter_integral(fam, K, int(cfg.p("quad_points", 64)), K.h / int(cfg.p("resolution_div", 64)))
    mk = favard_minkowski(curve, K, K.h / int(cfg.p("pitch_div", 64)))
    bf = buffon_mc(curve, K, int(cfg.p("drops", 1_000_000)), seed=cfg.seed)
    ests = {"parameter-integral": LengthEstimate(par.lebesgue, "parameter-integral", par.resolution),
            "minkowski": mk, "buffon": bf}
    agree = {}
    names = list(ests)
    for i in range(3):
        for j in range(i + 1, 3):
            a, b = ests[names[i]], ests[names[j]]
            tol = max(0.05 * max(a.value, b.value), 3 * math.hypot(a.error_bar, b.error_bar))
            agree[f"{names[i]}~{names[j]}"] = {"difference": abs(a.value - b.value), "tolerance": tol,
                                               "agree": abs(a.value - b.value) <= tol}
    rows = [(n, e) for e in ests.values()]
    table = DecayTable(tuple(rows), metadata={"target": "three estimators of the Favard curve length agree"})
    report = table.to_json()
    report.update(config=cfg.to_dict(), agreement=agree, psi_average=par.value)
    return ExperimentResult("cross-estimators", table.to_csv(), report)


def _marstrand(cfg: ExperimentConfig) -> ExperimentResult:
    ratio = Fraction(cfg.set.get("ratio", "1/5"))
    n = cfg.n_range((6, 6))[0]
    K = fractals.four_corner(n, ratio)
    t = math.log(4) / math.log(1 / ratio)
    names = cfg.p("families", ["orthogonal", "curve"])
    rows, meds = [], {}
    for idx, name in enumerate(names):
        fam = family_from_json({"type": name})
        res = marstrand_dimension_experiment(fam, K, int(cfg.p("alphas", 20)), cfg.seed + idx)
        meds[name] = res["median"]
        rows += [(name, float(a), float(e)) for a, e in zip(np.ravel(res["alphas"]), res["estimates"])]
    report = {"target": "projections in a transversal family preserve dimension up to 1",
              "config": cfg.to_dict(), "dimension": t, "medians": meds}
    return ExperimentResult("marstrand", _csv(("family", "alpha", "estimate"), rows), report)


EXPERIMENTS: dict[str, Callable[[ExperimentConfig], ExperimentResult]] = {
    "generate": _generate,
    "favard-curve-decay": _favard_curve_decay,
    "mattila-neighborhood": _mattila,
    "non-transversal-line": _non_transversal_line,
    "energy-law": _energy_law,
    "lemma-product": _lemma_product,
    "transversality": _transversality,
    "visibility-decay": _visibility_decay,
    "slope-half-shadow": _slope_half,
    "coplanar-tube": _coplanar_tube,
    "cross-estimators": _cross,
    "marstrand": _marstrand,
}


def run(config: ExperimentConfig | dict, out_dir: str | Path | None = None) -> ExperimentResult:
    """Run one experiment and, when ``out_dir`` is given, write its CSV and JSON."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    result = EXPERIMENTS[cfg.experiment](cfg)
    target = out_dir if out_dir is not None else cfg.out
    if target is not None:
        result.write(target)
    return result
