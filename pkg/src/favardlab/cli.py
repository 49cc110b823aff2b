"""Command line entry point.

Every subcommand builds an experiment config from its flags; a JSON file
passed with ``--config`` is merged on top and wins over the flags.
"""
from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from .experiments import ConfigError, ExperimentConfig, run

COUNTEREXAMPLES = ("non-transversal-line", "slope-half-shadow", "coplanar-tube")
DECAYS = ("favard-curve-decay", "mattila-neighborhood", "energy-law", "lemma-product",
          "visibility-decay", "marstrand")


def set_threads(k: int | None) -> int:
    """Set the numba worker count, clamped to what the runtime allows."""
    import numba

    if k is None:
        return numba.get_num_threads()
    if k < 1:
        raise ValueError("--threads must be >= 1")
    k = min(k, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(k)
    return k


def _range(text: str) -> dict:
    a, _, b = text.partition("..")
    return {"from": int(a), "to": int(b or a)}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config; its keys override flags")
    common.add_argument("--seed", type=int, default=0, help="64-bit seed (default 0)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--threads", type=int, default=None, help="numba worker threads")
    common.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="experiment parameter; VALUE is parsed as JSON when possible")

    p = argparse.ArgumentParser(prog="favardlab", description="Nonlinear Favard length experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="export fractal generations as JSON")
    g.add_argument("--set", dest="kind", default="four-corner", choices=["four-corner", "linear-cantor"])
    g.add_argument("--ratio", default="1/4")
    g.add_argument("--n", default="2", help="generation or range a..b")

    e = sub.add_parser("energy", parents=[common], help="Riesz energies of equidistributed measures")
    e.add_argument("--n", default="2..7")
    e.add_argument("--s", type=float, default=1.0)
    e.add_argument("--quadrature-order", type=int, default=2)

    t = sub.add_parser("transversality", parents=[common], help="sampled transversality report")
    t.add_argument("--family", default="orthogonal", choices=["orthogonal", "curve", "surface", "line", "radial"])
    t.add_argument("--pairs", type=int, default=1000)
    t.add_argument("--psi-samples", type=int, default=2000)
    t.add_argument("--deltas", default="0.1,0.03,0.01")

    f = sub.add_parser("favard", parents=[common], help="cross-check the three length estimators")
    f.add_argument("--n", default="2")
    f.add_argument("--drops", type=int, default=1_000_000)

    v = sub.add_parser("visibility", parents=[common], help="visibility integrals over a circle")
    v.add_argument("--n", default="1..5")
    v.add_argument("--radius", type=float, default=3.0)

    d = sub.add_parser("decay", parents=[common], help="run a decay-law experiment")
    d.add_argument("experiment", choices=DECAYS)

    c = sub.add_parser("counterexample", parents=[common], help="run a non-transversal example")
    c.add_argument("experiment", choices=COUNTEREXAMPLES)
    return p


def _parse_params(items: list[str]) -> dict:
    out = {}
    for item in items:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def config_from_args(args: argparse.Namespace) -> dict:
    cfg: dict = {"seed": args.seed, "params": _parse_params(args.param)}
    cmd = args.command
    if cmd == "generate":
        cfg.update(experiment="generate", set={"kind": args.kind, "ratio": args.ratio, "n": _range(args.n)})
    elif cmd == "energy":
        cfg.update(experiment="energy-law", set={"n": _range(args.n)})
        cfg["params"].update(s=args.s, quadrature_order=args.quadrature_order)
    elif cmd == "transversality":
        cfg.update(experiment="transversality", family={"type": args.family})
        if args.family == "radial":
            cfg["family"]["vantage"] = {"type": "circle", "center": [0.5, 0.5], "radius": 3.0}
        cfg["params"].update(pairs=args.pairs, psi_samples=args.psi_samples,
                             deltas=[float(x) for x in args.deltas.split(",")])
    elif cmd == "favard":
        cfg.update(experiment="cross-estimators", set={"n": _range(args.n)})
        cfg["params"].update(drops=args.drops)
    elif cmd == "visibility":
        cfg.update(experiment="visibility-decay", set={"n": _range(args.n)})
        cfg["params"].update(radius=args.radius)
    else:
        cfg.update(experiment=args.experiment)
    if args.config is not None:
        override = json.loads(args.config.read_text())
        params = {**cfg.get("params", {}), **override.pop("params", {})}
        cfg.update(override)
        cfg["params"] = params
    if not cfg["params"]:
        cfg.pop("params")
    return cfg


def _fail(out_dir: Path | None, exc: BaseException, code: int) -> int:
    err = {"error": type(exc).__name__, "message": str(exc)}
    text = json.dumps(err)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = args.out
    try:
        set_threads(args.threads)
        raw = config_from_args(args)
        cfg = ExperimentConfig.from_dict(raw)
        if cfg.out is not None:
            out_dir = Path(cfg.out)
        result = run(cfg, out_dir)
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as exc:
        return _fail(out_dir, exc, 2)
    except Exception as exc:  # anything else is a bug or a resource problem
        traceback.print_exc(file=sys.stderr)
        return _fail(out_dir, exc, 1)
    print(json.dumps({"experiment": result.name, "csv": str(out_dir / f"{result.name}.csv"),
                      "json": str(out_dir / f"{result.name}.json")}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
