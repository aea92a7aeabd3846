"""Command-line interface: ``mdrelax <subcommand> [--config FILE] [overrides]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from ..exceptions import UnsupportedOperation
from ..tableaux import available, registry_get
from .experiments import ExperimentConfig, run

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = ["build_parser", "load_config", "main"]

_SUBCOMMANDS = {
    "convergence": "convergence",
    "error-growth": "error-growth",
    "entropy": "entropy-evolution",
    "stability": "stability-angles",
}

# the full-resolution KdV run (off by default because it takes minutes)
FULL_KDV = {"problem": "kdv", "problem_params": {"N": 1000}, "T": 360.0, "dt": 0.5,
            "schemes": ["HB-I2DRK3-2s"], "solver": {"jacobian_strategy": "dense-fd"}}


def _value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _floats(text):
    """``"a,b,c"`` or a range ``"start:step:stop"`` (inclusive)."""
    if ":" in text:
        start, step, stop = (float(v) for v in text.split(":"))
        if step <= 0:
            raise argparse.ArgumentTypeError("range step must be positive")
        n = int(round((stop - start) / step))
        return [round(start + i * step, 12) for i in range(n + 1)]
    return [float(v) for v in text.split(",") if v.strip()]


def _param(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), _value(v.strip())


def load_config(path):
    """Read a TOML experiment file into a plain dict."""
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def build_parser():
    p = argparse.ArgumentParser(prog="mdrelax", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("list-schemes", help="list registered tableaux")
    for name, help_text in (
        ("convergence", "final-time errors over a list of step sizes"),
        ("error-growth", "error, entropy and gamma histories"),
        ("entropy", "entropy histories (no reference solution needed)"),
        ("stability", "A(alpha) angles of the relaxed update over a gamma grid"),
    ):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", help="TOML experiment file; flags override its values")
        s.add_argument("--problem")
        s.add_argument("--param", action="append", type=_param, default=[], metavar="KEY=VALUE",
                       help="problem parameter, repeatable")
        s.add_argument("--schemes", help="comma-separated scheme names")
        s.add_argument("--modes", help="comma-separated: off, relaxation, idt")
        s.add_argument("--dts", type=_floats, help="step sizes, 'a,b,c' or 'start:step:stop'")
        s.add_argument("--dt", type=float)
        s.add_argument("--T", type=float, dest="T")
        s.add_argument("--estimator")
        s.add_argument("--quadrature-points", type=int)
        s.add_argument("--gamma-solver")
        s.add_argument("--jacobian-strategy")
        s.add_argument("--gammas", type=_floats, help="gamma grid for stability scans")
        s.add_argument("--out", dest="output_dir")
        s.add_argument("--seed", type=int)
        if name in ("error-growth", "entropy"):
            s.add_argument("--full-kdv", action="store_true",
                           help="KdV with N=1000 up to T=360 (slow)")
    return p


def _merge(args):
    data = load_config(args.config) if args.config else {}
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    data.pop("experiment", None)
    if getattr(args, "full_kdv", False):
        for k, v in FULL_KDV.items():
            data[k] = dict(v) if isinstance(v, dict) else v
    for key in ("problem", "schemes", "modes", "dts", "dt", "T", "gammas", "output_dir", "seed"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    params = data.setdefault("problem_params", {})
    params.update(dict(args.param))
    relax = data.setdefault("relaxation", {})
    relax.pop("mode", None)
    for flag, key in (("estimator", "estimator"), ("quadrature_points", "quadrature_points"),
                      ("gamma_solver", "gamma_solver")):
        val = getattr(args, flag)
        if val is not None:
            relax[key] = val
    if args.jacobian_strategy is not None:
        data.setdefault("solver", {})["jacobian_strategy"] = args.jacobian_strategy
    return ExperimentConfig(experiment=_SUBCOMMANDS[args.command], **data)


def _list_schemes(out):
    for name in available():
        try:
            tab = registry_get(name)
        except UnsupportedOperation:
            out.write(f"{name:<20s} (coefficients not bundled)\n")
            continue
        kind = "explicit" if tab.is_explicit else "implicit"
        out.write(f"{name:<20s} order {tab.order}  stages {tab.s}  derivatives {tab.m}  {kind}\n")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-schemes":
        _list_schemes(sys.stdout)
        return 0
    try:
        cfg = _merge(args)
    except (ValueError, TypeError, OSError, tomllib.TOMLDecodeError) as exc:
        print(f"mdrelax: error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run(cfg)
    except (UnsupportedOperation, ValueError) as exc:
        print(f"mdrelax: error: {exc}", file=sys.stderr)
        return 2
    for path in result["files"]:
        print(path)
    print(result["manifest"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
