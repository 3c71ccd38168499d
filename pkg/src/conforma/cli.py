"""Command-line interface.

Exit codes: 0 success, 2 input/config error, 3 numerical failure, 4 too many
skipped replications.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from .conformal import (
    ResidualKind,
    brute_force_membership,
    conformal_region,
    default_oracle_grid,
    regions_agree,
    residual_line,
)
from .config import ConfigError, format_config, load_config
from .errors import ConformaError, NotPositiveDefinite
from .experiment import run_experiment
from .gpr import gpr_interval, mle_theta, profile_sigma2
from .kernel import Dataset, KernelParams
from .krr import krr_fit
from .region import ConfidenceRegion, format_component
from .report import render_report, write_results

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_SKIPPED = 0, 2, 3, 4
RESIDUAL_FLAGS = {"in": ResidualKind.IN_SAMPLE, "loo": ResidualKind.LOO}


class InputError(ValueError):
    pass


def read_train_csv(path) -> Dataset:
    """Training CSV: header row, then input columns followed by the target."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    with fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file, expected a header row")
    width = len(rows[0])
    if width < 2:
        raise InputError(f"{path}:1: header needs at least one input column and a target")
    data = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != width:
            raise InputError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric field in {row!r}") from None
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"{path}:{lineno}: non-finite value")
        data.append(vals)
    if not data:
        raise InputError(f"{path}: no data rows")
    arr = np.array(data)
    return Dataset(arr[:, :-1], arr[:, -1])


def _point(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad test point {text!r}") from None


def region_lines(region: ConfidenceRegion) -> list:
    if region.is_empty:
        return ["empty"]
    return [format_component(c) for c in region]


def parse_region_lines(lines) -> ConfidenceRegion:
    """Inverse of :func:`region_lines`."""
    comps = []
    for line in lines:
        line = line.strip()
        if not line or line == "empty":
            continue
        if line.startswith("{"):
            v = float(line[1:-1])
            comps.append((v, v))
            continue
        lo, hi = (s.strip() for s in line[1:-1].split(","))
        comps.append((float(lo), float(hi)))
    return ConfidenceRegion(comps)


def cmd_region(args) -> int:
    train = read_train_csv(args.train)
    xs = args.test_point
    if xs.shape[0] != train.dim:
        raise InputError(f"test point has {xs.shape[0]} coordinates, training inputs have {train.dim}")
    kind = RESIDUAL_FLAGS[args.residual]
    lam = args.lam
    if args.theta == "mle":
        theta = mle_theta(train, lam).theta_hat
    else:
        theta = float(args.theta)
    params = KernelParams(theta)
    line = residual_line(train, xs, lam, params, kind)
    region = conformal_region(line, args.alpha, args.ncm)
    model = krr_fit(train, lam, params)
    sigma2 = profile_sigma2(train, lam, params)
    gpr = gpr_interval(model, xs, sigma2, args.alpha) if args.alpha < 1 else None

    out = [f"# conformal {args.ncm} ({kind.value}) alpha={args.alpha:g} theta={theta:g} lambda={lam:g}"]
    out += region_lines(region)
    if region.singletons:
        out.append(f"# isolated singletons: {len(region.singletons)}")
    out.append(f"# gpr interval sigma2={sigma2:.6g}")
    out.append(format_component(gpr.interval) if gpr else "undefined (alpha = 1)")
    verdict = None
    if args.oracle:
        grid = default_oracle_grid(train, xs, lam, params)
        keep = brute_force_membership(train, xs, lam, params, kind, args.ncm, args.alpha, grid)
        edges = np.flatnonzero(np.diff(np.concatenate([[0], keep.astype(np.int8), [0]])))
        oracle = ConfidenceRegion((grid[s], grid[e - 1]) for s, e in zip(edges[::2], edges[1::2]))
        verdict = "AGREE" if regions_agree(region, grid, keep) else "DISAGREE"
        out.append(f"# oracle brute force on {grid.size} grid points")
        out += region_lines(oracle)
        out.append(verdict)
    print("\n".join(out))

    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "region.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["source", "lo", "hi"])
            for lo, hi in region:
                w.writerow([args.ncm, repr(lo), repr(hi)])
            if gpr:
                w.writerow(["gpr", repr(gpr.interval[0]), repr(gpr.interval[1])])
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg, extras = load_config(args.config)
    if args.seed is not None:
        cfg = type(cfg)(**{**cfg.__dict__, "seed": args.seed})
    out_dir = Path(args.out or extras["output_dir"])
    res = run_experiment(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(format_config(cfg, {"format": extras["format"]}))
    if res.n_valid == 0:
        print(f"error: all {cfg.replications} replications failed", file=sys.stderr)
        return EXIT_SKIPPED
    for p in write_results(res, out_dir, extras["format"]):
        print(p)
    if not res.valid:
        print(f"error: {len(res.skipped)} of {cfg.replications} replications skipped",
              file=sys.stderr)
        return EXIT_SKIPPED
    return EXIT_OK


def cmd_report(args) -> int:
    d = Path(args.result_dir)
    if not d.is_dir():
        raise InputError(f"{d}: not a directory")
    try:
        paths = render_report(d, args.out)
    except (ValueError, KeyError) as exc:
        raise InputError(str(exc)) from None
    if not paths:
        raise InputError(f"{d}: no result.csv files found")
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conforma", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("region", help="conformal region and GPR interval at one test point")
    p.add_argument("train", help="CSV with header: input columns then target")
    p.add_argument("test_point", type=_point, help="comma-separated coordinates")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-1)
    p.add_argument("--theta", default="mle", help="kernel precision or 'mle'")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--ncm", choices=("rrcm", "crr"), default="rrcm")
    p.add_argument("--residual", choices=tuple(RESIDUAL_FLAGS), default="in")
    p.add_argument("--oracle", action="store_true", help="also run the brute-force oracle")
    p.add_argument("--out", help="directory for region.csv")
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("experiment", help="run a coverage experiment from a config file")
    p.add_argument("config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="override output_dir")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="render SVG charts from experiment results")
    p.add_argument("result_dir")
    p.add_argument("--out", help="directory for the SVG files (default: result_dir)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NotPositiveDefinite, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConformaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc, ArithmeticError) else EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
