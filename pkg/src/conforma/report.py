"""Result tables and SVG charts for experiment runs."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .experiment import WIDTH_STATS, ExperimentResult

RESULT_COLUMNS = ("replication", "method", "alpha", "coverage",
                  "width_min", "width_p05", "width_median", "width_max")
SUMMARY_COLUMNS = ("method", "alpha", "error_rate", "mad")


def _num(v: float) -> str:
    # repr gives the shortest round-tripping form, so output is stable
    return repr(float(v))


def result_rows(res: ExperimentResult):
    for l in range(res.coverage.shape[0]):
        if l in res.skipped:
            continue
        for k, method in enumerate(res.methods):
            for a, alpha in enumerate(res.config.alpha_grid):
                yield (l + 1, method, alpha, res.coverage[l, k, a], *res.widths[l, k, a])


def summary_rows(res: ExperimentResult):
    for method in res.methods:
        rates = res.error_rates(method)
        m = res.mad(method)
        for alpha in res.config.alpha_grid:
            yield (method, alpha, rates[alpha], m)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_results(res: ExperimentResult, out_dir, fmt: str = "csv") -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = list(result_rows(res))
    summ = list(summary_rows(res))
    paths = [out / "result.csv", out / "summary.csv"]
    paths[0].write_text(_csv_text(RESULT_COLUMNS, rows))
    paths[1].write_text(_csv_text(SUMMARY_COLUMNS, summ))
    if fmt == "json":
        def records(cols, rs):
            return [{c: (float(v) if isinstance(v, (float, np.floating)) and math.isfinite(v)
                         else str(v) if isinstance(v, (float, np.floating)) else v)
                     for c, v in zip(cols, r)} for r in rs]
        for name, cols, rs in (("result.json", RESULT_COLUMNS, rows),
                               ("summary.json", SUMMARY_COLUMNS, summ)):
            p = out / name
            p.write_text(json.dumps(records(cols, rs), indent=1) + "\n")
            paths.append(p)
    return paths


def read_result_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [
            {"replication": int(r["replication"]), "method": r["method"],
             **{k: float(r[k]) for k in RESULT_COLUMNS[2:]}}
            for r in reader
        ]


def _n_train(result_path: Path) -> int:
    cfg = result_path.parent / "config.txt"
    if cfg.exists():
        for line in cfg.read_text().splitlines():
            key, _, val = line.partition("=")
            if key.strip() == "n_train":
                return int(val)
    return 0


def collect(result_dir):
    """Aggregate every ``result.csv`` below ``result_dir`` by method, n and alpha."""
    paths = sorted(Path(result_dir).rglob("result.csv"))
    agg = defaultdict(lambda: defaultdict(list))
    for p in paths:
        n = _n_train(p)
        for row in read_result_csv(p):
            agg[row["method"]][(n, row["alpha"])].append(row)
    return agg


def render_report(result_dir, out_dir=None) -> list:
    """Write ``coverage_<method>.svg`` and ``width_<method>.svg`` per method.

    Coverage is averaged over replications; width markers follow the usual
    convention: median as a thicker line, 5% quantile as upward triangles,
    maximum as downward triangles. Returns the written paths (empty when
    there are no results).
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    agg = collect(result_dir)
    out = Path(out_dir or result_dir)
    written = []
    plt.rcParams["svg.hashsalt"] = "conforma"
    for method in sorted(agg):
        table = agg[method]
        alphas = sorted({a for _, a in table})
        ns = sorted({n for n, _ in table})

        fig, ax = plt.subplots(figsize=(5, 3.5))
        for alpha in alphas:
            cov = [np.mean([r["coverage"] for r in table[(n, alpha)]]) for n in ns]
            line, = ax.plot(ns, cov, marker="o", label=f"alpha={alpha:g}")
            ax.axhline(1 - alpha, color=line.get_color(), linestyle="--", linewidth=0.8)
        ax.set(xlabel="train size n", ylabel="coverage", title=f"{method}: coverage")
        ax.legend(fontsize="small")
        written.append(_save(fig, out / f"coverage_{method}.svg"))

        fig, ax = plt.subplots(figsize=(5, 3.5))
        for alpha in alphas:
            stats = {s: [] for s in WIDTH_STATS}
            for n in ns:
                rows = table[(n, alpha)]
                for s in WIDTH_STATS:
                    vals = np.array([r[f"width_{s}"] for r in rows])
                    stats[s].append(np.median(vals) if np.all(np.isfinite(vals)) else np.nan)
            line, = ax.plot(ns, stats["median"], linewidth=2.0, label=f"alpha={alpha:g}")
            c = line.get_color()
            ax.plot(ns, stats["p05"], linestyle="none", marker="^", color=c)
            ax.plot(ns, stats["max"], linestyle="none", marker="v", color=c)
        ax.set(xlabel="train size n", ylabel="hull width", title=f"{method}: width")
        ax.legend(fontsize="small")
        written.append(_save(fig, out / f"width_{method}.svg"))
    return written


def _save(fig, path: Path) -> Path:
    import matplotlib.pyplot as plt

    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
