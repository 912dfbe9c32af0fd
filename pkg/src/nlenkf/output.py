"""CSV and text-table output for experiments.

All files use ``,`` separators, ``.`` decimals, a header row and ``\\n``
line endings.  Floats are written with ``repr`` so they round-trip exactly.
"""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path

from .ensemble import CycleMetrics

CYCLE_COLUMNS = ("cycle", "f_rmse", "f_spread", "f_crps", "a_rmse", "a_spread", "a_crps",
                 "diverged")

SUMMARY_COLUMNS = ("method", "obs", "N", "loc_radius", "inflation", "seed", "member_seed",
                   "n_cycles", "spinup_cycles", "forecast_rmse", "forecast_spread",
                   "forecast_crps", "analysis_rmse", "analysis_spread", "analysis_crps",
                   "diverged")

TABLE_HEADER = ("Method", "Loc.Radius", "Inflation", "F.RMSE", "F.Spread", "F.CRPS",
                "A.RMSE", "A.Spread", "A.CRPS")

METHOD_LABELS = {"enkf": "EnKF", "ga-pl": "GA-PL", "ga-kde": "GA-KDE", "rhf": "RHF",
                 "irhf": "iRHF"}


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def cycle_rows(records):
    for r in records:
        yield (r.cycle_index, r.forecast_rmse, r.forecast_spread, r.forecast_crps,
               r.analysis_rmse, r.analysis_spread, r.analysis_crps, r.diverged)


def write_cycles(path, records):
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = _writer(fh)
        w.writerow(CYCLE_COLUMNS)
        for row in cycle_rows(records):
            w.writerow([_fmt(v) for v in row])


def read_cycles(path):
    with open(path, newline="", encoding="ascii") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != CYCLE_COLUMNS:
            raise ValueError(f"unexpected header {header}")
        return [CycleMetrics(int(r[0]), *map(float, r[1:7]), diverged=r[7] == "1") for r in rd]


def summary_row(s):
    c = s.config
    return {
        "method": c.method, "obs": c.obs, "N": c.N, "loc_radius": float(c.loc_radius),
        "inflation": float(c.inflation), "seed": c.seed, "member_seed": c.member_seed,
        "n_cycles": c.n_cycles, "spinup_cycles": c.spinup_cycles,
        "forecast_rmse": s.forecast_rmse, "forecast_spread": s.forecast_spread,
        "forecast_crps": s.forecast_crps, "analysis_rmse": s.analysis_rmse,
        "analysis_spread": s.analysis_spread, "analysis_crps": s.analysis_crps,
        "diverged": bool(s.diverged),
    }


def write_summary(path_or_buffer, rows):
    """Write summary rows (dicts keyed by ``SUMMARY_COLUMNS``)."""
    own = not hasattr(path_or_buffer, "write")
    fh = open(path_or_buffer, "w", newline="", encoding="ascii") if own else path_or_buffer
    try:
        w = _writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in SUMMARY_COLUMNS])
    finally:
        if own:
            fh.close()


_PARSERS = {"N": int, "seed": int, "n_cycles": int, "spinup_cycles": int,
            "member_seed": lambda v: int(v) if v else None,
            "diverged": lambda v: v == "1", "method": str, "obs": str}


def read_summary(path_or_text):
    if isinstance(path_or_text, (str, Path)) and Path(path_or_text).exists():
        text = Path(path_or_text).read_text(encoding="ascii")
    else:
        text = str(path_or_text)
    rd = csv.DictReader(io.StringIO(text))
    return [{k: _PARSERS.get(k, float)(v) for k, v in row.items()} for row in rd]


def render_table(rows, title=None):
    """Plain-text table with the layout of the published result tables."""
    def num(v):
        return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.2f}"

    def radius(v):
        return "inf" if math.isinf(v) else f"{v:g}"

    lines = [] if title is None else [title]
    body = []
    for r in rows:
        body.append((METHOD_LABELS.get(r["method"], r["method"]), radius(float(r["loc_radius"])),
                     f"{float(r['inflation']):g}",
                     *(num(r[k]) for k in ("forecast_rmse", "forecast_spread", "forecast_crps",
                                           "analysis_rmse", "analysis_spread",
                                           "analysis_crps"))))
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h)
              for i, h in enumerate(TABLE_HEADER)]
    fmt = "  ".join(f"{{:<{w}}}" if i == 0 else f"{{:>{w}}}" for i, w in enumerate(widths))
    lines.append(fmt.format(*TABLE_HEADER))
    lines.append("-" * len(lines[-1]))
    lines.extend(fmt.format(*b) for b in body)
    return "\n".join(lines) + "\n"


def emit_outputs(out_dir, summaries, records=None, title=None):
    """Write ``summary.csv`` and ``table.txt`` (and ``cycles.csv`` when
    per-cycle records of a single run are given) into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [summary_row(s) for s in summaries]
    write_summary(out / "summary.csv", rows)
    (out / "table.txt").write_text(render_table(rows, title), encoding="ascii")
    if records is not None:
        write_cycles(out / "cycles.csv", records)
    return out
