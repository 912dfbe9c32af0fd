"""Command-line entry point: ``nlenkf run | sweep | scalar-bench``.

Settings come from an optional INI file (``--config``) and are overridden
by flags.  Recognised sections and keys::

    [experiment]  method obs N loc_radius inflation n_cycles spinup_cycles
                  seed member_seed obs_noise_sd divergence_threshold
                  chordal obs_order
    [model]       forcing window substeps n_sites spinup_mtu
    [sweep]       methods Ns radii inflations          (comma-separated)
    [scalar]      Ns trials                            (comma-separated Ns)

Exit status: 0 on success (diverged runs included), 1 on configuration
errors, 2 on I/O errors.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import harness, output
from .model import IntegratorConfig

log = logging.getLogger("nlenkf")

_EXPERIMENT_TYPES = {
    "method": str, "obs": str, "N": int, "loc_radius": float, "inflation": float,
    "n_cycles": int, "spinup_cycles": int, "seed": int, "member_seed": int,
    "obs_noise_sd": float, "divergence_threshold": float, "obs_order": str,
    "n_sites": int, "spinup_mtu": float,
}


def _bool(v):
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise harness.ConfigError(f"not a boolean: {v!r}")


def _floats(v):
    return [float(x) for x in v.split(",") if x.strip()]


def _ints(v):
    return [int(x) for x in v.split(",") if x.strip()]


def _strs(v):
    return [x.strip() for x in v.split(",") if x.strip()]


def load_config(path):
    """Read an INI file into plain dicts per section."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    return {s: dict(cp[s]) for s in cp.sections()}


def build_experiment(sections, args):
    exp = dict(sections.get("experiment", {}))
    model = dict(sections.get("model", {}))
    kw = {}
    try:
        for key, val in exp.items():
            if key == "chordal":
                kw[key] = _bool(val)
            elif key in _EXPERIMENT_TYPES:
                kw[key] = _EXPERIMENT_TYPES[key](val)
            else:
                raise harness.ConfigError(f"unknown [experiment] key {key!r}")
        integ = {}
        for key, val in model.items():
            if key in ("forcing", "window"):
                integ[key] = float(val)
            elif key == "substeps":
                integ[key] = int(val)
            elif key in ("n_sites", "spinup_mtu"):
                kw[key] = _EXPERIMENT_TYPES[key](val)
            else:
                raise harness.ConfigError(f"unknown [model] key {key!r}")
    except ValueError as exc:
        raise harness.ConfigError(str(exc)) from exc
    flag_map = {"method": args.method, "obs": args.obs, "N": args.n, "loc_radius": args.loc,
                "inflation": args.infl, "n_cycles": args.cycles, "seed": args.seed}
    kw.update({k: v for k, v in flag_map.items() if v is not None})
    if args.spinup is not None:
        kw["spinup_cycles"] = args.spinup
    elif "n_cycles" in kw and "spinup_cycles" not in kw:
        kw["spinup_cycles"] = min(500, kw["n_cycles"] // 11)
    try:
        kw["integrator"] = IntegratorConfig(**integ)
    except ValueError as exc:
        raise harness.ConfigError(str(exc)) from exc
    return harness.ExperimentConfig(**kw)


def _parser():
    p = argparse.ArgumentParser(prog="nlenkf", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="INI configuration file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        sp.add_argument("--workers", type=int, default=None,
                        help=f"worker processes (default ${harness.DEFAULT_WORKERS_ENV} or 1)")
        sp.add_argument("--method")
        sp.add_argument("--obs", choices=harness.OBS_KINDS)
        sp.add_argument("--n", type=int, help="ensemble size")
        sp.add_argument("--loc", type=float, help="localization radius (inf allowed)")
        sp.add_argument("--infl", type=float, help="inflation factor")
        sp.add_argument("--cycles", type=int, help="number of assimilation cycles")
        sp.add_argument("--spinup", type=int, help="cycles excluded from the medians")

    common(sub.add_parser("run", help="single twin experiment"))
    sw = sub.add_parser("sweep", help="grid over methods x N x radius x inflation")
    common(sw)
    sw.add_argument("--methods", help="comma-separated methods")
    sw.add_argument("--ns", help="comma-separated ensemble sizes")
    sw.add_argument("--radii", help="comma-separated radii")
    sw.add_argument("--inflations", help="comma-separated inflation factors")
    sb = sub.add_parser("scalar-bench", help="(y, gamma) error grid of the scalar filters")
    common(sb)
    sb.add_argument("--ns", help="comma-separated ensemble sizes (default 20,80)")
    sb.add_argument("--trials", type=int)
    return p


def _cmd_run(args, sections):
    cfg = build_experiment(sections, args)
    summary, records = harness.run_cycle_experiment(cfg)
    output.emit_outputs(args.out, [summary], records)
    print(output.render_table([output.summary_row(summary)]), end="")


def _cmd_sweep(args, sections):
    base = build_experiment(sections, args)
    sw = sections.get("sweep", {})
    try:
        methods = _strs(args.methods or sw.get("methods", ",".join(harness.METHODS)))
        Ns = _ints(args.ns or sw.get("Ns", str(base.N)))
        radii = _floats(args.radii or sw.get("radii", ",".join(map(str, harness.LOC_GRID))))
        infl = _floats(args.inflations or sw.get("inflations",
                                                  ",".join(map(str, harness.INFLATION_GRID))))
    except ValueError as exc:
        raise harness.ConfigError(str(exc)) from exc
    for m in methods:
        if m not in harness.METHODS:
            raise harness.ConfigError(f"unknown method {m!r}")
    summaries = harness.run_sweep(base, methods, Ns, radii, infl, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    output.write_summary(out / "summary.csv", [output.summary_row(s) for s in summaries])
    best = [s for s in harness.best_by_method(summaries).values() if s is not None]
    table = output.render_table([output.summary_row(s) for s in best],
                                title=f"{base.obs} observations, best (d, r) per method")
    (out / "table.txt").write_text(table, encoding="ascii")
    print(table, end="")


def _cmd_scalar(args, sections):
    sc = sections.get("scalar", {})
    try:
        Ns = _ints(args.ns or sc.get("Ns", "20,80"))
        trials = args.trials if args.trials is not None else int(sc.get("trials", 100))
    except ValueError as exc:
        raise harness.ConfigError(str(exc)) from exc
    seed = args.seed if args.seed is not None else int(sections.get("experiment", {}).get("seed", 0))
    bench = harness.run_scalar_benchmark(Ns, trials=trials, seed=seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "scalar_bench.csv", "w", newline="", encoding="ascii") as fh:
        fh.write(f"# gamma=0 replaced by {bench.gamma_floor!r}; trials={bench.trials}\n")
        fh.write("filter,N,y,gamma,median_max_abs_error\n")
        for (name, N), grid in sorted(bench.errors.items()):
            for iy, y in enumerate(bench.y_grid):
                for ig, g in enumerate(bench.gamma_grid):
                    fh.write(f"{name},{N},{float(y)!r},{float(g)!r},{float(grid[iy, ig])!r}\n")
    for (name, N), grid in sorted(bench.errors.items()):
        print(f"{name:5s} N={N:<4d} grid-median error {np.median(grid):.4f}")


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        sections = load_config(args.config) if args.config else {}
        {"run": _cmd_run, "sweep": _cmd_sweep, "scalar-bench": _cmd_scalar}[args.command](
            args, sections)
    except (harness.ConfigError, configparser.Error) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
