"""Command-line entry point ``snvtraffic``.

Every flag can also be set through an environment variable named after it
with the ``SNV_`` prefix (``SNV_CONFIG``, ``SNV_PRESET``, ``SNV_SEED``,
``SNV_THREADS``, ``SNV_OUT``, ``SNV_NORM``); explicit flags win.

Exit codes: 0 success, 1 usage or configuration error, 2 invariant or
diagnostic failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .characteristics import max_inversion, trace
from .config import PRESETS, RunConfig, load_preset, parse_config
from .diagnostics import diagnose
from .ensemble import distance_metrics, moment_overlay, run_ensemble
from .errors import ConfigError, InvariantViolation
from .solver import BoundaryWarning, cfl_timestep, simulate

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2
SUBCOMMANDS = ("simulate", "ensemble", "characteristics", "diagnose", "moments", "compare")
ENV_PREFIX = "SNV_"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _env(name, default=None):
    return os.environ.get(ENV_PREFIX + name.upper(), default)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="snvtraffic",
        description="Finite-volume simulation of the stochastic nonlocal velocity traffic model.",
        epilog="Environment overrides: SNV_CONFIG, SNV_PRESET, SNV_SEED, SNV_THREADS, SNV_OUT, SNV_NORM. "
        "Exit codes: 0 pass, 1 usage error, 2 invariant/diagnostic failure.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=SUBCOMMANDS)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="JSON config or run manifest")
    src.add_argument("--preset", choices=PRESETS)
    p.add_argument("--seed", type=int, default=_env("seed"), help="override noise.seed (u64)")
    p.add_argument("--threads", type=int, default=_env("threads", "1"))
    p.add_argument("--out", default=_env("out", "out"), help="output directory")
    p.add_argument("--norm", choices=("scaled", "unscaled", "both"), default=_env("norm", "both"))
    p.add_argument("--realizations", type=int, default=None, help="override ensemble.n_realizations")
    return p


def fmt(x) -> str:
    return repr(float(x))


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([r if isinstance(r, str) else fmt(r) for r in row])


def write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o).__name__)


def quantile_label(p: float) -> str:
    pct = p * 100.0
    if float(pct).is_integer():
        return f"q{int(pct):02d}"
    return "q" + f"{pct:g}".replace(".", "p")


def manifest(run: RunConfig, command: str, dt: float, outputs) -> dict:
    w = run.solver.weights()
    return {
        "tool_version": __version__,
        "command": command,
        "dt": dt,
        "gamma0": w.gamma0,
        "gamma_sum": w.total,
        "n_eta": w.n_eta,
        "seed": run.data["noise"]["seed"],
        "mode": run.data["sim"]["mode"],
        "outputs": sorted(outputs),
        "config": run.to_dict(),
    }


def _select_norm(dist: dict, norm: str) -> dict:
    return dist if norm == "both" else {norm: dist[norm]}


def cmd_simulate(run: RunConfig, args, out: Path) -> int:
    traj = simulate(run.solver)
    written = []
    for k, st in enumerate(traj.states):
        name = f"rho_t{k}.csv"
        write_csv(out / name, ["x", "rho"], zip(run.solver.grid.centers, st.rho))
        written.append(name)
    if traj.noise is not None:
        dr = traj.noise.delta_r
        write_csv(out / "noise.csv", ["k", "t", "eps"], (
            (str(i + 1), (i + 1) * dr, e) for i, e in enumerate(traj.noise.values)))
        written.append("noise.csv")
    m = manifest(run, "simulate", traj.dt, written)
    m["output_times"] = [st.t for st in traj.states]
    write_json(out / "manifest.json", m)
    return EXIT_OK


def _ensemble_rows(stats, k, quantiles):
    cols = [stats.x, stats.mean[k]]
    cols.append(stats.variance[k] if stats.variance is not None else np.full_like(stats.x, np.nan))
    cols += [stats.quantiles[q][k] for q in quantiles]
    if stats.reference is not None:
        cols.append(stats.reference[k])
    return zip(*cols)


def _write_ensemble(stats, run: RunConfig, out: Path, prefix: str, norm: str) -> list:
    qs = sorted(stats.quantiles)
    header = ["x", "mean", "variance"] + [quantile_label(q) for q in qs]
    if stats.reference is not None:
        header.append("reference")
    written = []
    for k, t in enumerate(stats.times):
        name = f"{prefix}_t{k}.csv"
        write_csv(out / name, header, _ensemble_rows(stats, k, qs))
        written.append(name)
    dist = {
        "reference": stats.reference_mode,
        "n_realizations": stats.n_realizations,
        "times": stats.times,
        "distances": [_select_norm(d, norm) for d in stats.distances],
    }
    write_json(out / f"{prefix}_distances.json", dist)
    written.append(f"{prefix}_distances.json")
    return written


def cmd_ensemble(run: RunConfig, args, out: Path) -> int:
    sweep = run.sweep_configs()
    if not sweep:
        stats = run_ensemble(run.ensemble(args.threads))
        written = _write_ensemble(stats, run, out, "ensemble", args.norm)
        write_json(out / "manifest.json", manifest(run, "ensemble", stats.dt, written))
        return EXIT_OK
    param = run.data["sweep"]["param"]
    rows, written = [], []
    for value, sub in sweep:
        stats = run_ensemble(sub.ensemble(args.threads))
        written += _write_ensemble(stats, sub, out, f"sweep_{param}_{value:g}", args.norm)
        for k, t in enumerate(stats.times):
            for which in (("scaled", "unscaled") if args.norm == "both" else (args.norm,)):
                d = stats.distances[k][which] if stats.distances else {"L1": np.nan, "L2": np.nan, "Linf": np.nan}
                rows.append((fmt(value), fmt(t), which, d["L1"], d["L2"], d["Linf"]))
    write_csv(out / "sweep.csv", [param, "t", "norm", "L1", "L2", "Linf"], rows)
    written.append("sweep.csv")
    write_json(out / "manifest.json", manifest(run, "ensemble", None, written))
    return EXIT_OK


def cmd_characteristics(run: RunConfig, args, out: Path) -> int:
    ch = run.data["characteristics"]
    starts = [(ch["t0"], x0) for x0 in run.start_positions()]
    base = run.solver
    rows, summary, bad = [], {"max_inversion": {}, "errors": []}, False

    def emit(label, traj):
        nonlocal bad
        traces = trace(traj, starts, interpolate=ch["interpolate"])
        for i, tr in enumerate(traces):
            if not tr.ok:
                summary["errors"].append({"trace_id": f"{label}:{i}", "error": tr.error})
                continue
            rows.extend((f"{label}:{i}", t, x) for t, x in tr.samples)
        inv = max_inversion(traces)
        summary["max_inversion"][label] = inv
        if not ch["interpolate"] and inv > base.grid.dx:
            bad = True
        return traces

    # every path shares the sNV time grid, whose CFL step is the most restrictive
    dt = cfl_timestep(base, base.weights())
    ref = simulate(replace(base, mode="NV"), dt=dt, record_history=True)
    emit("nv", ref)
    emit("nv-expected", simulate(replace(base, mode="NV-expected-velocity"), dt=dt, record_history=True))
    n_real = ch["realizations"] if base.noise_active else 0
    for r in range(n_real):
        cfg = replace(base, noise=replace(base.noise, realization_index=r))
        emit(f"snv{r}", simulate(cfg, dt=ref.dt, record_history=True))
    write_csv(out / "characteristics.csv", ["trace_id", "t", "x"], rows)
    summary["tolerance"] = base.grid.dx
    write_json(out / "characteristics_summary.json", summary)
    write_json(out / "manifest.json", manifest(run, "characteristics", ref.dt,
                                               ["characteristics.csv", "characteristics_summary.json"]))
    return EXIT_FAIL if bad else EXIT_OK


def cmd_diagnose(run: RunConfig, args, out: Path) -> int:
    traj = simulate(run.solver, record_history=True)
    report = diagnose(traj)
    write_json(out / "diagnostics.json", report.to_dict())
    write_json(out / "manifest.json", manifest(run, "diagnose", traj.dt, ["diagnostics.json"]))
    failed = [k for k, ok in report.flags().items() if not ok]
    if failed:
        print(json.dumps({"status": "fail", "failed": failed}), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_moments(run: RunConfig, args, out: Path) -> int:
    sv = run.solver.velocity
    ov = moment_overlay(sv, np.linspace(0.0, sv.base.rho_max, 201))
    cols = ["rho", "v", "mean", "variance", "lower", "upper"]
    write_csv(out / "moments.csv", cols, zip(*(ov[c] for c in cols)))
    m = manifest(run, "moments", None, ["moments.csv"])
    m["rho_star"] = ov["rho_star"]
    write_json(out / "manifest.json", m)
    return EXIT_OK


def cmd_compare(run: RunConfig, args, out: Path) -> int:
    ens_cfg = replace(run.ensemble(args.threads), reference="NV")
    stats = run_ensemble(ens_cfg)
    surrogate = simulate(replace(run.solver, mode="NV-expected-velocity"), dt=stats.dt)
    dx = run.solver.grid.dx
    table, rows = [], []
    for k, t in enumerate(stats.times):
        nv, nve = stats.reference[k], surrogate.states[k].rho
        pairs = {
            "mean-vs-NV": distance_metrics(stats.mean[k], nv, dx),
            "mean-vs-NV-expected-velocity": distance_metrics(stats.mean[k], nve, dx),
            "NV-vs-NV-expected-velocity": distance_metrics(nv, nve, dx),
        }
        table.append({"t": t, "pairs": {p: _select_norm(d, args.norm) for p, d in pairs.items()}})
        for p, d in pairs.items():
            for which, vals in _select_norm(d, args.norm).items():
                rows.append((fmt(t), p, which, vals["L1"], vals["L2"], vals["Linf"]))
    write_csv(out / "compare.csv", ["t", "pair", "norm", "L1", "L2", "Linf"], rows)
    write_json(out / "compare.json", {"n_realizations": stats.n_realizations, "table": table})
    written = ["compare.csv", "compare.json"] + _write_ensemble(stats, run, out, "ensemble", args.norm)
    write_json(out / "manifest.json", manifest(run, "compare", stats.dt, written))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "ensemble": cmd_ensemble,
    "characteristics": cmd_characteristics,
    "diagnose": cmd_diagnose,
    "moments": cmd_moments,
    "compare": cmd_compare,
}


def load_run(args) -> RunConfig:
    if not (args.config or args.preset):
        # environment fallbacks apply only when neither flag was given
        args.config, args.preset = _env("config"), _env("preset")
        if args.preset is not None and args.preset not in PRESETS:
            raise UsageError(f"unknown preset {args.preset!r}; choose from {', '.join(PRESETS)}")
    if args.config and args.preset:
        raise UsageError("--config and --preset are mutually exclusive")
    if args.config:
        run = parse_config(args.config)
    elif args.preset:
        run = load_preset(args.preset)
    else:
        raise UsageError("one of --config or --preset is required")
    overrides = {}
    if args.realizations is not None:
        overrides["ensemble"] = {"n_realizations": args.realizations}
    seed = None if args.seed is None else int(args.seed)
    if seed is not None or overrides:
        run = run.with_overrides(seed=seed, **overrides)
    return run


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads < 1:
            raise UsageError("--threads must be positive")
        run = load_run(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("always", BoundaryWarning)
            return COMMANDS[args.command](run, args, out)
    except (UsageError, ConfigError) as exc:
        print(f"snvtraffic: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantViolation as exc:
        print(json.dumps({"status": "fail", "error": str(exc), "realization": exc.realization}), file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
