"""Command-line front end: reproducible scenario runs with persisted
artifacts.

Subcommands
    universe-md  closed-universe MD, optionally with an open subdomain,
                 plus occupancy estimation
    grid         phase-space hierarchy solve and stationarity comparison
    bl           stochastic reservoir chain plus occupancy estimation
    gcmc         exchange-ensemble Monte Carlo oracle
    widom        chemical potential of a closed run by test insertion
    compare      per-bin agreement of two estimate tables
    report       summary of estimate tables, with normalization totals

Every run writes ``manifest.json`` beside its outputs; with a fixed
config and seed, single-threaded runs are byte-identical.  Exit codes:
0 success, 2 configuration error, 3 runtime error, 4 failed agreement
check (``compare`` only).
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np

from . import olvio
from .config import ScenarioConfig, load
from .errors import ConfigInvalid, OlvError
from .rng import stream

_Z_DEFAULT = 3.0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="olv",
        description="simulation and verification toolkit for open particle systems")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_command(name, helptext):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="scenario file (INI)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the [run] seed")
        p.add_argument("--threads", type=int, default=None,
                       help="override the [run] worker count")
        p.add_argument("--out", default=None,
                       help="override the [run] output directory")
        return p

    run_command("universe-md", "closed-universe MD run with estimators")
    run_command("grid", "hierarchy solve plus stationarity comparison")
    run_command("bl", "stochastic reservoir chain")
    run_command("gcmc", "exchange-ensemble Monte Carlo sampling")
    run_command("widom", "test-particle chemical potential")

    cmp_p = sub.add_parser("compare",
                           help="per-bin agreement of two estimate tables")
    cmp_p.add_argument("table_a")
    cmp_p.add_argument("table_b")
    cmp_p.add_argument("--z-threshold", type=float, default=_Z_DEFAULT,
                       help="largest per-bin z-score counted as agreement")
    cmp_p.add_argument("--out", default=None,
                       help="directory for compare.csv and its manifest")

    rep_p = sub.add_parser("report",
                           help="summary table of estimate CSVs")
    rep_p.add_argument("tables", nargs="+")
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _dispatch(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OlvError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3


def _dispatch(args) -> int:
    if args.command == "compare":
        return _cmd_compare(args)
    if args.command == "report":
        return _cmd_report(args)
    cfg = load(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    threads = args.threads if args.threads is not None else cfg.threads
    out = Path(args.out if args.out is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    handler = {
        "universe-md": _cmd_universe_md,
        "grid": _cmd_grid,
        "bl": _cmd_bl,
        "gcmc": _cmd_gcmc,
        "widom": _cmd_widom,
    }[args.command]
    extra = handler(cfg, seed, threads, out)
    olvio.write_manifest(out, command=args.command, config_text=cfg.text,
                         seed=seed, threads=threads, extra=extra)
    print(f"wrote {args.command} artifacts to {out}")
    return 0


# ---------------------------------------------------------------------------
# run subcommands


def _write_occupancy(path, hist) -> None:
    p = hist.probabilities()
    err = hist.errors if hist.errors is not None else np.zeros_like(p)
    rows = [[n, p[n], err[n]] for n in range(p.size)]
    olvio.write_estimate_csv(
        path, "occupancy_probability", "dimensionless",
        ["n", "probability", "error"], rows,
        meta={"stride": hist.stride, "total_samples": hist.total,
              "mean": hist.mean(), "variance": hist.variance()})


def _cmd_universe_md(cfg: ScenarioConfig, seed, threads, out) -> dict:
    from .engine import initial_ideal_gas, initial_lattice, run
    from .estimators import estimate_pn

    from dataclasses import replace

    universe = replace(cfg.build_universe(), seed=seed)
    potential = cfg.build_potential()
    engine_cfg = replace(cfg.build_engine(), seed=seed)
    region = cfg.build_region() if cfg.has("region") else None
    init_rng = stream(seed, "cli.initial")
    if cfg.initial_kind == "lattice":
        state = initial_lattice(universe, init_rng)
    else:
        state = initial_ideal_gas(universe, init_rng)

    result = run(universe, potential, engine_cfg, state, region=region)
    olvio.write_frames(out / "frames.olv1", result.frames)
    olvio.write_trajectory_jsonl(out / "trajectory.jsonl", result.frames,
                                 region=region)
    extra = {"frames": len(result.frames), "steps": engine_cfg.steps}
    if region is not None:
        olvio.write_events_csv(out / "events.csv", result.events,
                               dt=engine_cfg.dt)
        hist = estimate_pn(result.n_series,
                           rng=stream(seed, "cli.bootstrap"),
                           **cfg.estimator_options())
        _write_occupancy(out / "occupancy.csv", hist)
        extra["events"] = len(result.events)
    return extra


def _initial_ladder(cfg: ScenarioConfig, grid, closure, potential):
    """Equilibrium ladder at the closure's state point; a zero-density
    factorized reservoir starts from the empty subdomain instead."""
    import math

    from .hierarchy import GRAND_CANONICAL, DensityField, gc_ladder

    levels = cfg.get_int("grid", "levels", 2)
    if closure.mode == GRAND_CANONICAL:
        return gc_ladder(grid, closure.gc_beta, closure.gc_mu, closure.gc_h,
                         potential=None if potential.ideal else potential,
                         levels=levels)
    if closure.rho_res == 0.0:
        f1 = np.zeros((grid.nxo, grid.np_cells))
        f2 = None
        if levels == 2:
            f2 = np.zeros((grid.nxo, grid.np_cells, grid.nxo, grid.np_cells))
        return DensityField(grid, 1.0, f1, f2)
    # activity whose ideal momentum profile integrates to the reservoir
    # density: z = rho h / sqrt(2 pi M T)
    temp = closure.temperature
    z = closure.rho_res / math.sqrt(2.0 * math.pi * grid.mass * temp)
    return gc_ladder(grid, 1.0 / temp, temp * math.log(z),
                     potential=None if potential.ideal else potential,
                     levels=levels)


def _cmd_grid(cfg: ScenarioConfig, seed, threads, out) -> dict:
    from .hierarchy import compare, run_hierarchy

    grid = cfg.build_grid()
    closure = cfg.build_closure() if cfg.has("closure") else None
    potential = cfg.build_grid_potential()
    if closure is None and not grid.omega_is_universe:
        raise ConfigInvalid("an open subdomain needs a [closure] section")
    steps = cfg.get_int("grid", "steps", 0)
    initial = _initial_ladder(cfg, grid, closure, potential) \
        if closure is not None else None
    if initial is None:
        raise ConfigInvalid("grid runs on the whole box need a [closure] "
                            "section to define the initial data")
    olvio.write_field(out / "field_initial", initial, time=0.0)
    if steps > 0:
        final, masses, edges = run_hierarchy(
            initial, closure, None if potential.ideal else potential,
            steps=steps)
    else:
        final = initial.copy()
        masses = np.array([initial.total_mass()])
        edges = np.array([initial.momentum_edge_fraction()])
    olvio.write_field(out / "field_final", final, time=steps * grid.dt)
    olvio.write_estimate_csv(
        out / "masses.csv", "ladder_total_mass", "probability",
        ["step", "total_mass", "momentum_edge_fraction"],
        [[k, masses[k], edges[k]] for k in range(masses.size)])
    report = compare(final, initial)
    olvio.write_error_report_csv(out / "residual.csv", report)
    return {"steps": steps, "total_l1": report.total_l1,
            "mass_drift": float(np.abs(masses - masses[0]).max())}


def _cmd_bl(cfg: ScenarioConfig, seed, threads, out) -> dict:
    from .bergmann_lebowitz import BLState, run_bl
    from .estimators import estimate_pn

    kernel = cfg.build_kernel()
    potential = cfg.build_potential()
    steps = cfg.get_int("bl", "steps")
    dt_max = cfg.get_float("bl", "dt_max", 0.05)
    initial = BLState(0.0, np.zeros((0, 3)), np.zeros((0, 3)))
    result = run_bl(kernel, potential, initial, steps, dt_max,
                    stream(seed, "cli.bl"),
                    frame_stride=cfg.get_int("bl", "frame_stride", 0))
    olvio.write_jump_events_csv(out / "jump_events.csv", result.events)
    hist = estimate_pn(result.n_series, rng=stream(seed, "cli.bootstrap"),
                       **cfg.estimator_options())
    _write_occupancy(out / "occupancy.csv", hist)
    return {"jumps": len(result.events), "spans": steps}


def _cmd_gcmc(cfg: ScenarioConfig, seed, threads, out) -> dict:
    from .ensembles import gcmc_sample
    from .estimators import estimate_pn

    potential = cfg.build_potential()
    params = cfg.build_gc_params()
    sweeps = cfg.get_int("oracle", "sweeps")
    checkpoint_stride = cfg.get_int("oracle", "checkpoint_stride", 0)
    shards = max(1, int(threads))
    per_shard = sweeps // shards
    if per_shard < 1:
        raise ConfigInvalid("fewer sweeps than worker shards")

    runs = []
    for k in range(shards):
        n_sweeps = per_shard + (sweeps - per_shard * shards if k == 0 else 0)
        runs.append(gcmc_sample(
            potential, params, n_sweeps, stream(seed, f"cli.gcmc.{k}"),
            checkpoint_stride=checkpoint_stride if k == 0 else 0))

    olvio.write_checkpoints_jsonl(
        out / "checkpoints.jsonl",
        zip(runs[0].frame_sweeps, runs[0].frames))
    opts = cfg.estimator_options()
    hist = estimate_pn(runs[0].n_series, rng=stream(seed, "cli.bootstrap"),
                       **opts)
    if opts["stride"] is None:
        opts["stride"] = hist.stride  # shards merge at one common stride
        hist = estimate_pn(runs[0].n_series,
                           rng=stream(seed, "cli.bootstrap"), **opts)
    parts = [hist]
    for k, extra_run in enumerate(runs[1:], start=1):
        more = estimate_pn(extra_run.n_series,
                           rng=stream(seed, f"cli.bootstrap.{k}"), **opts)
        parts.append(more)
        hist = hist.merge(more)
    if len(parts) > 1:
        # merging keeps only counts; pool the per-shard bootstrap errors
        # of p = sum_i (t_i/T) p_i in quadrature, which is independent of
        # the shard order
        weighted = np.zeros(hist.counts.size)
        for h in parts:
            err = h.errors if h.errors is not None else np.zeros(h.counts.size)
            weighted[: err.size] += (h.total * err) ** 2
        hist.errors = np.sqrt(weighted) / hist.total
    _write_occupancy(out / "occupancy.csv", hist)
    acceptance = runs[0].acceptance()
    return {"sweeps": sweeps, "shards": shards,
            **{f"accept_{k}": v for k, v in sorted(acceptance.items())}}


def _cmd_widom(cfg: ScenarioConfig, seed, threads, out) -> dict:
    from .engine import initial_lattice, run
    from .ensembles import widom_mu

    universe = cfg.build_universe()
    potential = cfg.build_potential()
    engine_cfg = cfg.build_engine()
    from dataclasses import replace
    engine_cfg = replace(engine_cfg, seed=seed)
    params = cfg.build_gc_params(volume=universe.volume)
    state = initial_lattice(universe, stream(seed, "cli.initial"))
    result = run(universe, potential, engine_cfg, state)
    insertions = cfg.get_int("oracle", "insertions_per_frame", 200)
    estimate = widom_mu(result.frames, potential, universe, params,
                        stream(seed, "cli.widom"),
                        insertions_per_frame=insertions)
    olvio.write_frames(out / "frames.olv1", result.frames)
    olvio.write_estimate_csv(
        out / "mu.csv", "chemical_potential", "energy",
        ["mu", "error", "mu_ideal", "mu_excess", "insertions"],
        [[estimate.mu, estimate.error, estimate.mu_ideal,
          estimate.mu_excess, estimate.insertions]])
    return {"frames": len(result.frames), "insertions": estimate.insertions}


# ---------------------------------------------------------------------------
# comparison and reporting


def _load_binned(path):
    meta, columns, data = olvio.read_estimate_csv(path)
    if len(columns) < 3:
        raise ConfigInvalid(
            f"{path} needs bin, value, and error columns to compare")
    bins = data[:, 0].astype(int)
    return meta, dict(zip(bins, zip(data[:, 1], data[:, 2])))


def _cmd_compare(args) -> int:
    meta_a, rows_a = _load_binned(args.table_a)
    meta_b, rows_b = _load_binned(args.table_b)
    support = sorted(set(rows_a) | set(rows_b))
    table = []
    for n in support:
        va, ea = rows_a.get(n, (0.0, 0.0))
        vb, eb = rows_b.get(n, (0.0, 0.0))
        spread = float(np.hypot(ea, eb))
        gap = abs(va - vb)
        if spread > 0.0:
            z = gap / spread
        else:
            z = 0.0 if gap == 0.0 else float("inf")
        table.append([n, va, ea, vb, eb, z])
    z_scores = np.array([row[5] for row in table])
    max_z = float(z_scores.max()) if table else 0.0
    agree = bool(max_z <= args.z_threshold)
    verdict = "agree" if agree else "disagree"
    print(f"compared {len(table)} bins: max |z| = {max_z:.3f} "
          f"(threshold {args.z_threshold:g}) -> {verdict}")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        olvio.write_estimate_csv(
            out / "compare.csv",
            f"agreement[{meta_a.get('quantity', '?')}]", "z_score",
            ["n", "value_a", "error_a", "value_b", "error_b", "z"],
            table,
            meta={"verdict": verdict, "max_z": max_z,
                  "threshold": args.z_threshold,
                  "table_a": args.table_a, "table_b": args.table_b})
        inputs = "\n".join(
            hashlib.sha256(Path(p).read_bytes()).hexdigest()
            for p in (args.table_a, args.table_b))
        olvio.write_manifest(out, command="compare", config_text=inputs,
                             seed=0, threads=1,
                             extra={"verdict": verdict, "max_z": max_z})
    return 0 if agree else 4


def _cmd_report(args) -> int:
    width = max(len(Path(p).name) for p in args.tables)
    for path in args.tables:
        meta, columns, data = olvio.read_estimate_csv(path)
        name = Path(path).name
        quantity = meta.get("quantity", "?")
        pieces = [f"{name:<{width}}  {quantity}  rows={data.shape[0]}"]
        for j, col in enumerate(columns):
            if data.size and col not in ("n", "step", "level"):
                pieces.append(f"sum({col})={float(data[:, j].sum())!r}")
        print("  ".join(pieces))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
