"""Command-line entry point ``invdyn``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import harness
from .dynamics import (
    MODES,
    POSITIONS_ONLY,
    DriftError,
    ObservationSeries,
    SphereSystem,
    integrate,
    read_trajectory_csv,
    write_csv,
)
from .geometry import DomainError, wrap_to_fundamental_domain
from .periodicity import detect_closed_orbit, write_orbit_report
from .potential import FourierSeries, gradient, sup_bound_c0
from .reconstruction import (
    coverage_metrics,
    extract_force,
    fit_potential,
    key_set_diagnostic,
    sup_norm_error,
    write_reconstruction_csv,
)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3

logger = logging.getLogger("invdyn")


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file")
    common.add_argument("--out-dir", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int)
    common.add_argument("--dt", type=float)
    common.add_argument("--t-final", type=float, help="integration horizon T")
    common.add_argument("--kmax", type=int, help="band limit K_max")
    common.add_argument("--mode", choices=MODES)
    common.add_argument("--csv-stride", type=int, help="keep every n-th trajectory row in CSVs")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="invdyn", description=(
        "Simulate natural mechanical systems on tori and the sphere, detect closed orbits "
        "and reconstruct potentials from observed trajectories."))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenario", parents=[common], help="run one scenario and check its thresholds")
    p.add_argument("name", nargs="?", choices=harness.SCENARIOS, help="scenario (else from --config)")

    p = sub.add_parser("batch", parents=[common], help="run several scenarios, one output dir each")
    p.add_argument("--scenarios", default=",".join(harness.SCENARIOS),
                   help="comma-separated scenario names (default: all)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p = sub.add_parser("simulate", parents=[common], help="integrate a scenario's system and write CSVs")
    p.add_argument("name", nargs="?", choices=harness.SCENARIOS)
    p.add_argument("--direction", type=_floats, help="initial momentum direction, e.g. 1,1.618")

    p = sub.add_parser("reconstruct", parents=[common],
                       help="fit a potential to a trajectory CSV (or to a fresh torus run)")
    p.add_argument("--trajectory", type=Path, help="trajectory CSV with t,q1,q2[,p1,p2]")
    p.add_argument("--potential", type=Path, help="ground-truth potential CSV (k1,k2,a,b)")

    p = sub.add_parser("detect-orbits", parents=[common], help="search seeded starts for closed orbits")
    p.add_argument("name", nargs="?", choices=("torus-reconstruct", "sphere-closed", "low-energy"))
    p.add_argument("--count", type=int, help="number of consecutive seeds")
    p.add_argument("--eps-close", type=float)
    p.add_argument("--t-max", type=float)
    p.add_argument("--amplitude", type=float, help="potential amplitude; 0 gives free flow")
    p.add_argument("--direction", type=_floats)

    p = sub.add_parser("coverage", parents=[common], help="occupancy and circle crossings of a trajectory")
    p.add_argument("--trajectory", type=Path)
    p.add_argument("--amplitude", type=float, help="potential amplitude; 0 gives free flow")
    p.add_argument("--direction", type=_floats)
    p.add_argument("--checkpoints", type=_floats, help="times at which to report crossing counts")
    return parser


def _overrides(args, scenario: Optional[str] = None) -> dict:
    over = {
        "scenario": scenario,
        "output_dir": args.out_dir,
        "seed": args.seed,
        "dt": args.dt,
        "t_final": args.t_final,
        "k_max": args.kmax,
        "mode": args.mode,
        "csv_stride": args.csv_stride,
    }
    for name in ("count", "eps_close", "t_max", "amplitude"):
        over[name] = getattr(args, name, None)
    return over


def _config(args, scenario: Optional[str] = None, fallback: str = "torus-reconstruct"):
    over = _overrides(args, scenario)
    if args.config is not None:
        return harness.load_config(args.config, over)
    if over["scenario"] is None:
        over["scenario"] = fallback
    return harness.parse_config("", over)


def _write_summary(out: Path, doc: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(harness.jsonable(doc), indent=2) + "\n")


def _print_report(report: harness.ScenarioReport) -> None:
    print(f"{report.config.scenario}: {report.status.upper()} ({report.duration:.1f} s) {report.message}")
    for name, ok in report.checks.items():
        print(f"  {'ok ' if ok else 'BAD'} {name}")
    print(f"  summary: {Path(report.config.output_dir) / 'summary.json'}")


def cmd_scenario(args) -> int:
    report = harness.run_scenario(_config(args, args.name))
    _print_report(report)
    return report.exit_code


def _batch_one(text: Optional[str], over: dict) -> tuple[int, str]:
    try:
        report = harness.run_scenario(harness.parse_config(text or "", over))
    except harness.ConfigError as err:
        return EXIT_USAGE, f"{over['scenario']}: config error: {err}"
    return report.exit_code, f"{report.config.scenario}: {report.status.upper()} " \
                             f"({report.duration:.1f} s) {report.message}"


def cmd_batch(args) -> int:
    names = [s.strip() for s in args.scenarios.split(",") if s.strip()]
    unknown = [s for s in names if s not in harness.SCENARIOS]
    if unknown:
        raise UsageError(f"unknown scenarios: {', '.join(unknown)}")
    text = args.config.read_text() if args.config else None
    if text is not None:
        # the batch fixes the scenario per run
        text = "\n".join("" if ln.split("#")[0].strip().startswith("scenario") else ln
                         for ln in text.splitlines())
    root = Path(args.out_dir or "out")
    jobs = []
    for name in names:
        over = _overrides(args, name)
        over["output_dir"] = str(root / name)
        jobs.append((text, over))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_batch_one, *zip(*jobs)))
    else:
        results = [_batch_one(*job) for job in jobs]
    for _, line in results:
        print(line)
    return max(code for code, _ in results)


def cmd_simulate(args) -> int:
    cfg = _config(args, args.name)
    system, truth, state0 = harness.setup_run(cfg, args.direction)
    traj = integrate(state0, system, cfg.dt, cfg.t_final, cfg.drift_tol)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = ["trajectory.csv"]
    traj.to_csv(out / "trajectory.csv", cfg.csv_stride)
    if truth is not None:
        name = "rho.csv" if cfg.scenario == "conformal-reconstruct" else "potential.csv"
        truth.to_csv(out / name)
        files.append(name)
    summary = {"command": "simulate", "config": cfg.to_dict(), "energy0": traj.energy0,
               "drift": traj.drift, "steps": len(traj) - 1, "files": files}
    if truth is not None:
        summary.update(C0_l1=sup_bound_c0(truth), C0_grid=truth.grid_sup())
    _write_summary(out, summary)
    print(f"simulated {len(traj) - 1} steps, energy {traj.energy0:.12g}, drift {traj.drift:.3e} -> {out}")
    return EXIT_PASS


def _observation_from_csv(path: Path, mode: str, truth: Optional[FourierSeries]) -> ObservationSeries:
    cols = read_trajectory_csv(path)
    names = [n for n in ("q1", "q2", "q3") if n in cols]
    if "t" not in cols or len(names) < 2:
        raise UsageError(f"{path} needs columns t,q1,q2")
    t = cols["t"]
    q = np.column_stack([cols[n] for n in names])
    dt = float(np.median(np.diff(t))) if len(t) > 1 else 0.0
    if not dt > 0 or not np.allclose(np.diff(t), dt, rtol=1e-6, atol=0.0):
        raise UsageError(f"{path} is not uniformly sampled in t")
    if mode == POSITIONS_ONLY:
        if len(t) < 5:
            raise UsageError("positions-only reconstruction needs at least 5 rows")
        lift = np.unwrap(q, axis=0, period=2.0 * np.pi)
        vel = (lift[2:] - lift[:-2]) / (2.0 * dt)
        acc = (vel[2:] - vel[:-2]) / (2.0 * dt)
        return ObservationSeries(mode, t[2:-2], wrap_to_fundamental_domain(q[2:-2]), vel[1:-1], acc, dt)
    if truth is None:
        raise UsageError("exact mode on a CSV needs --potential to evaluate forces")
    acc = -2.0 * gradient(truth, q)
    pnames = [n.replace("q", "p") for n in names]
    vel = 2.0 * np.column_stack([cols[n] for n in pnames]) if all(n in cols for n in pnames) else np.zeros_like(q)
    return ObservationSeries(mode, t, wrap_to_fundamental_domain(q), vel, acc, dt)


def cmd_reconstruct(args) -> int:
    if args.trajectory is None:
        if args.potential is not None:
            raise UsageError("--potential without --trajectory: give both, or neither for a fresh run")
        report = harness.run_scenario(_config(args))
        _print_report(report)
        return report.exit_code
    cfg = _config(args)
    truth = FourierSeries.from_csv(args.potential) if args.potential else None
    obs = _observation_from_csv(args.trajectory, cfg.mode, truth)
    samples = extract_force(obs, cfg.stride)
    try:
        res = fit_potential(samples, cfg.k_max, cfg.rank_tol)
    except ValueError as err:
        raise UsageError(f"{err}; write the trajectory with a smaller --csv-stride or set stride lower") from err
    key = key_set_diagnostic(samples, cfg.k_max, cfg.rank_tol)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    res.fitted.to_csv(out / "fitted_potential.csv")
    files = ["fitted_potential.csv"]
    summary = {"command": "reconstruct", "config": cfg.to_dict(), "n_samples": len(samples),
               "residual_rms": res.residual_rms, "condition": key.condition, "sigma_min": key.sigma_min,
               "rank": key.rank, "rank_deficient": res.rank_deficient, "verdict": key.verdict}
    if truth is not None:
        write_reconstruction_csv(out / "reconstruction.csv", truth, res.fitted)
        files.append("reconstruction.csv")
        summary["sup_error"] = sup_norm_error(res.fitted, truth)
    summary["files"] = files
    _write_summary(out, summary)
    print(f"verdict {key.verdict}, condition {key.condition:.3e}, residual {res.residual_rms:.3e}"
          + (f", sup error {summary['sup_error']:.3e}" if truth is not None else "") + f" -> {out}")
    return EXIT_PASS if key.is_key else EXIT_FAIL


def cmd_detect_orbits(args) -> int:
    cfg = _config(args, args.name)
    count = cfg.count or 10
    seeds = [cfg.seed + i for i in range(count)]
    starts, records, system = [], [], None
    for s in seeds:
        system, _, state = harness.setup_run(dataclasses.replace(cfg, seed=s), args.direction)
        starts.append(state)
        records.append(detect_closed_orbit(state, system, cfg.eps_close, t_max=cfg.t_max, dt=cfg.dt,
                                           drift_tol=cfg.drift_tol))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    sphere = isinstance(system, SphereSystem)
    write_orbit_report(out / "orbits.csv", seeds, starts, records, sphere=sphere)
    closed = sum(r is not None for r in records)
    _write_summary(out, {"command": "detect-orbits", "config": cfg.to_dict(), "count": count,
                         "closed": closed, "periods": [r.period if r else None for r in records],
                         "files": ["orbits.csv"]})
    print(f"{closed}/{count} closed orbits within T_max = {cfg.t_max:g} -> {out / 'orbits.csv'}")
    return EXIT_PASS


def cmd_coverage(args) -> int:
    cfg = _config(args)
    if args.trajectory is not None:
        cols = read_trajectory_csv(args.trajectory)
        q = np.column_stack([cols[n] for n in ("q1", "q2", "q3") if n in cols])
        t = cols["t"]
    else:
        system, _, state0 = harness.setup_run(cfg, args.direction)
        if isinstance(system, SphereSystem):
            raise UsageError("coverage is defined for torus trajectories")
        traj = integrate(state0, system, cfg.dt, cfg.t_final, cfg.drift_tol)
        q, t = traj.positions, traj.t
    full = coverage_metrics(q, cfg.grid_n, cfg.circle_radius)
    rows = []
    for tc in args.checkpoints or [t[-1]]:
        n = int(np.searchsorted(t, tc, side="right"))
        part = coverage_metrics(q[:n], cfg.grid_n, cfg.circle_radius, q_star=full.q_star)
        rows.append([tc, part.occupancy, part.crossing_count])
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "coverage.csv", ["t", "occupancy", "crossing_count"], rows)
    _write_summary(out, {"command": "coverage", "config": cfg.to_dict(), "occupancy": full.occupancy,
                         "q_star": full.q_star, "crossing_count": full.crossing_count,
                         "files": ["coverage.csv"]})
    for tc, occ, cc in rows:
        print(f"t = {tc:g}: occupancy {occ:.4f}, crossings {cc}")
    return EXIT_PASS


COMMANDS = {
    "scenario": cmd_scenario,
    "batch": cmd_batch,
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "detect-orbits": cmd_detect_orbits,
    "coverage": cmd_coverage,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (harness.ConfigError, UsageError, DomainError, OSError) as err:
        print(f"invdyn {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DriftError as err:
        print(f"invdyn {args.command}: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
