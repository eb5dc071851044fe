"""Command-line entry points: ``nscrit run | diagnose | experiment``.

Exit codes: 0 completed, 2 blowup_proxy, 3 underresolved, 1 error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np
import scipy.fft

from . import __version__
from .config import Config, ConfigError, load_config
from .diagnostics import DEFAULT_EPS0, SWEEP_COLUMNS, cylinder_sweep
from .experiments import (
    BisectionError,
    InitialDataSpec,
    ProbeRegion,
    amplitude_bisection,
    calderon_split,
    decay_ensemble_experiment,
    default_runner,
    make_initial_data,
    modulation_sequence,
    scaling_covariance_experiment,
    translation_sequence,
    weak_convergence_experiment,
)
from .mild import Caps, Outcome, evolve, picard_solve
from .persist import load_trajectory, save_trajectory, write_csv, write_json, write_norms_csv
from .spectral import Grid, hs_norm

log = logging.getLogger("nscrit")

EXIT_CODES = {Outcome.COMPLETED: 0, Outcome.BLOWUP_PROXY: 2, Outcome.UNDERRESOLVED: 3}
EXPERIMENT_KINDS = ("scaling", "weak_convergence", "bisection", "calderon", "decay")


def _grid(cfg: Config) -> Grid:
    return Grid(cfg["grid.n"], cfg["grid.box_length"], cfg["grid.dealias_fraction"])


def _spec(cfg: Config) -> InitialDataSpec:
    d = cfg.section("data")
    return InitialDataSpec(
        family=d["family"],
        amplitude=d["amplitude"],
        seed=d["seed"],
        spectrum_slope=d["spectrum_slope"],
        offset=d["offset"],
        wavenumber=d["wavenumber"],
        ring_radius=d["ring_radius"],
        core_radius=d["core_radius"],
        path=d["path"],
    )


def _caps(cfg: Config) -> Caps:
    return Caps(cfg["caps.hhalf_factor"], cfg["caps.tail_fraction"], cfg["caps.x_norm"])


def _manifest(cfg: Config, **extra) -> dict:
    return {"version": __version__, "config_source": cfg.source, "config": cfg.as_dict(), **extra}


def _out_dir(cfg: Config, override) -> Path:
    out = Path(override) if override else Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(config_path, out_dir=None) -> int:
    cfg = load_config(config_path)
    grid = _grid(cfg)
    u0 = make_initial_data(_spec(cfg), grid)
    out = _out_dir(cfg, out_dir)
    with scipy.fft.set_workers(cfg["runtime.workers"]):
        if cfg["solver.method"] == "picard":
            p = cfg.section("picard")
            traj, report = picard_solve(
                u0,
                cfg["solver.horizon"],
                tol=p["tol"],
                max_iter=p["max_iter"],
                n_intervals=p["n_intervals"],
                quad_nodes=p["quad_nodes"],
                growth_window=p["growth_window"],
            )
        else:
            traj, report = evolve(
                u0,
                cfg["solver.horizon"],
                cfg["solver.dt"],
                stride=cfg["solver.stride"],
                caps=_caps(cfg) if cfg["solver.use_caps"] else None,
                cfl_limit=cfg["solver.cfl_limit"],
            )
    write_norms_csv(out / "norms.csv", report.x_norm_history)
    snaps = save_trajectory(out, traj) if cfg["output.snapshots"] else []
    write_json(
        out / "manifest.json",
        _manifest(
            cfg,
            report=report.as_dict(),
            initial_hhalf=hs_norm(u0, 0.5),
            snapshots=snaps,
            snapshot_times=[float(t) for t in traj.times],
        ),
    )
    print(f"{report.outcome.value}: t_end={report.t_end!r} ({out})")
    return EXIT_CODES[report.outcome]


def _parse_point(text: str) -> tuple:
    vals = tuple(float(x) for x in text.split(","))
    if len(vals) != 3:
        raise ValueError(f"expected x,y,z, got {text!r}")
    return vals


def _lattice_centers(k: int, box_length: float) -> list[tuple]:
    axis = [(i + 0.5) * box_length / k for i in range(k)]
    return [(x, y, z) for x in axis for y in axis for z in axis]


def cmd_diagnose(
    trajectory_dir,
    radii,
    centers=None,
    centers_grid: int = 3,
    center_t: float | None = None,
    eps0: float = DEFAULT_EPS0,
    n_points: int = 16,
    workers: int = 1,
    out_dir=None,
) -> int:
    traj = load_trajectory(trajectory_dir)
    if center_t is None:
        center_t = traj.horizon
    if not centers:
        centers = _lattice_centers(centers_grid, traj.grid.box_length)
    out = Path(out_dir) if out_dir else Path(trajectory_dir) / "diagnose"
    out.mkdir(parents=True, exist_ok=True)
    with scipy.fft.set_workers(workers):
        rows = cylinder_sweep(traj, centers, radii, center_t, eps0, n_points, workers)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    ratios = [r["energy_over_r"] for r in rows if math.isfinite(r["energy_over_r"])]
    summary = {
        "eps0": eps0,
        "center_t": center_t,
        "rows": len(rows),
        "small": sum(r["classification"] == "small" for r in rows),
        "not_small": sum(r["classification"] == "not_small" for r in rows),
        "max_ckn_value": max(r["ckn_value"] for r in rows),
        "max_energy_over_r": max(ratios) if ratios else None,
        "radii": list(radii),
        "n_points": n_points,
    }
    write_json(out / "summary.json", summary)
    print(f"{summary['small']} small / {summary['not_small']} not_small ({out})")
    return 0


def _exp_scaling(cfg, grid, out, workers):
    u0 = make_initial_data(_spec(cfg), grid)
    rep = scaling_covariance_experiment(
        u0, cfg["experiment.lam"], cfg["solver.horizon"], cfg["solver.dt"], _caps(cfg), workers
    )
    cols = ("lam", "T", "dt", "n_coarse", "n_fine", "outcome_coarse", "outcome_fine", "flagged", "discrepancy")
    write_csv(out / "scaling.csv", cols, [rep])
    return rep


def _exp_weak(cfg, grid, out, workers):
    u0 = make_initial_data(_spec(cfg), grid)
    probe = ProbeRegion(cfg["probe.center"], cfg["probe.radius"], cfg["probe.n_points"])
    kind = cfg["experiment.perturbation"]
    amp = cfg["experiment.perturbation_amplitude"]
    if kind == "modulation":
        ws = modulation_sequence(u0, amp, cfg["experiment.wavenumbers"])
    elif kind == "translation":
        L = grid.box_length
        bump = make_initial_data(InitialDataSpec("localized_bump", amplitude=amp), grid)
        k_max = cfg["experiment.k_max"]
        base = np.asarray(probe.center) - L / 2
        shifts = [tuple(base + np.array([k / k_max * L / 2, 0.0, 0.0])) for k in range(1, k_max + 1)]
        ws = translation_sequence(bump, shifts)
    else:
        raise ConfigError(f"experiment.perturbation must be 'modulation' or 'translation', got {kind!r}")
    rep = weak_convergence_experiment(
        u0, ws, cfg["solver.horizon"], probe, cfg["solver.dt"], kind, cfg["solver.stride"], _caps(cfg), workers
    )
    write_csv(out / "weak_convergence.csv", ("k", "outcome", "l3_diff", "sup_diff", "grad_sup_diff"), rep["rows"])
    rep["perturbation"] = rep.pop("kind")
    return rep


def _exp_bisection(cfg, grid, out, workers):
    bracket = cfg["experiment.bracket"]
    if len(bracket) != 2:
        raise ConfigError("bisection needs experiment.bracket = a_lo, a_hi")
    runner = default_runner(grid, cfg["solver.horizon"], cfg["solver.dt"], _caps(cfg))
    res = amplitude_bisection(_spec(cfg), tuple(bracket), cfg["experiment.tol"], runner)
    rows = [(a, r.outcome.value, r.t_end) for a, r in sorted(res.reports.items())]
    write_csv(out / "bisection.csv", ("amplitude", "outcome", "t_end"), rows)
    return res.as_dict()


def _exp_calderon(cfg, grid, out, workers):
    u0 = make_initial_data(_spec(cfg), grid)
    total = hs_norm(u0, 0.5)
    eta = cfg["experiment.eta_fraction"] * total
    s = calderon_split(u0, eta)
    exact = bool(np.array_equal(s.a0.coeffs + s.v0.coeffs, u0.coeffs))
    rep = {
        "u0_hhalf": total,
        "eta": eta,
        "cutoff_radius": s.cutoff_radius if math.isfinite(s.cutoff_radius) else None,
        "a0_hhalf": s.a0_hhalf,
        "v0_l2": s.v0_l2,
        "reconstruction_exact": exact,
        "message": s.message,
    }
    cols = ("u0_hhalf", "eta", "cutoff_radius", "a0_hhalf", "v0_l2", "reconstruction_exact")
    write_csv(out / "calderon.csv", cols, [rep])
    return rep


def _exp_decay(cfg, grid, out, workers):
    rep = decay_ensemble_experiment(
        _spec(cfg), cfg["experiment.seeds"], grid, cfg["solver.horizon"], cfg["solver.dt"], cfg["solver.stride"], workers
    )
    write_csv(out / "decay.csv", ("seed", "outcome", "sup_nse", "sup_heat", "relative_gap"), rep["members"])
    return rep


_EXPERIMENTS = {
    "scaling": _exp_scaling,
    "weak_convergence": _exp_weak,
    "bisection": _exp_bisection,
    "calderon": _exp_calderon,
    "decay": _exp_decay,
}


def cmd_experiment(kind: str, config_path, out_dir=None) -> int:
    if kind not in _EXPERIMENTS:
        print(f"error: unknown experiment kind {kind!r}; choose from {', '.join(EXPERIMENT_KINDS)}", file=sys.stderr)
        return 1
    cfg = load_config(config_path)
    grid = _grid(cfg)
    out = _out_dir(cfg, out_dir)
    workers = cfg["runtime.workers"]
    with scipy.fft.set_workers(workers):
        rep = _EXPERIMENTS[kind](cfg, grid, out, workers)
    write_json(out / "report.json", {**rep, "kind": kind})
    write_json(out / "manifest.json", _manifest(cfg, kind=kind))
    print(f"{kind}: report written to {out / 'report.json'}")
    return 0


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nscrit", description="Critical-norm Navier-Stokes experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve from a config file")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides output.dir)")

    d = sub.add_parser("diagnose", help="cylinder sweep over a stored trajectory")
    d.add_argument("trajectory_dir")
    d.add_argument("--radii", type=_floats, default=[0.4, 0.2])
    d.add_argument("--center", action="append", type=_parse_point, help="x,y,z (repeatable)")
    d.add_argument("--centers-grid", type=int, default=3, help="k for a k^3 lattice of centers")
    d.add_argument("--center-t", type=float, default=None, help="cylinder top time (default: horizon)")
    d.add_argument("--eps0", type=float, default=DEFAULT_EPS0)
    d.add_argument("--n-points", type=int, default=16)
    d.add_argument("--workers", type=int, default=1)
    d.add_argument("--out")

    e = sub.add_parser("experiment", help="run an experiment harness")
    e.add_argument("kind", help=", ".join(EXPERIMENT_KINDS))
    e.add_argument("config")
    e.add_argument("--out")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out)
        if args.command == "diagnose":
            return cmd_diagnose(
                args.trajectory_dir,
                args.radii,
                args.center,
                args.centers_grid,
                args.center_t,
                args.eps0,
                args.n_points,
                args.workers,
                args.out,
            )
        return cmd_experiment(args.kind, args.config, args.out)
    except (ValueError, RuntimeError, OSError, BisectionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
