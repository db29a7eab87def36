"""``logwave`` batch front-end.

    logwave run|sweep|well|check|fit --config <path> [--out <dir>] [--workers N]

Every subcommand writes CSV with a header row and 17 significant digits.
The exit status is 0 iff every invariant engaged by the subcommand holds.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis
from .config import ExperimentConfig, ParseError, load_config
from .fem1d import assemble, build_mesh, project_initial
from .integrator import DivergenceError, SimConfig, StepError, Trajectory, make_profile, simulate
from .lognonlin import GridFunction, well_status

logger = logging.getLogger("logwave")

ENERGY_COLUMNS = (
    "t", "kinetic", "dirichlet", "mass", "log_term", "gamma_term", "penalty",
    "E", "E_pen", "E_plus", "I1", "J1", "in_well",
)  # fmt: skip
SUMMARY_COLUMNS = (
    "status", "T", "dt", "m", "epsilon", "E0", "E_final", "max_dissipation_excess", "dissipation_ok",
    "initial_in_well", "well_ok", "beta_hat", "r2", "envelope_ok", "beta_paper", "nakao_ok",
    "apriori_max", "max_penalty_l2sq",
)  # fmt: skip
SWEEP_COLUMNS = ("epsilon", "m", "max_penalty_l2sq", "beta_hat", "nakao_ok")
WELL_COLUMNS = ("gamma", "I1", "J1", "d_bound", "in_well")
FIT_COLUMNS = ("t_start", "t_end", "beta_hat", "r2", "beta_paper", "delta_used", "envelope_ok")
CHECK_COLUMNS = ("suite", "item", "value", "ok")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return "na"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


# --------------------------------------------------------------------------
# single run


def energy_rows(traj: Trajectory):
    for r in traj.reports:
        yield [getattr(r, c) for c in ENERGY_COLUMNS]


def summarize(traj: Trajectory, window_fraction: float, fit_tol: float, status: str = "ok") -> dict:
    """Invariant checks for one trajectory; ``None`` marks a check that was not engaged."""
    cfg = traj.config
    E = traj.series("E")
    out = {
        "status": status,
        "T": cfg.T,
        "dt": cfg.time_grid()[0],
        "m": cfg.m,
        "epsilon": cfg.epsilon,
        "E0": E[0],
        "E_final": E[-1],
        "apriori_max": float(np.max(traj.apriori_series())),
        "max_penalty_l2sq": traj.max_penalty_l2sq(),
    }
    excess = analysis.dissipation_violations(traj)
    out["max_dissipation_excess"] = float(excess.max()) if excess.size else 0.0
    out["dissipation_ok"] = bool(np.all(excess <= 0))
    well_data = traj.initial_in_well()
    out["initial_in_well"] = well_data
    out["well_ok"] = all(r.in_well for r in traj.reports) if well_data else None
    out.update(beta_hat=None, r2=None, envelope_ok=None, beta_paper=None, nakao_ok=None)
    if well_data and status == "ok":
        try:
            fit = analysis.fit_decay(traj, window_fraction, fit_tol)
        except analysis.FitError as exc:
            logger.warning("decay fit skipped: %s", exc)
        else:
            out.update(beta_hat=fit.beta_hat, r2=fit.r2, envelope_ok=fit.envelope_ok, beta_paper=fit.beta_paper)
            if fit.below_guarantee:
                logger.warning("fitted rate %.4g is below the guaranteed rate %.4g", fit.beta_hat, fit.beta_paper)
        if cfg.T >= 10:
            nak = nakao_for(traj)
            if cfg.a == 1 and cfg.b == 1:
                out["nakao_ok"] = nak.ok
            else:
                logger.info("Nakao check (informational, a=%g b=%g): %s", cfg.a, cfg.b, nak.ok)
    return out


def nakao_for(traj: Trajectory) -> analysis.NakaoResult:
    gamma = traj.config.gamma
    d2, d3, _ = analysis.nakao_constants(analysis.optimal_delta(gamma), gamma)
    return analysis.nakao_difference_check(analysis.unit_spaced(traj.times, traj.series("E_pen")), d2, d3)


def failed_invariants(summary: dict) -> list[str]:
    names = {
        "dissipation_ok": "energy dissipation",
        "well_ok": "well invariance",
        "envelope_ok": "decay envelope",
        "nakao_ok": "Nakao difference inequality",
    }
    bad = [label for key, label in names.items() if summary.get(key) is False]
    if summary.get("beta_hat") is not None and not summary["beta_hat"] > 0:
        bad.append("positive decay rate")
    return bad


def run_one(sim: SimConfig, out_dir: Path, window_fraction: float, fit_tol: float) -> dict:
    """Simulate, write ``energy.csv`` + ``summary.csv`` into ``out_dir``, return the summary."""
    status = "ok"
    try:
        traj = simulate(sim)
    except (StepError, DivergenceError) as exc:
        traj = exc.trajectory
        status = f"{type(exc).__name__} at t={fmt(exc.t)}"
        if traj is None:
            raise
    write_csv(out_dir / "energy.csv", ENERGY_COLUMNS, energy_rows(traj))
    summary = summarize(traj, window_fraction, fit_tol, status)
    write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, [[summary[c] for c in SUMMARY_COLUMNS]])
    return summary


def cmd_run(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    summary = run_one(cfg.sim, out, cfg.window_fraction, cfg.fit_tol)
    if summary["status"] != "ok":
        logger.error("solver failure: %s (last snapshot written to %s)", summary["status"], out / "energy.csv")
        return 2
    bad = failed_invariants(summary)
    for name in bad:
        logger.error("invariant failed: %s", name)
    return 1 if bad else 0


# --------------------------------------------------------------------------
# sweep


def _cell_dir(out: Path, sim: SimConfig) -> Path:
    return out / f"eps_{sim.epsilon:.6g}_m_{sim.m}"


def _sweep_cell(args):
    sim, out, wf, tol = args
    return run_one(sim, _cell_dir(out, sim), wf, tol)


def penalty_trend(rows: list[tuple[float, int, float]]) -> tuple[bool, list[float]]:
    """Strict decrease of ``max ||chi u||^2`` along decreasing epsilon, per m, plus consecutive ratios."""
    ok = True
    ratios = []
    for m in sorted({r[1] for r in rows}):
        cells = sorted((r for r in rows if r[1] == m), key=lambda r: -r[0])
        for (e1, _, p1), (e2, _, p2) in zip(cells, cells[1:]):
            if not p2 < p1:
                ok = False
            ratios.append(p1 / p2 if p2 > 0 else math.inf)
    return ok, ratios


def cmd_sweep(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    plan = cfg.sweep_plan()
    jobs = [(sim, out, cfg.window_fraction, cfg.fit_tol) for sim in plan]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            summaries = list(pool.map(_sweep_cell, jobs))
    else:
        summaries = [_sweep_cell(j) for j in jobs]
    rows = [[s.epsilon, s.m, r["max_penalty_l2sq"], r["beta_hat"], r["nakao_ok"]] for s, r in zip(plan, summaries)]
    write_csv(out / "sweep_summary.csv", SWEEP_COLUMNS, rows)

    status = 0
    for sim, r in zip(plan, summaries):
        if r["status"] != "ok":
            logger.error("cell eps=%g m=%d: %s", sim.epsilon, sim.m, r["status"])
            status = 2
        for name in failed_invariants(r):
            logger.error("cell eps=%g m=%d: invariant failed: %s", sim.epsilon, sim.m, name)
            status = status or 1
    if cfg.sweep_epsilon and len(cfg.sweep_epsilon) > 1:
        decreasing, ratios = penalty_trend([(s.epsilon, s.m, r["max_penalty_l2sq"]) for s, r in zip(plan, summaries)])
        logger.info("penalty ratios between consecutive epsilon levels: %s", ", ".join(f"{q:.4g}" for q in ratios))
        if not decreasing:
            logger.error("invariant failed: penalty vanishing (max ||chi u||^2 not decreasing with epsilon)")
            status = status or 1
        if any(not 5 <= q <= 20 for q in ratios):
            logger.warning("penalty ratios outside the linear-in-epsilon band [5, 20]")
    return status


# --------------------------------------------------------------------------
# well / check / fit


def initial_well_status(sim: SimConfig):
    fam = sim.family()
    mesh = build_mesh(fam.ambient, sim.m)
    sys_ = assemble(mesh)
    g0, _ = project_initial(make_profile(sim.u0), make_profile(sim.u1), mesh, fam, sim.projection)
    return well_status(GridFunction(mesh, g0), sys_.stiffness, sys_.mass, sim.gamma)


def cmd_well(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    ws = initial_well_status(cfg.sim)
    row = [cfg.sim.gamma, ws.I1, ws.J1, ws.d_bound, ws.in_well]
    write_csv(out / "well.csv", WELL_COLUMNS, [row])
    sys.stdout.write(csv_text(WELL_COLUMNS, [row]))
    return 0


def check_rows(cfg: ExperimentConfig):
    """Rows ``(suite, item, value, ok)`` for the inequality suites."""
    rows = [("meta", "seed", cfg.check_seed, True)]
    sim = cfg.sim
    mesh = build_mesh(sim.ambient, cfg.check_m)
    corpus = analysis.random_fourier_corpus(mesh, cfg.check_corpus_size, cfg.check_seed)
    for a_param in cfg.check_a_params:
        slacks = np.array([analysis.log_sobolev_slack(u, a_param) for u in corpus])
        violations = int(np.sum(slacks < 0))
        rows.append(("log_sobolev", f"a={a_param:g} min_slack", float(slacks.min()), violations == 0))
        rows.append(("log_sobolev", f"a={a_param:g} violations", violations, violations == 0))
    for w0, a in ((0.0, 1.0), (1.0, 1.0), (0.5, 2.0), (3.0, 1.5)):
        ok, slack = analysis.gronwall_self_consistency(w0, a)
        rows.append(("log_gronwall", f"w0={w0:g} a={a:g} min_rel_slack", slack, ok))
    for gamma in cfg.check_gammas:
        A = 4.0 * (4.0 + 2.0 / (2.0 - gamma))
        formula = (16.0 - math.sqrt(256.0 + 4.0 * A)) / (-2.0 * A)
        numeric = analysis.optimal_delta_numeric(gamma)
        diff = abs(formula - numeric)
        rows.append(("optimal_delta", f"gamma={gamma:g} formula", formula, 0 < formula < 0.125))
        rows.append(("optimal_delta", f"gamma={gamma:g} abs_diff", diff, diff <= 1e-4))
    return rows


def cmd_check(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    rows = check_rows(cfg)
    write_csv(out / "check.csv", CHECK_COLUMNS, rows)
    bad = [r for r in rows if not r[3]]
    for r in bad:
        logger.error("check failed: %s %s = %s", r[0], r[1], fmt(r[2]))
    return 1 if bad else 0


def read_energy_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != ENERGY_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        cols: dict[str, list] = {c: [] for c in ENERGY_COLUMNS}
        for row in reader:
            for c in ENERGY_COLUMNS:
                cols[c].append(row[c] == "true" if c == "in_well" else float(row[c]))
    return {c: np.array(v) for c, v in cols.items()}


def cmd_fit(cfg: ExperimentConfig, out: Path, workers: int, energy: Path | None = None) -> int:
    path = energy or out / "energy.csv"
    data = read_energy_csv(path)
    fit = analysis.fit_series(data["t"], data["E"], cfg.sim.gamma, cfg.window_fraction, cfg.fit_tol)
    row = [fit.window[0], fit.window[1], fit.beta_hat, fit.r2, fit.beta_paper, fit.delta_used, fit.envelope_ok]
    write_csv(out / "fit.csv", FIT_COLUMNS, [row])
    sys.stdout.write(csv_text(FIT_COLUMNS, [row]))
    return 0 if fit.beta_hat > 0 and fit.envelope_ok else 1


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "well": cmd_well, "check": cmd_check, "fit": cmd_fit}


def resolve_workers(arg: int | None, cfg: ExperimentConfig) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("LOGWAVE_WORKERS")
    if env:
        return int(env)
    if cfg.workers:
        return cfg.workers
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="logwave", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, help="output directory (default: output.dir from the config)")
    p.add_argument("--workers", type=int, help="sweep worker processes (default: $LOGWAVE_WORKERS or CPU count)")
    p.add_argument("--energy", type=Path, help="energy.csv to post-process with 'fit' (default: <out>/energy.csv)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
    except ParseError as exc:
        logger.error("config error: %s", exc)
        return 2
    out = args.out or Path(cfg.out_dir)
    workers = resolve_workers(args.workers, cfg)
    if workers < 1:
        logger.error("--workers must be at least 1")
        return 2
    if args.command == "fit":
        try:
            return cmd_fit(cfg, out, workers, args.energy)
        except (OSError, ValueError) as exc:
            logger.error("fit failed: %s", exc)
            return 1
    return COMMANDS[args.command](cfg, out, workers)


if __name__ == "__main__":
    sys.exit(main())
