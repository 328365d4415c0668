"""Command-line interface: ``tcbf <command> [options]``.

Exit codes: 0 success, 1 validation failure (bad config or a failed
check), 2 runtime error (planning, control or solver failure).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import margin as mg
from .abstraction import AbstractState
from .config import ConfigError, load_document, scenario_from_dict
from .matops import LinAlgError, inf_norm
from .nominal.minsnap import constraint_residual, knot_jump
from .nominal.planner import PlanningError, path_clearance, path_length
from .nominal.se3 import ControllerError
from .qp import QpInfeasibleError
from .quadrotor import ConcreteState, WrenchInput
from .sim import Scenario, TrajectoryLog, plan, run
from .sim.scenario import ScenarioError
from .sim.audit import audit
from .sim.io import (dumps_json, plot_barriers, plot_clearance, plot_path, trajectory_csv, waypoints_csv,
                     write_json)
from .sim.metrics import metrics
from .simfn import check_decay, random_rotation
from .tcbf import MarginInvalidError

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
PACKAGED = {"fixture": "fixture.yaml", "free_space": "free_space.yaml", "margin_example": "margin_example.yaml"}

log = logging.getLogger("tcbf")


class ValidationFailure(Exception):
    """A check or config validation failed (exit 1)."""


def data_path(name: str) -> Path:
    return Path(str(resources.files("tcbf_transfer") / "data" / name))


def _config_path(arg: str | None) -> Path:
    if arg is None:
        return data_path(PACKAGED["fixture"])
    if arg in PACKAGED and not Path(arg).exists():
        return data_path(PACKAGED[arg])
    return Path(arg)


def _load(args) -> tuple[dict, Scenario]:
    path = _config_path(args.config)
    if not path.exists():
        raise ConfigError("--config", f"file not found: {path}")
    doc = load_document(path)
    scenario = scenario_from_dict(doc)
    changes = {}
    if getattr(args, "mode", None):
        changes["mode"] = args.mode
    if getattr(args, "seed", None) is not None:
        changes["rng_seed"] = args.seed
    if getattr(args, "dt", None) is not None:
        changes["dt"] = args.dt
    if getattr(args, "duration", None) is not None:
        changes["duration"] = args.duration
    if changes:
        try:
            scenario = scenario.replace(**changes)
        except ScenarioError as exc:
            raise ConfigError(f"--{exc.key}" if exc.key in ("dt", "duration", "mode") else exc.key,
                              str(exc).split(": ", 1)[-1]) from exc
    try:
        scenario.certificate()
    except LinAlgError as exc:
        raise ConfigError("certificate", str(exc)) from exc
    return doc, scenario


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# margin


def _margin_problem(doc: dict, scenario: Scenario) -> tuple[mg.ComparisonProblem, float]:
    """The comparison problem from ``margin_problem`` or, failing that, the
    scenario's own rates (alpha_b = k2 s, alpha_V from the certificate)."""
    mp = doc.get("margin_problem")
    if mp is not None:
        try:
            prob = mg.ComparisonProblem(
                alpha_b=mg.kfunction_from_dict(mp["alpha_b"]),
                alpha_V=mg.kfunction_from_dict(mp["alpha_V"]),
                r=mg.kfunction_from_dict(mp.get("r")),
                s0=float(mp.get("s0", 1.0)),
                eta=float(mp.get("eta", 0.0)),
            )
        except KeyError as exc:
            raise ConfigError(f"margin_problem.{exc.args[0]}", "missing") from exc
        except mg.MarginError as exc:
            raise ConfigError("margin_problem", str(exc)) from exc
        s_max = float(mp.get("s_max", 20.0 * prob.s0))
    else:
        spec = scenario.margin
        prob = mg.ComparisonProblem(
            alpha_b=mg.Linear(scenario.k2),
            alpha_V=scenario.certificate().alpha_V,
            r=scenario.r_function(),
            s0=float(spec.get("s0", 1.0)),
            eta=float(spec.get("eta", 0.0)),
        )
        s_max = 20.0 * prob.s0
    if not s_max > prob.s0:
        raise ConfigError("margin_problem.s_max", "must exceed s0")
    return prob, s_max


def _closed_form(prob: mg.ComparisonProblem) -> mg.MarginFunction | None:
    if isinstance(prob.alpha_b, mg.Linear) and isinstance(prob.alpha_V, mg.Linear):
        c_r = prob.r.c if isinstance(prob.r, mg.Linear) else (0.0 if prob.r.is_zero() else None)
        if c_r is not None:
            return mg.closed_form_linear_r(prob.eta, prob.s0, prob.alpha_b.c, prob.alpha_V.c, c_r)
    return None


def _read_margin_csv(path) -> mg.TabulatedMargin:
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return mg.TabulatedMargin(arr[:, 0], arr[:, 1], arr[:, 2])


def _candidate(args, doc, prob) -> mg.MarginFunction:
    if args.input:
        return _read_margin_csv(args.input)
    spec = doc.get("margin")
    if spec is None or spec.get("kind") == "minimal":
        phi = _closed_form(prob)
        if phi is None:
            raise ConfigError("margin", "no closed form for these rates; give a margin or --input CSV")
        return phi
    try:
        return mg.margin_from_dict(spec)
    except (mg.MarginError, KeyError) as exc:
        raise ConfigError("margin", str(exc)) from exc


def _margin_table(phi: mg.MarginFunction, prob: mg.ComparisonProblem, grid: np.ndarray) -> str:
    res = mg.margin_residual(phi, prob.alpha_b, prob.alpha_V, prob.r, grid)
    lines = ["s,phi,dphi,residual"]
    for s, y, dy, rr in zip(grid, np.asarray(phi.value(grid)), np.asarray(phi.derivative(grid)), res):
        lines.append(f"{float(s)!r},{float(y)!r},{float(dy)!r},{float(rr)!r}")
    return "\n".join(lines) + "\n"


def _verify(phi, prob, s_max) -> dict:
    rep = mg.verify_margin_inequality(phi, prob.alpha_b, prob.alpha_V, prob.r, (prob.s0, s_max), relative=True)
    anchor = float(phi.value(prob.s0))
    anchored = anchor >= prob.eta - 1e-12
    return {
        "inequality": {"status": "PASS" if rep.passed else "FAIL", "min_residual": rep.min_residual,
                       "argmin": rep.argmin},
        "anchor": {"status": "PASS" if anchored else "FAIL", "phi_s0": anchor, "eta": prob.eta},
        "status": "PASS" if rep.passed and anchored else "FAIL",
    }


def cmd_margin(args) -> int:
    doc, scenario = _load(args)
    prob, s_max = _margin_problem(doc, scenario)
    out = _out(args)
    if args.steps is None:
        args.steps = 20000 if args.action == "compare" else 2000
    if args.action == "solve":
        phi = mg.integrate_comparison_ode(prob, s_max, step=(s_max - prob.s0) / args.steps)
        grid = phi.s
        report = {"action": "solve", "method": "rk4", "steps": args.steps, "s0": prob.s0, "s_max": s_max,
                  "eta": prob.eta}
        report.update(_verify(phi, prob, s_max))
    elif args.action == "verify":
        phi = _candidate(args, doc, prob)
        grid = np.linspace(prob.s0, s_max, args.steps + 1)
        report = {"action": "verify", "s0": prob.s0, "s_max": s_max}
        report.update(_verify(phi, prob, s_max))
    else:
        phi = mg.integrate_comparison_ode(prob, s_max, step=(s_max - prob.s0) / args.steps)
        grid = phi.s
        methods = {}
        closed = _closed_form(prob)
        if closed is not None:
            methods["closed_form"] = closed
        if prob.r.is_zero() and prob.eta > 0:
            methods["separated"] = mg.separated_solution(prob, prob.eta, prob.s0, s_max)
        # Picard over the full range; steep rate ratios need more sweeps than
        # the budget allows there, so fall back to the window [s0, 2 s0]
        methods["picard"] = None
        for hi in dict.fromkeys((s_max, min(s_max, 2.0 * prob.s0))):
            try:
                methods["picard"] = mg.picard_solve(prob, hi)
                break
            except mg.NonConvergenceError as exc:
                log.warning("picard on [%g, %g]: %s", prob.s0, hi, exc)
        cmp = {}
        ok = True
        for name, other in methods.items():
            if other is None:
                cmp[name] = {"status": "FAIL", "max_rel_diff": None}
                ok = False
                continue
            # tabulated methods are compared at their own knots
            gi = other.s if isinstance(other, mg.TabulatedMargin) else grid
            ref = np.asarray(phi.value(gi))
            d = float(np.max(np.abs(np.asarray(other.value(gi)) - ref) / np.maximum(np.abs(ref), 1e-300)))
            passed = d <= 1e-6
            ok &= passed
            cmp[name] = {"status": "PASS" if passed else "FAIL", "max_rel_diff": d}
            if name == "picard":
                cmp[name]["iterations"] = other.meta["iterations"]
                cmp[name]["interval"] = [float(other.s[0]), float(other.s[-1])]
        report = {"action": "compare", "reference": "rk4", "tolerance": 1e-6, "methods": cmp,
                  "status": "PASS" if ok else "FAIL"}
    (out / "margin.csv").write_text(_margin_table(phi, prob, grid))
    write_json(report, out / "margin.json")
    print(f"margin {args.action}: {report['status']}")
    return EXIT_OK if report["status"] == "PASS" else EXIT_FAIL


# --------------------------------------------------------------------------
# certificate / plan / simulate / audit / report


def cmd_certificate(args) -> int:
    _, scenario = _load(args)
    out = _out(args)
    cert = scenario.certificate()
    report = cert.report()
    rng = np.random.default_rng(scenario.rng_seed)
    worst_decay, worst_out, ok = -np.inf, -np.inf, True
    n = args.samples
    for _ in range(n):
        x2 = ConcreteState(rng.normal(size=3), rng.normal(size=3), random_rotation(rng), rng.normal(size=3))
        x1 = AbstractState(x2.p2 + 0.5 * rng.normal(size=3), x2.v2 + 0.5 * rng.normal(size=3))
        u = WrenchInput(rng.uniform(0.0, scenario.quad.f_max), rng.uniform(-1, 1, size=3) * scenario.quad.M_max)
        dc = check_decay(cert, scenario.quad, x1, x2, u)
        worst_decay = max(worst_decay, dc.residual / (1.0 + abs(dc.Vdot)))
        worst_out = max(worst_out, dc.output_gap - dc.output_bound)
        ok &= dc.passed and dc.output_ok
    lyap_ok = report["lyapunov_residual"] <= 1e-9 * max(1.0, inf_norm(cert.Q))
    report["samples"] = {"n": n, "seed": scenario.rng_seed, "worst_decay_residual": float(worst_decay),
                         "worst_output_gap": float(worst_out), "status": "PASS" if ok else "FAIL"}
    report["status"] = "PASS" if ok and lyap_ok else "FAIL"
    write_json(report, out / "certificate.json")
    print(f"certificate: c_V={cert.c_V:.6g} {report['status']}")
    return EXIT_OK if report["status"] == "PASS" else EXIT_FAIL


def cmd_plan(args) -> int:
    _, scenario = _load(args)
    out = _out(args)
    pl = plan(scenario)
    traj = pl.trajectory
    (out / "waypoints.csv").write_text(waypoints_csv(pl.waypoints))
    (out / "trajectory.csv").write_text(trajectory_csv(traj, scenario.dt))
    jumps = [float(np.max(knot_jump(traj, order))) if traj.n_segments > 1 else 0.0 for order in range(5)]
    interp = float(constraint_residual(traj, pl.waypoints))
    clear = path_clearance(pl.waypoints, list(scenario.obstacles))
    report = {
        "waypoints": len(pl.waypoints),
        "path_length": path_length(pl.waypoints),
        "path_clearance_inflated": clear if np.isfinite(clear) else None,
        "duration": traj.T,
        "segment_durations": [float(d) for d in traj.durations],
        "knot_jump_by_order": jumps,
        "interpolation_residual": interp,
        "status": "PASS" if (max(jumps) <= 1e-6 and interp <= 1e-9 and clear > 0) else "FAIL",
    }
    write_json(report, out / "plan.json")
    print(f"plan: {len(pl.waypoints)} waypoints, T={traj.T:.3f} s, {report['status']}")
    return EXIT_OK if report["status"] == "PASS" else EXIT_FAIL


def simulate_one(scenario: Scenario, out: Path, tag: str | None = None) -> dict:
    tag = tag or scenario.mode
    lg = run(scenario)
    m = metrics(lg, scenario)
    lg.to_csv(out / f"log_{tag}.csv")
    write_json(m, out / f"metrics_{tag}.json")
    return m


def _batch_worker(item):
    path, overrides, out = item
    ns = argparse.Namespace(config=path, **overrides)
    try:
        _, scenario = _load(ns)
        sub = Path(out) / Path(path).stem
        sub.mkdir(parents=True, exist_ok=True)
        m = simulate_one(scenario, sub)
        return path, EXIT_OK, m["true_clearance"]["min"]
    except (ConfigError, ValidationFailure, MarginInvalidError) as exc:
        return path, EXIT_FAIL, str(exc)
    except Exception as exc:  # noqa: BLE001  per-run isolation
        return path, EXIT_ERROR, f"{type(exc).__name__}: {exc}"


def cmd_simulate(args) -> int:
    out = _out(args)
    if args.batch:
        items = [p.strip() for p in args.batch.split(",") if p.strip()]
        overrides = {k: getattr(args, k) for k in ("mode", "seed", "dt", "duration")}
        jobs = [(p, overrides, str(out)) for p in items]
        workers = min(len(jobs), args.workers or os.cpu_count() or 1)
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_batch_worker, jobs))
        else:
            results = [_batch_worker(j) for j in jobs]
        summary = [{"config": p, "exit": code, "result": res} for p, code, res in results]
        write_json({"runs": summary}, out / "batch.json")
        for p, code, res in results:
            print(f"{p}: exit {code} ({res})")
        return max(code for _, code, _ in results) if results else EXIT_OK
    _, scenario = _load(args)
    m = simulate_one(scenario, out)
    tc = m["true_clearance"]["min"]
    print(f"simulate {scenario.mode}: min true clearance {tc if tc is None else f'{tc:.4f}'} m, "
          f"slack steps {m['slack_steps']}")
    return EXIT_OK


def _read_log(path) -> TrajectoryLog:
    p = Path(path)
    if not p.exists():
        raise ConfigError("--log", f"file not found: {p}")
    try:
        return TrajectoryLog.from_csv(p)
    except ValueError as exc:
        raise ConfigError("--log", str(exc)) from exc


def cmd_audit(args) -> int:
    _, scenario = _load(args)
    out = _out(args)
    lg = _read_log(args.log) if args.log else run(scenario)
    if lg.n_obs != len(scenario.obstacles):
        raise ConfigError("--log", f"log has {lg.n_obs} obstacles, config has {len(scenario.obstacles)}")
    if args.stride > 1:
        lg = lg.subsample(args.stride)
    rep = audit(lg, scenario, eps=args.eps)
    d = rep.to_dict()
    d["mode"] = scenario.mode
    d["dt"] = lg.dt
    write_json(d, out / "audit.json")
    for c in rep.checks:
        print(f"{c.status:4s} {c.name}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_report(args) -> int:
    _, scenario = _load(args)
    out = _out(args)
    logs: dict[str, TrajectoryLog] = {}
    if args.log:
        for item in args.log:
            name, _, path = item.rpartition("=")
            logs[name or Path(path).stem] = _read_log(path)
    else:
        pl = plan(scenario)
        for mode in ("nominal", "filtered"):
            logs[mode] = run(scenario.replace(mode=mode), pl)
    summary = {}
    for name, lg in logs.items():
        mode = "nominal" if "nominal" in name else scenario.mode
        summary[name] = metrics(lg, scenario.replace(mode=mode))
    write_json(summary, out / "report.json")
    plot_path(logs, scenario, out / "path.svg")
    plot_clearance(logs, scenario, out / "clearance.svg")
    for name, lg in logs.items():
        if lg.n_obs:
            plot_barriers(lg, out / f"barriers_{name}.svg")
    print(f"report: {len(logs)} run(s) -> {out}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario YAML (default: packaged fixture; 'free_space' also packaged)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--dt", type=float, help="override the step size [s]")
    common.add_argument("--duration", type=float, help="override the horizon [s]")
    common.add_argument("--mode", choices=("nominal", "filtered"), help="override the run mode")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="tcbf", description="Transferred control barrier function toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    m = sub.add_parser("margin", parents=[common], help="synthesize or check a margin function")
    m.add_argument("action", choices=("solve", "verify", "compare"))
    m.add_argument("--input", help="margin CSV (s, phi, dphi, ...) to verify instead of the config margin")
    m.add_argument("--steps", type=int, help="grid intervals on [s0, s_max] (default 2000; 20000 for compare)")
    m.set_defaults(func=cmd_margin)
    c = sub.add_parser("certificate", parents=[common], help="build and check the simulation function")
    c.add_argument("--samples", type=int, default=1000)
    c.set_defaults(func=cmd_certificate)
    sub.add_parser("plan", parents=[common], help="RRT* path and minimum-snap reference").set_defaults(func=cmd_plan)
    s = sub.add_parser("simulate", parents=[common], help="closed-loop run: log CSV and metrics JSON")
    s.add_argument("--batch", help="comma-separated config paths, one isolated run each")
    s.add_argument("--workers", type=int, help="pool size for --batch (default: CPU count)")
    s.set_defaults(func=cmd_simulate)
    a = sub.add_parser("audit", parents=[common], help="invariant audit of a log")
    a.add_argument("--log", help="log CSV (default: simulate the config first)")
    a.add_argument("--stride", type=int, default=1, help="audit every stride-th row (coarser effective dt)")
    a.add_argument("--eps", type=float, default=None, help="barrier-rate slack (default 10 dt of the log)")
    a.set_defaults(func=cmd_audit)
    r = sub.add_parser("report", parents=[common], help="SVG plots and metrics from logs")
    r.add_argument("--log", action="append", help="[name=]path of a log CSV; repeatable")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MarginInvalidError as exc:
        print(f"error: config key 'margin': {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ConfigError, ValidationFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (PlanningError, ControllerError, QpInfeasibleError, mg.MarginError,
            np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
