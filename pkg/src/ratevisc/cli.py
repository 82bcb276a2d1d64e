"""Command-line entry point: ``ratevisc run ...``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import MeshRule, RunConfig, Tolerances, load_config, parse_eps
from .errors import ConfigError, InnerSolverStalled, LineSearchFailure, ReparameterizationFailed
from .incremental import LedgerEntry, estimate_constants
from .scenarios import get_scenario
from .viscosity import (
    NON_GATING,
    ParameterizedCurve,
    certificate_entries,
    curve_certificates,
    detect_G,
    extract_lambda,
    g_threshold,
    ledger_summary,
    sweep,
)

EXIT_OK = 0
EXIT_CERTIFICATE = 1
EXIT_CONFIG = 2
EXIT_STALL = 3
EXIT_NOT_CONVERGED = 4


def fmt(x) -> str:
    return f"{float(x):.16e}"


def eps_tag(eps: float) -> str:
    return f"{eps:g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=False) + "\n")


def write_trajectory_csv(path: Path, traj) -> None:
    n = traj.problem.dim
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *[f"z_{i}" for i in range(n)], "energy", "dissipation", "residual", "iterations"])
        for k, t in enumerate(traj.times):
            diss = traj.dissipation[k - 1] if k else 0.0
            res = traj.residuals[k - 1] if k else 0.0
            it = int(traj.iterations[k - 1]) if k else 0
            w.writerow([fmt(t), *map(fmt, traj.states[k]), fmt(traj.energies[k]), fmt(diss), fmt(res), it])


def write_curve_csv(path: Path, curve: ParameterizedCurve, G) -> None:
    """One row per node; rate columns belong to the segment starting at the node (the last row repeats)."""
    n = curve.problem.dim
    lam = extract_lambda(curve, G)

    def seg(a):
        return np.concatenate([a, a[-1:]])

    t_rate, R_rate = seg(curve.t_rate), seg(curve.R_rate)
    step, load = seg(curve.seg_step), np.vstack([curve.seg_load, curve.seg_load[-1:]])
    with path.open("w", newline="") as fh:
        fh.write(f"# eps={curve.eps!r}; sub_nodes={curve.sub_nodes}; quad_error={curve.quad_error!r}; "
                 f"inner_budget={curve.inner_budget!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "t_hat", *[f"z_hat_{i}" for i in range(n)], "t_rate", "R_rate", "dist", "m", "in_G",
                    "lambda", "step", *[f"ell_hat_{i}" for i in range(n)]])
        for j in range(curve.M + 1):
            w.writerow([fmt(curve.s[j]), fmt(curve.t[j]), *map(fmt, curve.z[j]), fmt(t_rate[j]), fmt(R_rate[j]),
                        fmt(curve.dist_field[j]), fmt(curve.m_field[j]), int(G.mask[j]), fmt(lam.node_lambda[j]),
                        int(step[j]), *map(fmt, load[j])])


def read_curve_csv(path: Path, problem) -> ParameterizedCurve:
    path = Path(path)
    try:
        with path.open() as fh:
            head = fh.readline()
            rows = list(csv.reader(fh))
    except OSError as err:
        raise ConfigError(f"cannot read curve: {err}", field="certify-only") from None
    meta = {}
    if head.startswith("#"):
        for part in head[1:].split(";"):
            k, _, v = part.partition("=")
            meta[k.strip()] = v.strip()
    else:
        rows.insert(0, next(csv.reader([head])))
    header, body = rows[0], rows[1:]
    n = problem.dim
    if len(header) != 2 * n + 9 or len(body) < 2:
        raise ConfigError(f"curve file does not match a {n}-dimensional problem", field="certify-only")
    data = np.array(body, dtype=float)
    col = {name: i for i, name in enumerate(header)}
    z = data[:, [col[f"z_hat_{i}"] for i in range(n)]]
    load = data[:-1, [col[f"ell_hat_{i}"] for i in range(n)]]
    try:
        eps = float(meta["eps"])
    except (KeyError, ValueError):
        raise ConfigError("curve file lacks its eps header", line=1, field="eps") from None
    return ParameterizedCurve(problem, eps, data[:, col["s"]], data[:, col["t_hat"]], z, load,
                              data[:-1, col["step"]].astype(int), int(meta.get("sub_nodes", 8)),
                              float(meta.get("quad_error", 0.0)), float(meta.get("inner_budget", 0.0)))


def resolve(args) -> tuple[RunConfig, object]:
    """Merge file config and flags; return the config and the scenario (or None for an inline problem)."""
    cfg = load_config(args.config) if args.config else RunConfig(scenario=args.scenario)
    if args.scenario and cfg.problem is not None:
        raise ConfigError("give either --scenario or an inline problem, not both", field="scenario")
    cfg = cfg.with_overrides(
        scenario=args.scenario,
        eps=parse_eps(args.eps) if args.eps else None,
        mesh=MeshRule.parse(args.mesh) if args.mesh else None,
        out=Path(args.out) if args.out else None,
        seed=args.seed,
    ).validated()
    scenario = None
    if cfg.scenario:
        try:
            scenario = get_scenario(cfg.scenario)
        except KeyError as err:
            raise ConfigError(str(err.args[0]), field="scenario") from None
    return cfg, scenario


def _thresholds(cfg: RunConfig, scenario):
    tol: Tolerances = cfg.tolerances
    rate_cap = tol.rate_cap if tol.rate_cap is not None else (scenario.rate_cap if scenario else None)
    return rate_cap, tol.delta_G


def _comp_bound(cfg, problem, eps):
    if cfg.tolerances.tol_comp is not None:
        return cfg.tolerances.tol_comp ** 2
    # eps |z'|^2 is at most twice the viscous part of the dissipation, which C_tilde bounds
    return 2 * eps * estimate_constants(problem)["C_tilde"]


def _entries_for(cfg, problem, certs):
    per_eps = [certificate_entries(c, tol_norm=cfg.tolerances.tol_norm, tol_lambda=cfg.tolerances.tol_lambda,
                                   comp_bound=_comp_bound(cfg, problem, c["eps"])) for c in certs]
    return ledger_summary(per_eps)


def _entry_dict(e: LedgerEntry, gating: bool) -> dict:
    return {"id": e.id, "lhs": e.lhs, "rhs": e.rhs, "margin": e.margin, "pass": e.passed, "gating": gating,
            "note": e.note}


def certify_only(cfg: RunConfig, scenario, curve_path) -> tuple[int, dict]:
    problem = scenario.problem if scenario else cfg.problem
    curve = read_curve_csv(curve_path, problem)
    rate_cap, delta = _thresholds(cfg, scenario)
    G = detect_G(curve, delta if delta is not None else g_threshold(problem, curve.eps, rate_cap))
    cert = curve_certificates(curve, G)
    entries = _entries_for(cfg, problem, [cert])
    ok = all(e.passed for e in entries if e.id not in NON_GATING)
    code = EXIT_OK if ok else EXIT_CERTIFICATE
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "certificates.json", {"limit": cert})
    report = {"mode": "certify-only", "source": str(curve_path), "scenario": cfg.scenario, "eps": curve.eps,
              "entries": [_entry_dict(e, e.id not in NON_GATING) for e in entries],
              "status": "ok" if ok else "certificate failure", "exit_code": code}
    write_json(out / "report.json", report)
    return code, report


def run(cfg: RunConfig, scenario) -> tuple[int, dict]:
    problem = scenario.problem if scenario else cfg.problem
    eps = cfg.eps or (scenario.eps_ladder if scenario else ())
    if not eps:
        raise ConfigError("no eps sequence given", field="eps")
    if cfg.mesh.kind == "N" and problem.T / cfg.mesh.value > min(eps) * (1 + 1e-12):
        raise ConfigError("uniform mesh is coarser than the smallest eps", field="mesh")
    rate_cap, delta = _thresholds(cfg, scenario)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    res = sweep(problem, eps, cfg.mesh, sub_nodes=cfg.tolerances.sub_nodes, rate_cap=rate_cap, delta_G=delta,
                tol_inner=cfg.tolerances.tol_inner, seed=cfg.seed, warm_start=cfg.warm_start)
    for e, traj, curve, G in zip(res.eps_sequence, res.trajectories, res.curves, res.G_sets):
        write_trajectory_csv(out / f"trajectory_eps{eps_tag(e)}.csv", traj)
        write_curve_csv(out / f"curve_eps{eps_tag(e)}.csv", curve, G)
    write_curve_csv(out / "limit_curve.csv", res.limit, res.limit_G)

    ledger = {}
    edp_entries = []
    for e, entries, edp in zip(res.eps_sequence, res.ledgers, res.edp):
        ledger[eps_tag(e)] = {"entries": [x.to_dict() for x in entries],
                              "discrete_edp": {"passed": edp.passed, "max_excess": edp.max_excess}}
        edp_entries.append([LedgerEntry("discrete_edp", edp.max_excess, 0.0, -edp.max_excess, edp.passed,
                                        "discrete energy-dissipation balance, excess over its bound")])
    write_json(out / "ledger.json", {"constants": estimate_constants(problem), "runs": ledger})
    write_json(out / "certificates.json", {"per_eps": {eps_tag(c["eps"]): c for c in res.certificates},
                                          "limit": res.limit_certificates})

    entries = [_entry_dict(e, True) for e in ledger_summary(res.ledgers + edp_entries)]
    entries += [_entry_dict(e, e.id not in NON_GATING) for e in _entries_for(cfg, problem, res.certificates)]
    if len(res.table) >= 2:
        last, prev = res.table[-1]["z_sup"], res.table[-2]["z_sup"]
        entries.append({"id": "sweep_convergence", "lhs": last, "rhs": prev, "margin": prev - last,
                        "pass": res.converged, "gating": False, "note": "last Cauchy distance vs previous"})
    certs_ok = all(e["pass"] for e in entries if e["gating"])
    if not certs_ok:
        code, status = EXIT_CERTIFICATE, "certificate failure"
    elif not res.converged:
        code, status = EXIT_NOT_CONVERGED, "sweep not converged"
    else:
        code, status = EXIT_OK, "ok"
    report = {
        "mode": "run", "scenario": cfg.scenario or "inline", "dim": problem.dim,
        "eps_sequence": list(res.eps_sequence), "mesh": str(cfg.mesh), "seed": cfg.seed,
        "entries": entries,
        "convergence": {"table": res.table, "converged": res.converged, "converged_from": res.converged_from,
                        "cauchy_tolerance": res.cauchy_tolerance, "S": [c.S for c in res.curves]},
        "limit": {"eps": res.limit.eps, "G_intervals": res.limit_certificates["G_intervals"],
                  "switches": res.limit_certificates["switches"], "var_Z": res.limit_certificates["var_Z"]},
        "n_curves": len(res.curves), "status": status, "exit_code": code,
    }
    write_json(out / "report.json", report)
    return code, report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ratevisc", description="Vanishing-viscosity solver for rate-independent systems.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="solve, sweep and certify")
    r.add_argument("--scenario", help="built-in scenario name")
    r.add_argument("--config", help="configuration file")
    r.add_argument("--eps", help="comma-separated decreasing viscosities")
    r.add_argument("--mesh", help="mesh rule, c=<float> or N=<int>")
    r.add_argument("--out", help="output directory")
    r.add_argument("--certify-only", dest="certify_only", metavar="CURVE_CSV",
                   help="recompute certificates of a stored curve")
    r.add_argument("--seed", type=int, help="seed for randomized warm starts")
    sub.add_parser("list", help="list built-in scenarios")
    return p


def _error(kind: str, message: str, **extra) -> None:
    print(json.dumps({"error": kind, "message": message, **extra}), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        from .scenarios import REGISTRY
        print("\n".join(sorted(REGISTRY)))
        return EXIT_OK
    try:
        cfg, scenario = resolve(args)
        if args.certify_only:
            code, report = certify_only(cfg, scenario, args.certify_only)
        else:
            code, report = run(cfg, scenario)
    except ConfigError as err:
        _error("config", str(err), line=err.line, field=err.field)
        return EXIT_CONFIG
    except (InnerSolverStalled, LineSearchFailure) as err:
        _error("solver_stall", str(err), step=err.step)
        return EXIT_STALL
    except ReparameterizationFailed as err:
        _error("reparameterization", str(err))
        return EXIT_CERTIFICATE
    failed = [e["id"] for e in report["entries"] if e["gating"] and not e["pass"]]
    print(f"{report['status']}: {len(report['entries'])} checks, {len(failed)} gating failures"
          + (f" ({', '.join(failed)})" if failed else ""))
    return code


if __name__ == "__main__":
    sys.exit(main())
