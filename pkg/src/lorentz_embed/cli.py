"""Configuration-driven front end: solve -> verify -> embed -> export.

Runs are reproducible by construction: the canonical config is copied into
the run directory, every CSV/JSON artifact is written with fixed ordering
and 17 significant digits, and wall-clock data lives only in the isolated
runmeta.json.  A lock file guards each output directory against concurrent
writers.

Exit codes: 0 success, 2 invalid config or missing/corrupt artifacts,
3 solver non-convergence (trace still written), 4 embedding audit failure.
"""

from __future__ import annotations

import argparse
import contextlib
import datetime
import json
import math
import os
import sys
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import __version__
from .metric import (
    make_hyperbolic,
    make_radial_from_curvature,
    make_poincare,
    make_poincare_perturbed,
)
from .grid import PolarGrid, DiscGrid, ScalarField, covariant_hessian, write_field_csv
from .solver import DirichletProblem, AdmissibleField, NonConvergenceError, solve_dirichlet
from .exhaustion import ExhaustionSchedule, run_exhaustion, DivergenceError
from .estimates import run_estimate_suite
from .embed import build_embedding, export_graph, write_obj

__all__ = ["RunConfig", "load_config", "cmd_solve", "cmd_verify", "cmd_embed", "main"]

_FAMILIES = ("hyperbolic", "radial_pinched", "poincare", "poincare_perturbed")

_AUDIT_DEFAULTS = {
    "r0_list": [1.0],
    "c_cal": 1.0,
    "probe_fractions": [0.45, 0.6, 0.75],
    "holonomy_tol": 1e-5,
    "curvature_check_tol": 1e-2,
    "pullback_tol": 1e-2,
    "pinching_slack": 1e-6,
}


@dataclass(frozen=True)
class RunConfig:
    schema_version: int
    metric: dict
    grid: dict
    exhaustion: dict
    solver: dict
    audit: dict
    output: dict
    raw: dict = dataclass_field(repr=False, default_factory=dict)


def _err(errors, path, message):
    errors.append(f"{path}: {message}")


def validate_config(cfg: dict):
    """Schema-check a config dict; returns (RunConfig or None, error list)."""
    errors = []
    if not isinstance(cfg, dict):
        return None, ["config: must be a JSON object"]
    if cfg.get("schema_version") != 1:
        _err(errors, "schema_version", "must be 1")

    metric = cfg.get("metric", {})
    family = metric.get("family")
    if family not in _FAMILIES:
        _err(errors, "metric.family", f"must be one of {_FAMILIES}")
    if family in ("hyperbolic", "poincare", "poincare_perturbed"):
        if not metric.get("curvature_scale", 1.0) > 0:
            _err(errors, "metric.curvature_scale", "must be positive")
    if family in ("poincare", "poincare_perturbed"):
        if not 0 < metric.get("domain_radius", 0.9) < 1:
            _err(errors, "metric.domain_radius", "must lie in (0, 1)")
    if family == "radial_pinched":
        if metric.get("base", 1.0) <= 0 or metric.get("amp", 1.0) < 0:
            _err(errors, "metric.base/amp", "need base > 0 and amp >= 0")

    grid = cfg.get("grid", {})
    n_theta = grid.get("n_theta", 64)
    if not (isinstance(n_theta, int) and n_theta >= 8 and n_theta % 2 == 0):
        _err(errors, "grid.n_theta", "must be an even integer >= 8")
    if grid.get("nodes_per_unit", 16) <= 0:
        _err(errors, "grid.nodes_per_unit", "must be positive")

    ex = cfg.get("exhaustion", {})
    radii = ex.get("radii")
    if not radii or any(r <= 0 for r in radii) or any(
        b <= a for a, b in zip(radii, radii[1:])
    ):
        _err(errors, "exhaustion.radii", "must be a strictly increasing positive list")
    if family in ("poincare", "poincare_perturbed") and radii and len(radii) != 1:
        _err(errors, "exhaustion.radii", "conformal charts support a single solve radius")
    if ex.get("tol", 1e-5) <= 0:
        _err(errors, "exhaustion.tol", "must be positive")
    if ex.get("boundary_rule", "standard") not in ("standard", "midpoint"):
        _err(errors, "exhaustion.boundary_rule", "must be 'standard' or 'midpoint'")
    if radii and family not in ("poincare", "poincare_perturbed"):
        l_obs = ex.get("l_obs", max(radii[0] - 1.0, radii[0] / 2))
        if l_obs > radii[0] - 1.0 + 1e-12:
            _err(errors, "exhaustion.l_obs", "must be <= radii[0] - 1")

    sv = cfg.get("solver", {})
    if sv.get("tol", 1e-10) <= 0:
        _err(errors, "solver.tol", "must be positive")
    if sv.get("max_iter", 30) < 1:
        _err(errors, "solver.max_iter", "must be >= 1")

    audit = {**_AUDIT_DEFAULTS, **cfg.get("audit", {})}
    for key in ("holonomy_tol", "curvature_check_tol", "pullback_tol",
                "pinching_slack", "c_cal"):
        if audit[key] <= 0:
            _err(errors, f"audit.{key}", "must be positive")
    if any(r0 <= 0 for r0 in audit["r0_list"]):
        _err(errors, "audit.r0_list", "entries must be positive")

    if errors:
        return None, errors
    return RunConfig(
        schema_version=1,
        metric=dict(metric),
        grid=dict(grid),
        exhaustion=dict(ex),
        solver=dict(sv),
        audit=audit,
        output=dict(cfg.get("output", {})),
        raw=cfg,
    ), []


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return validate_config(json.load(fh))
    except (OSError, json.JSONDecodeError) as exc:
        return None, [f"config: unreadable ({exc})"]


def build_metric(cfg: RunConfig):
    m = cfg.metric
    family = m["family"]
    if family == "hyperbolic":
        return make_hyperbolic(m.get("curvature_scale", 1.0))
    if family == "poincare":
        return make_poincare(m.get("curvature_scale", 1.0), m.get("domain_radius", 0.9))
    if family == "poincare_perturbed":
        return make_poincare_perturbed(
            m.get("curvature_scale", 1.0), m.get("domain_radius", 0.9),
            m.get("eps", 0.1),
        )
    base = m.get("base", 1.0)
    amp = m.get("amp", 1.0)
    r_max = m.get("r_max")
    if r_max is None:
        r_max = max(cfg.exhaustion["radii"]) + max(cfg.audit["r0_list"]) + 1.5

    def K(r):
        r = np.asarray(r, dtype=float)
        return -(base + amp * r * r / (1.0 + r * r))

    def Kp(r):
        r = np.asarray(r, dtype=float)
        return -(2.0 * amp * r / (1.0 + r * r) ** 2)

    def Kpp(r):
        r = np.asarray(r, dtype=float)
        return -(amp * (2.0 - 6.0 * r * r) / (1.0 + r * r) ** 3)

    return make_radial_from_curvature(K, r_max, k_prime=Kp, k_double_prime=Kpp)


def _grid_for(cfg: RunConfig, metric, l):
    n_theta = cfg.grid.get("n_theta", 64)
    if metric.kind == "conformal_polar":
        n_rho = cfg.grid.get("n_r", 64)
        return DiscGrid(n_rho, n_theta, float(l))
    n_r = cfg.grid.get("n_r")
    if n_r is None:
        n_r = max(int(math.ceil(l * cfg.grid.get("nodes_per_unit", 16))), 16)
    return PolarGrid(n_r, n_theta, float(l))


@contextlib.contextmanager
def _locked_dir(path):
    os.makedirs(path, exist_ok=True)
    lock = os.path.join(path, ".lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(
            f"output directory {path} is locked by another run (remove {lock} if stale)"
        )
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(OSError):
            os.remove(lock)


def _dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_runmeta(out_dir):
    _dump_json(
        {"timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
         "version": __version__},
        os.path.join(out_dir, "runmeta.json"),
    )


def cmd_solve(config_path, out_dir, trace=False):
    cfg, errors = load_config(config_path)
    if errors:
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    with _locked_dir(out_dir):
        _dump_json(cfg.raw, os.path.join(out_dir, "config.json"))
        _write_runmeta(out_dir)
        metric = build_metric(cfg)
        fields_dir = os.path.join(out_dir, "fields")
        os.makedirs(fields_dir, exist_ok=True)
        radii = [float(l) for l in cfg.exhaustion["radii"]]
        solver_tol = cfg.solver.get("tol", 1e-10)
        max_iter = cfg.solver.get("max_iter", 30)

        if metric.kind == "conformal_polar":
            grid = _grid_for(cfg, metric, radii[0])
            problem = DirichletProblem(metric, grid, tol=solver_tol, max_iter=max_iter)
            try:
                sol = solve_dirichlet(problem)
            except NonConvergenceError as exc:
                _write_trace(exc.trace, os.path.join(out_dir, "trace_l000.csv"))
                print(f"solver did not converge: {exc}", file=sys.stderr)
                return 3
            fields = [sol]
            steps = [_step_row(radii[0], math.nan, sol)]
            converged = True
        else:
            grids = [_grid_for(cfg, metric, l) for l in radii]
            schedule = ExhaustionSchedule(
                tuple(radii), tuple(grids),
                cfg.exhaustion.get("l_obs", radii[0] - 1.0),
                cfg.exhaustion.get("tol", 1e-5),
                cfg.exhaustion.get("boundary_rule", "standard"),
            )
            try:
                result = run_exhaustion(schedule, metric, solver_tol=solver_tol,
                                        max_iter=max_iter)
            except NonConvergenceError as exc:
                _write_trace(exc.trace, os.path.join(out_dir, "trace_failed.csv"))
                print(f"solver did not converge: {exc}", file=sys.stderr)
                return 3
            except DivergenceError as exc:
                for k, fld in enumerate(exc.fields):
                    write_field_csv(fld.u, os.path.join(fields_dir, f"u_{k:03d}.csv"))
                print(f"exhaustion diverged: {exc}", file=sys.stderr)
                return 3
            fields = result.fields
            steps = [_step_row(s.l, s.delta, None, s) for s in result.steps]
            converged = True

        meta = {"radii": [], "boundary_values": [], "grids": [], "iterations": []}
        for k, fld in enumerate(fields):
            write_field_csv(fld.u, os.path.join(fields_dir, f"u_{k:03d}.csv"))
            if trace:
                _write_trace(fld.trace, os.path.join(out_dir, f"trace_l{k:03d}.csv"))
            meta["radii"].append(fld.ball_radius)
            meta["boundary_values"].append(fld.boundary_value)
            g = fld.u.grid
            meta["grids"].append({"n1": g.n1, "n2": g.n2, "kind": g.kind})
            meta["iterations"].append(fld.iterations)
        _dump_json(meta, os.path.join(fields_dir, "meta.json"))
        _write_convergence(steps, os.path.join(out_dir, "convergence.csv"))
        return 0 if converged else 3


def _step_row(l, delta, fld, step=None):
    if step is not None:
        return (step.l, step.delta, step.min_u, step.max_u, step.max_grad)
    u = fld.u.values
    return (l, delta, float(u.min()), float(u.max()),
            float(np.sqrt(fld.hessian.grad_sq).max()))


def _write_convergence(rows, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("l,delta,min_u,max_u,max_grad\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _write_trace(trace, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,residual,step,eig_margin\n")
        for it, res, step, eig in trace:
            fh.write(f"{it},{res:.17g},{step:.17g},{eig:.17g}\n")


def _load_run(run_dir):
    """Rebuild metric, grids, and admissible fields from run artifacts."""
    cfg_path = os.path.join(run_dir, "config.json")
    if not os.path.exists(cfg_path):
        raise FileNotFoundError("config.json missing from run directory")
    cfg, errors = load_config(cfg_path)
    if errors:
        raise ValueError("; ".join(errors))
    meta_path = os.path.join(run_dir, "fields", "meta.json")
    if not os.path.exists(meta_path):
        raise FileNotFoundError("fields/meta.json missing (run solve first)")
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    metric = build_metric(cfg)
    fields = []
    for k, (l, b, ginfo, iters) in enumerate(zip(
            meta["radii"], meta["boundary_values"], meta["grids"],
            meta["iterations"])):
        if ginfo["kind"] == "disc":
            grid = DiscGrid(ginfo["n1"], ginfo["n2"], l)
        else:
            grid = PolarGrid(ginfo["n1"], ginfo["n2"], l)
        path = os.path.join(run_dir, "fields", f"u_{k:03d}.csv")
        values = _read_field_csv(path, grid.shape)
        u = ScalarField(grid, values)
        hess = covariant_hessian(u, metric, order=2)
        s = hess.grad_sq + 2.0 * values
        fields.append(AdmissibleField(
            u=u, hessian=hess,
            min_eigenvalue=float(hess.eig_min.min()),
            rhs_min=float(s.min()),
            metric=metric, boundary_value=b, ball_radius=l,
            iterations=iters,
        ))
    return cfg, metric, fields


def _read_field_csv(path, shape):
    if not os.path.exists(path):
        raise FileNotFoundError(f"{os.path.basename(path)} missing")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, usecols=2)
    except ValueError as exc:
        raise ValueError(f"{os.path.basename(path)}: corrupt CSV ({exc})")
    if data.size != shape[0] * shape[1]:
        raise ValueError(
            f"{os.path.basename(path)}: expected {shape[0] * shape[1]} rows, got {data.size}"
        )
    return data.reshape(shape)


def _default_probes(field, r0):
    """Probe nodes on three rays, at radii where the probe ball fits."""
    grid = field.u.grid
    l = field.ball_radius
    probes = []
    for frac, j in zip((0.45, 0.6, 0.75), (0, grid.n2 // 3, (2 * grid.n2) // 3)):
        r_target = frac * l
        if r_target + r0 > l:
            r_target = max(l - r0 - 2 * grid.h1, grid.h1)
        i = int(np.clip(np.searchsorted(grid.q1, r_target), 0, grid.n1 - 1))
        probes.append((i, j))
    return probes


def cmd_verify(run_dir):
    try:
        cfg, metric, fields = _load_run(run_dir)
    except (FileNotFoundError, ValueError) as exc:
        print(f"verify: {exc}", file=sys.stderr)
        return 2
    r0_list = [float(r) for r in cfg.audit["r0_list"]]
    reports = []
    ok = True
    for fld in fields:
        fit_r0 = [r0 for r0 in r0_list
                  if metric.kind != "geodesic_polar" or r0 + 2 * fld.u.grid.h1 < fld.ball_radius]
        probes = _default_probes(fld, min(fit_r0) if fit_r0 else 0.0)
        rep = run_estimate_suite(fld, probes=probes, r0_list=fit_r0,
                                 c_cal=cfg.audit["c_cal"],
                                 tol=cfg.solver.get("tol", 1e-10))
        reports.append({"ball_radius": fld.ball_radius, **rep.to_json_dict()})
        ok = ok and rep.mandatory_pass()
    out = os.path.join(run_dir, "verify")
    os.makedirs(out, exist_ok=True)
    _dump_json({"runs": reports, "mandatory_pass": ok},
               os.path.join(out, "report.json"))
    for rep in reports:
        for rec in rep["records"]:
            status = "pass" if rec["pass"] else "FAIL"
            print(f"l={rep['ball_radius']:g} {rec['id']}: {status} "
                  f"(margin {rec['margin']:.3e})")
    return 0 if ok else 4


def cmd_embed(run_dir):
    try:
        cfg, metric, fields = _load_run(run_dir)
    except (FileNotFoundError, ValueError) as exc:
        print(f"embed: {exc}", file=sys.stderr)
        return 2
    report_path = os.path.join(run_dir, "verify", "report.json")
    if not os.path.exists(report_path):
        print("embed: verify report missing (run verify first)", file=sys.stderr)
        return 2
    with open(report_path, "r", encoding="utf-8") as fh:
        verify_report = json.load(fh)
    if not verify_report.get("mandatory_pass", False):
        print("embed: mandatory estimates failed; refusing to embed", file=sys.stderr)
        return 2

    field = fields[-1]
    grid = field.u.grid
    if metric.kind == "geodesic_polar":
        l_obs = cfg.exhaustion.get("l_obs", field.ball_radius - 1.0)
    else:
        l_obs = 0.75 * field.ball_radius
    audit_cfg = cfg.audit
    gbar, dev, emb, audit = build_embedding(
        field, l_obs,
        check_tol=audit_cfg["curvature_check_tol"],
        holonomy_tol=audit_cfg["holonomy_tol"],
    )
    out = os.path.join(run_dir, "embed")
    os.makedirs(out, exist_ok=True)
    mesh = export_graph(emb, rows=audit.audit_rows)
    write_obj(mesh, os.path.join(out, "surface.obj"))
    payload = audit.to_json_dict()
    payload["curvature_defect"] = gbar.max_defect
    _dump_json(payload, os.path.join(out, "audit.json"))

    slack = audit_cfg["pinching_slack"]
    failures = []
    if audit.pullback_rel_err > audit_cfg["pullback_tol"]:
        failures.append(
            f"pullback error {audit.pullback_rel_err:.3e} at node "
            f"{audit.worst_pullback_node} exceeds {audit_cfg['pullback_tol']:g}"
        )
    for name, margin in (("cone", audit.pinching_margin_cone),
                         ("lower", audit.pinching_margin_lower),
                         ("upper", audit.pinching_margin_upper)):
        if margin < -slack:
            failures.append(f"pinching margin ({name}) {margin:.3e} < -{slack:g}")
    if failures:
        for f_msg in failures:
            print(f"embed audit: {f_msg}", file=sys.stderr)
        return 4
    print(f"embed: mesh with {mesh.vertices.shape[0]} vertices, "
          f"pullback error {audit.pullback_rel_err:.3e}")
    return 0


def main(argv=None):
    if os.environ.get("LORENTZ_EMBED_THREADS"):
        cap = os.environ["LORENTZ_EMBED_THREADS"]
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)
    p = argparse.ArgumentParser(prog="lorentz-embed",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("solve", "all"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", required=True)
        sp.add_argument("--trace", action="store_true")
    for name in ("verify", "embed"):
        sp = sub.add_parser(name)
        sp.add_argument("--out", required=True)
    args = p.parse_args(argv)

    if args.command == "solve":
        return cmd_solve(args.config, args.out, trace=args.trace)
    if args.command == "verify":
        return cmd_verify(args.out)
    if args.command == "embed":
        return cmd_embed(args.out)
    rc = cmd_solve(args.config, args.out, trace=args.trace)
    if rc:
        return rc
    rc = cmd_verify(args.out)
    if rc:
        return rc
    return cmd_embed(args.out)


if __name__ == "__main__":
    sys.exit(main())
