"""Command-line driver: single solves, convergence studies and field sampling.

Exit codes: 0 success, 2 configuration error, 3 no convergence, 4 singular system.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (NotConvergedError, b_value, compute_errors, conservation_audit,
                       infsup_test_function, mh_norm, rate_table)
from .mesh import Mesh, build_lshape, build_structured_square, refine_uniform, write_mesh_csv
from .poly import TriBasis
from .problems import ProblemSpec, get_problem
from .solver import ConfigError, SingularSystemError, Solution, SolverConfig, fixed_point_solve

log = logging.getLogger("lppdwg")

EXIT_OK, EXIT_CONFIG, EXIT_NO_CONVERGENCE, EXIT_SINGULAR = 0, 2, 3, 4
METRICS = ("e_h_0q", "eps0_0p", "epsb_0p", "eps0_1p", "eps0_2p")


@dataclass
class RunConfig:
    command: str = "solve"
    problem: str = "t4"
    p: float = 2.0
    rho: float = 1.0
    tau: float | None = None
    eps: float = 1e-4
    k: int | None = None
    j: int | None = None
    base_n: int = 8
    levels: int = 4
    out: str = "out"
    fields_res: int = 50
    seed: int = 0
    load: float | None = None
    max_iters: int = 100
    stop_tol: float = 1e-5
    emit: str = "csv,json"
    dump_mesh: bool = False

    def resolve(self) -> tuple[ProblemSpec, SolverConfig]:
        """Fill problem defaults and validate everything before any work."""
        try:
            problem = get_problem(self.problem)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        d = problem.defaults
        if self.k is None:
            self.k = int(d.get("k", 2))
        if self.j is None:
            self.j = int(d.get("j", self.k - 1))
        if self.tau is None:
            self.tau = float(d.get("tau", 0.0))
        if self.load is not None:
            problem = problem.with_load(self.load)
        if self.base_n < 1:
            raise ConfigError("base-n must be >= 1")
        if problem.domain == "lshape" and self.base_n % 2:
            raise ConfigError("the L-shape needs an even base-n (cells per unit length)")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.fields_res < 1:
            raise ConfigError("fields-res must be >= 1")
        unknown = set(self.emit_set) - {"csv", "json", "fields"}
        if unknown:
            raise ConfigError(f"unknown emit flags {sorted(unknown)}")
        cfg = SolverConfig(p=self.p, rho=self.rho, tau=self.tau, eps=self.eps,
                           stop_tol=self.stop_tol, max_iters=self.max_iters, k=self.k, j=self.j)
        return problem, cfg

    @property
    def emit_set(self) -> list[str]:
        return [e.strip() for e in self.emit.split(",") if e.strip()]


def base_mesh(problem: ProblemSpec, inv_h: int) -> Mesh:
    """Structured mesh with ``inv_h`` cells per unit length."""
    if problem.domain == "lshape":
        return build_lshape(inv_h // 2)
    return build_structured_square(inv_h)


def mesh_levels(problem: ProblemSpec, base_n: int, levels: int):
    mesh = base_mesh(problem, base_n)
    for i in range(levels):
        yield base_n * 2 ** i, mesh
        if i + 1 < levels:
            mesh = refine_uniform(mesh)


# output helpers -------------------------------------------------------------

def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.5e}"


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])


def write_json(path: Path, payload: dict) -> None:
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, float) and math.isnan(o):
            return None
        raise TypeError(type(o))
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=default, allow_nan=True)
        fh.write("\n")


# field sampling -------------------------------------------------------------

def locate_points(mesh: Mesh, pts: np.ndarray, tol: float = 1e-12, chunk: int = 512) -> np.ndarray:
    """Index of a triangle containing each point, or -1 outside the mesh."""
    v = mesh.vertices[mesh.triangles]
    a = v[:, 0]
    e1, e2 = v[:, 1] - a, v[:, 2] - a
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    owner = np.full(len(pts), -1, dtype=np.int64)
    for lo in range(0, len(pts), chunk):
        d = pts[lo:lo + chunk, None, :] - a[None]
        l1 = (d[..., 0] * e2[:, 1] - d[..., 1] * e2[:, 0]) / det
        l2 = (e1[:, 0] * d[..., 1] - e1[:, 1] * d[..., 0]) / det
        inside = (l1 >= -tol) & (l2 >= -tol) & (l1 + l2 <= 1 + tol)
        hit = inside.any(axis=1)
        owner[lo:lo + chunk][hit] = np.argmax(inside[hit], axis=1)
    return owner


def sample_fields(sol: Solution, res: int) -> np.ndarray:
    """Rows (x, y, u_h, lambda_0) on a (res+1)^2 grid over the unit square,
    leaving out points outside the mesh."""
    mesh = sol.disc.mesh
    g = np.linspace(0.0, 1.0, res + 1)
    X, Y = np.meshgrid(g, g, indexing="xy")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    t = locate_points(mesh, pts)
    keep = t >= 0
    pts, t = pts[keep], t[keep]
    verts = mesh.vertices[mesh.triangles[t]]
    phi_r, _ = TriBasis(sol.disc.r, verts).eval(pts[:, None, :])
    phi_j, _ = TriBasis(sol.disc.j, verts).eval(pts[:, None, :])
    u = np.einsum("pa,pa->p", phi_r[:, 0], sol.disc.M.local(sol.u.coeffs)[t])
    lam = np.einsum("pa,pa->p", phi_j[:, 0], sol.disc.W.interior_block(sol.lam.coeffs)[t])
    return np.column_stack([pts, u, lam])


# commands -------------------------------------------------------------------

def _status_code(sol: Solution) -> int:
    return EXIT_OK if sol.converged else EXIT_NO_CONVERGENCE


def _audit_summary(sol: Solution) -> dict | None:
    try:
        return conservation_audit(sol).summary()
    except NotConvergedError:
        return None


def _infsup_check(sol: Solution, seed: int) -> dict:
    data, q = sol.data, sol.config.q
    v = np.random.default_rng(seed).standard_normal(sol.disc.M.ndofs)
    norm_q = mh_norm(data, v, q) ** q
    sigma = infsup_test_function(data, v, q)
    bv = b_value(data, v, sigma.coeffs)
    return {"q": q, "b_value": bv, "mh_norm_q": norm_q,
            "relative_error": abs(bv - norm_q) / norm_q if norm_q > 0 else 0.0}


def cmd_solve(rc: RunConfig, problem: ProblemSpec, cfg: SolverConfig, out: Path) -> int:
    mesh = base_mesh(problem, rc.base_n)
    for _ in range(rc.levels - 1):
        mesh = refine_uniform(mesh)
    t0 = time.perf_counter()
    sol = fixed_point_solve(problem, mesh, cfg)
    inv_h = rc.base_n * 2 ** (rc.levels - 1)
    if rc.dump_mesh:
        write_mesh_csv(sol.disc.mesh, out / "mesh")
    emit = rc.emit_set
    if "csv" in emit:
        write_csv(out / "u_coeffs.csv", ["index", "value"], enumerate(sol.u.coeffs))
        write_csv(out / "lambda_coeffs.csv", ["index", "value"], enumerate(sol.lam.coeffs))
        write_csv(out / "iterations.csv", ["iteration", "update", "residual", "time"],
                  [(i + 1, d, r, t) for i, (d, r, t) in
                   enumerate(zip(sol.log.updates, sol.log.residuals, sol.log.times))])
    if "fields" in emit:
        write_csv(out / "fields.csv", ["x", "y", "u_h", "lambda0"], sample_fields(sol, rc.fields_res))
    errors = compute_errors(sol.disc, sol.u.coeffs, sol.lam.coeffs, problem, cfg.p)
    report = {
        "version": __version__, "config": asdict(rc), "solver": cfg.to_dict(),
        "outside_theory": cfg.outside_theory, "inv_h": inv_h,
        "n_triangles": sol.disc.mesh.n_triangles,
        "dofs": {"lambda": sol.disc.W.ndofs, "u": sol.disc.M.ndofs},
        "iteration_log": sol.log.to_dict(),
        "max_abs_lambda": float(np.max(np.abs(sol.lam.coeffs), initial=0.0)),
        "errors": errors.as_dict() if errors else None,
        "conservation": _audit_summary(sol),
        "infsup_check": _infsup_check(sol, rc.seed),
        "runtime": time.perf_counter() - t0,
    }
    if "json" in emit:
        write_json(out / "report.json", report)
    log.info("solve %s: %s after %d iterations", problem.name, sol.log.status.value, sol.log.iterations)
    return _status_code(sol)


def convergence_rows(level_data: list[dict], with_lap: bool) -> tuple[list[str], list[list]]:
    metrics = [m for m in METRICS if with_lap or m != "eps0_2p"]
    header = ["inv_h"]
    for m in metrics:
        header += [m, "rate"]
    errs = [row["errors"] for row in level_data]
    rates = rate_table(errs)
    rows = []
    for i, row in enumerate(level_data):
        line = [row["inv_h"]]
        for m in metrics:
            line += [getattr(errs[i], m), rates[m][i - 1] if i > 0 else None]
        rows.append(line)
    return header, rows


def cmd_convergence(rc: RunConfig, problem: ProblemSpec, cfg: SolverConfig, out: Path) -> int:
    if not problem.has_exact or problem.data_only:
        raise ConfigError(f"problem {problem.name!r} has no exact solution; convergence is unavailable")
    t0 = time.perf_counter()
    levels, code, worst = [], EXIT_OK, 0.0
    for inv_h, mesh in mesh_levels(problem, rc.base_n, rc.levels):
        sol = fixed_point_solve(problem, mesh, cfg)
        errs = compute_errors(sol.disc, sol.u.coeffs, sol.lam.coeffs, problem, cfg.p)
        audit = _audit_summary(sol)
        if audit:
            worst = max(worst, audit["max_relative_element"], audit["max_relative_edge"])
        if not sol.converged:
            code = EXIT_NO_CONVERGENCE
        levels.append({"inv_h": inv_h, "errors": errs, "iterations": sol.log.iterations,
                       "status": sol.log.status.value,
                       "dofs": {"lambda": sol.disc.W.ndofs, "u": sol.disc.M.ndofs},
                       "conservation": audit})
        log.info("1/h=%d: %s, %d iterations", inv_h, sol.log.status.value, sol.log.iterations)
    header, rows = convergence_rows(levels, cfg.j == cfg.k)
    if "csv" in rc.emit_set:
        write_csv(out / "convergence.csv", header, rows)
    if "json" in rc.emit_set:
        rates = rate_table([lv["errors"] for lv in levels])
        payload = {"version": __version__, "config": asdict(rc), "solver": cfg.to_dict(),
                   "outside_theory": cfg.outside_theory,
                   "levels": [{**lv, "errors": lv["errors"].as_dict()} for lv in levels],
                   "rates": rates, "worst_conservation_residual": worst,
                   "runtime": time.perf_counter() - t0}
        write_json(out / "convergence.json", payload)
    return code


def cmd_fields(rc: RunConfig, problem: ProblemSpec, cfg: SolverConfig, out: Path) -> int:
    mesh = base_mesh(problem, rc.base_n)
    for _ in range(rc.levels - 1):
        mesh = refine_uniform(mesh)
    sol = fixed_point_solve(problem, mesh, cfg)
    write_csv(out / "fields.csv", ["x", "y", "u_h", "lambda0"], sample_fields(sol, rc.fields_res))
    if "json" in rc.emit_set:
        write_json(out / "fields.json", {"version": __version__, "config": asdict(rc),
                                         "solver": cfg.to_dict(),
                                         "iteration_log": sol.log.to_dict()})
    return _status_code(sol)


COMMANDS = {"solve": cmd_solve, "convergence": cmd_convergence, "fields": cmd_fields}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lppdwg", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file with run keys; flags override it")
        sp.add_argument("--problem")
        sp.add_argument("--p", type=float)
        sp.add_argument("--rho", type=float)
        sp.add_argument("--tau", type=float)
        sp.add_argument("--eps", type=float)
        sp.add_argument("--k", type=int)
        sp.add_argument("--j", type=int)
        sp.add_argument("--base-n", dest="base_n", type=int, help="cells per unit length of level 0")
        sp.add_argument("--levels", type=int, help="number of mesh levels (solve uses the finest)")
        sp.add_argument("--out")
        sp.add_argument("--fields-res", dest="fields_res", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--load", type=float, help="override the load with a constant")
        sp.add_argument("--max-iters", dest="max_iters", type=int)
        sp.add_argument("--stop-tol", dest="stop_tol", type=float)
        sp.add_argument("--emit", help="comma list of csv, json, fields")
        sp.add_argument("--dump-mesh", dest="dump_mesh", action="store_const", const=True)
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def make_run_config(args: argparse.Namespace) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    values: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        bad = set(loaded) - known
        if bad:
            raise ConfigError(f"unknown config keys {sorted(bad)}")
        values.update(loaded)
    for name in known - {"command"}:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    values["command"] = args.command
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = make_run_config(args)
        problem, cfg = rc.resolve()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[rc.command](rc, problem, cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SingularSystemError as exc:
        print(f"singular system: {exc}", file=sys.stderr)
        if getattr(exc, "log", None) is not None:
            write_json(out / "failure.json", {"version": __version__, "config": asdict(rc),
                                              "iteration_log": exc.log.to_dict()})
        return EXIT_SINGULAR


if __name__ == "__main__":
    sys.exit(main())
