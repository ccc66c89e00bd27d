"""Command-line driver: mesh generation, single solves, studies, field export.

Exit codes: 0 success, 2 configuration/usage error, 3 study with a
non-converged fixed-point iteration.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import benchmarks as bench
from .forms import ConfigurationError
from .geometry import (CutoutRectangle, GeometryError, MESH_FAMILIES,
                       UNIT_SQUARE, generate_mesh, write_mesh)
from .postprocess import export_fields
from .solver import SolverError

_DOMAINS = {
    "unit_square": UNIT_SQUARE,
    "lshape": CutoutRectangle(),
}


def _parse_h(text: str) -> float:
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _parse_h_list(text: str) -> list[float]:
    return [_parse_h(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _add_common(p):
    p.add_argument("--case", choices=bench.CASE_IDS, required=True)
    p.add_argument("--order", type=int, default=None, help="VEM order k")
    p.add_argument("--mesh-family", choices=MESH_FAMILIES, default=None)
    p.add_argument("--tau1", type=float, default=None, help="constant c1 in tau1 = c1")
    p.add_argument("--tau2", type=float, default=None, help="constant c2 in tau2 = c2*h_E^2")
    p.add_argument("--tau3", type=float, default=None, help="constant c3 in tau3 = c3*h_E")
    p.add_argument("--no-stab", action="store_true",
                   help="set all stabilization parameters to zero (comparison runs)")
    p.add_argument("--tol", type=float, default=1e-7, help="fixed-point stopping tolerance")
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--kappa", type=float, default=None, help="override the conductivity scale")
    p.add_argument("--out-dir", type=Path, default=None)
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for independent study points")
    p.add_argument("--config", type=Path, default=None, help="JSON file with these options")
    p.add_argument("--seed", type=int, default=42)


def _overrides_from_args(args) -> dict:
    ov: dict = {}
    cfg = {}
    if args.config is not None:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config file: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigurationError("config file must hold a JSON object")
    def pick(cli_val, key, default=None):
        if cli_val is not None:
            return cli_val
        return cfg.get(key, default)
    order = pick(args.order, "order")
    if order is not None:
        ov["orders"] = [int(order)]
    family = pick(args.mesh_family, "mesh_family")
    if family is not None:
        ov["mesh_families"] = [family]
    hs = cfg.get("h_list")
    if getattr(args, "h_list", None) is not None:
        hs = _parse_h_list(args.h_list)
    if hs is not None:
        ov["h_list"] = [float(h) for h in hs]
    for cli_name, key in ((args.tau1, "c1"), (args.tau2, "c2"), (args.tau3, "c3")):
        val = pick(cli_name, key)
        if val is not None:
            ov[key] = float(val)
    if args.no_stab or cfg.get("no_stab"):
        ov["no_stab"] = True
    kappa = pick(args.kappa, "kappa")
    if kappa is not None:
        ov["kappa"] = float(kappa)
    ov["tol"] = float(pick(args.tol, "tol", 1e-7))
    ov["max_iter"] = int(pick(args.max_iter, "max_iter", 50))
    ov["seed"] = int(pick(args.seed, "seed", 42))
    return ov


def _cmd_mesh_gen(args) -> int:
    domain = _DOMAINS[args.domain]
    mesh = generate_mesh(args.family, domain, _parse_h(args.h), seed=args.seed)
    write_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh.n_cells} cells, {mesh.n_vertices} vertices, "
          f"h = {mesh.h:.6g}")
    return 0


def _single_point_args(ov, case):
    orders = ov.pop("orders", None) or [case.orders[0]]
    fams = ov.pop("mesh_families", None) or [case.mesh_families[0]]
    hs = ov.pop("h_list", None) or [case.h_list[0]]
    ov.pop("no_stab", None)
    return orders[0], fams[0], hs[0]


def _point_kwargs(ov):
    kw = {k: ov[k] for k in ("c1", "c2", "c3", "tol", "max_iter", "seed") if k in ov}
    if ov.get("no_stab"):
        kw["c1"] = kw["c2"] = kw["c3"] = 0.0
    return kw


def _cmd_solve(args) -> int:
    ov = _overrides_from_args(args)
    case = bench.make_case(args.case, kappa=ov.pop("kappa", None))
    kw = _point_kwargs(ov)
    k, family, h = _single_point_args(ov, case)
    rec, state, mops = bench.run_point(case, family, k, h, **kw)
    e = rec.errors
    print(f"case={rec.case} family={family} k={k} h={h:.6g} "
          f"iterations={rec.iterations} converged={rec.converged}")
    print(f"div_violation={e.div_violation:.6e} "
          f"phi_dev=[{e.phi_dev_min:.3e}, {e.phi_dev_max:.3e}]")
    if e.e_u_h1 is not None:
        print(f"E_u_H1={e.e_u_h1:.6e} E_u_L2={e.e_u_l2:.6e} E_p_L2={e.e_p_l2:.6e} "
              f"E_phi_H1={e.e_phi_h1:.6e} E_phi_L2={e.e_phi_l2:.6e}")
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        export_fields(state, mops.mesh, mops, args.out_dir / "fields.vtk", "vtk_legacy")
        export_fields(state, mops.mesh, mops, args.out_dir / "fields.csv", "csv")
        print(f"fields written to {args.out_dir}")
    return 0 if rec.converged else 3


def _cmd_study(args) -> int:
    ov = _overrides_from_args(args)
    tol, max_iter, seed = ov.pop("tol"), ov.pop("max_iter"), ov.pop("seed")
    case = bench.make_case(args.case, kappa=ov.pop("kappa", None))
    orders = ov.pop("orders", case.orders)
    families = ov.pop("mesh_families", case.mesh_families)
    h_list = sorted(ov.pop("h_list", case.h_list), reverse=True)
    kw = dict(tol=tol, max_iter=max_iter, seed=seed)
    for key in ("c1", "c2", "c3"):
        if key in ov:
            kw[key] = ov.pop(key)
    if ov.pop("no_stab", False):
        kw["c1"] = kw["c2"] = kw["c3"] = 0.0
    points = [(f, k) for f in families for k in orders]

    def run_study(fk):
        family, k = fk
        return [bench.run_point(case, family, k, h, **kw)[0] for h in h_list]

    if args.threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(run_study, points))
    else:
        results = [run_study(fk) for fk in points]

    all_ok = True
    for (family, k), recs in zip(points, results):
        table = bench.records_to_csv(recs)
        print(f"# case={args.case} family={family} k={k}")
        print(table, end="")
        iters = ",".join(str(r.iterations) for r in recs)
        print(f"# picard_iterations={iters} converged="
              f"{','.join(str(r.converged) for r in recs)}")
        all_ok &= all(r.converged for r in recs)
        if args.out_dir is not None:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            name = f"{args.case}_{family}_k{k}.csv"
            (args.out_dir / name).write_text(table)
    return 0 if all_ok else 3


def _cmd_export(args) -> int:
    ov = _overrides_from_args(args)
    case = bench.make_case(args.case, kappa=ov.pop("kappa", None))
    kw = _point_kwargs(ov)
    k, family, h = _single_point_args(ov, case)
    rec, state, mops = bench.run_point(case, family, k, h, **kw)
    export_fields(state, mops.mesh, mops, args.out, args.format)
    print(f"wrote {args.out} (converged={rec.converged})")
    return 0 if rec.converged else 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lpsvem",
        description="Equal-order stabilized virtual element solver for coupled "
                    "Stokes-temperature flow on polygonal meshes")
    sub = p.add_subparsers(dest="command", required=True)

    mesh = sub.add_parser("mesh", help="mesh utilities")
    msub = mesh.add_subparsers(dest="mesh_command", required=True)
    gen = msub.add_parser("gen", help="generate a mesh file")
    gen.add_argument("--family", choices=MESH_FAMILIES, required=True)
    gen.add_argument("--domain", choices=sorted(_DOMAINS), default="unit_square")
    gen.add_argument("--h", required=True, help="target mesh size (e.g. 0.1 or 1/10)")
    gen.add_argument("--seed", type=int, default=42)
    gen.add_argument("--out", type=Path, required=True)
    gen.set_defaults(func=_cmd_mesh_gen)

    solve = sub.add_parser("solve", help="solve one benchmark configuration")
    _add_common(solve)
    solve.add_argument("--h", dest="h_list", default=None,
                       help="mesh size for the single solve")
    solve.set_defaults(func=_cmd_solve)

    study = sub.add_parser("study", help="run a convergence study and emit CSV tables")
    _add_common(study)
    study.add_argument("--h-list", dest="h_list", default=None,
                       help="comma-separated mesh sizes, e.g. 1/5,1/10,1/20")
    study.set_defaults(func=_cmd_study)

    export = sub.add_parser("export", help="solve and export fields")
    _add_common(export)
    export.add_argument("--h", dest="h_list", default=None)
    export.add_argument("--format", choices=("vtk_legacy", "csv"), default="vtk_legacy")
    export.add_argument("--out", type=Path, required=True)
    export.set_defaults(func=_cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigurationError, GeometryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
