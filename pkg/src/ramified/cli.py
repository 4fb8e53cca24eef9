"""Command-line entry point: ``ramified <subcommand> [options]``.

Exit codes: 0 success, 2 validation error, 3 numerical failure,
4 invariant violation (including failed acceptance criteria).
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import geometry, hausdorff
from .errors import (
    DepthError,
    ExactSearchLimit,
    InvariantViolation,
    RamifiedError,
    ValidationError,
)
from .io import dump_json, environment_info, write_mesh_csv, write_table_csv, write_vtk

log = logging.getLogger("ramified")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_INVARIANT = 0, 2, 3, 4

# built-in defaults; a config file overrides these and flags override both
DEFAULTS = {
    "tau": "0.5",
    "m": 2,
    "h": 0.25,
    "n": 3,
    "preset": "laplacian-robin",
    "T": 1.0,
    "steps": 20,
    "theta": 1.0,
    "beam": 64,
    "out": "ramified-out",
    "seed": 20240917,
    "kappa_p": 4.0,
    "p": 4.0,
    "kappa_q": 8.0,
    "q": 4.0,
    "total_mass": 1.0,
}


def parse_tau(value) -> float:
    if isinstance(value, str) and value.strip().lower() in ("critical", "tau*", "star"):
        return geometry.solve_tau_star()
    try:
        tau = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"tau must be a number or 'critical', got {value!r}") from None
    return geometry.validate_tau(tau)


def load_config(path) -> dict:
    try:
        import tomllib as toml_reader  # Python >= 3.11
    except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
        import tomli as toml_reader
    try:
        with open(path, "rb") as fh:
            data = toml_reader.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    except toml_reader.TOMLDecodeError as exc:
        raise ValidationError(f"bad config {path}: {exc}") from None
    flat = {}
    for key, value in data.items():
        if isinstance(value, dict):  # sections are flattened; the key names stay
            flat.update(value)
        else:
            flat[key] = value
    return {k.replace("-", "_"): v for k, v in flat.items()}


def resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(load_config(args.config))
    for key, value in vars(args).items():
        if value is not None and key not in ("func", "config"):
            cfg[key] = value
    return cfg


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report(cfg: dict, command: str, body: dict, t0: float) -> dict:
    echo = {k: v for k, v in cfg.items() if isinstance(v, (str, int, float, bool))}
    return {
        "command": command,
        "config": echo,
        "environment": environment_info(),
        "wall_time": time.perf_counter() - t0,
        **body,
    }


# geometry ------------------------------------------------------------------

def cmd_geometry(cfg) -> int:
    t0 = time.perf_counter()
    tau = parse_tau(cfg["tau"])
    m = int(cfg["m"])
    domain = geometry.build_prefractal(m, tau)
    out = _out_dir(cfg)
    rows = []
    for h in domain.hexagons:
        for k, (x, y) in enumerate(h.vertices.tolist()):
            rows.append([geometry.format_word(h.word), k, x, y])
    write_table_csv(out / "hexagons.csv", ["word", "vertex", "x", "y"], rows)
    edge_rows = [
        [str(e.tag), e.start[0], e.start[1], e.end[0], e.end[1], e.length] for e in domain.edges
    ]
    write_table_csv(out / "edges.csv", ["tag", "x0", "y0", "x1", "y1", "length"], edge_rows)
    body = {
        "tau": tau,
        "tau_star": geometry.solve_tau_star(),
        "dimension": hausdorff.hausdorff_dimension(tau),
        "height": geometry.height(tau),
        "generation": m,
        "hexagons": len(domain.hexagons),
        "robin_edges": len(domain.edges_of("robin")),
        "area": domain.area,
        "increment_diameters": [geometry.increment_diameter(k, tau) for k in range(1, 11)],
        "files": ["hexagons.csv", "edges.csv"],
    }
    report = _report(cfg, "geometry", body, t0)
    dump_json(report, out / "geometry.json")
    print(dump_json(report))
    return EXIT_OK


# hausdorff -----------------------------------------------------------------

def cmd_hausdorff(cfg) -> int:
    t0 = time.perf_counter()
    tau = parse_tau(cfg["tau"])
    n = int(cfg["n"])
    heuristic = bool(cfg.get("heuristic", False))
    if n > hausdorff.EXACT_MAX_N and not heuristic:
        raise ExactSearchLimit(
            f"n={n} exceeds the exhaustive-search limit {hausdorff.EXACT_MAX_N}; use --heuristic"
        )
    delta = cfg.get("delta")
    rows = hausdorff.sandwich_report(
        n,
        tau,
        None if delta is None else float(delta),
        heuristic=heuristic,
        beam=int(cfg["beam"]),
        sample_depth=None if cfg.get("sample_depth") is None else int(cfg["sample_depth"]),
    )
    body = hausdorff.sandwich_json(rows)
    body["monotonicity_holds"] = True
    report = _report(cfg, "hausdorff", body, t0)
    dump_json(report, _out_dir(cfg) / "hausdorff.json")
    print(dump_json(report))
    return EXIT_OK


# solve / evolve --------------------------------------------------------------

def _problem(cfg):
    from .fem import assemble
    from .mesh import boundary_measure_weights, triangulate
    from .presets import get_preset

    preset = get_preset(cfg["preset"])
    tau = parse_tau(cfg["tau"])
    domain = geometry.build_prefractal(int(cfg["m"]), tau)
    mesh = triangulate(domain, float(cfg["h"]))
    weights = boundary_measure_weights(domain, mesh, float(cfg["total_mass"]))
    overrides = {k: cfg.get(k) for k in ("beta", "lam", "f0", "g")}
    overrides = {k: float(v) for k, v in overrides.items() if v is not None}
    system = assemble(mesh, preset.coefficients(**overrides), weights)
    return preset, mesh, system


def cmd_solve(cfg) -> int:
    from .fem import coercivity_certificate, export_matrix_market
    from .solvers import elliptic_data_norm, linf_bound_ratio, solve_elliptic

    t0 = time.perf_counter()
    _, mesh, system = _problem(cfg)
    cert = coercivity_certificate(system)
    sol = solve_elliptic(system)
    out = _out_dir(cfg)
    write_vtk(out / "solution.vtk", mesh, {"u": sol.values})
    if cfg.get("export_matrices"):
        export_matrix_market(system, str(out / "system"))
    if cfg.get("csv"):
        write_mesh_csv(out / "mesh", mesh)
    lo = float(sol.values.min())
    nonneg_data = system.diagnostics.get("sign_condition_holds", False)
    body = {
        "nodes": mesh.n_nodes,
        "triangles": len(mesh.triangles),
        "coercivity_lower_bound": cert.lower,
        "residual": sol.residual,
        "min_u": lo,
        "max_u": float(sol.values.max()),
        "positivity": "PASS" if lo >= -1e-8 else "FAIL",
        "positivity_applicable": nonneg_data,
        "h1_norm": sol.h1_norm(),
        "linf_ratio": linf_bound_ratio(sol, elliptic_data_norm(system)),
        "diagnostics": system.diagnostics,
        "files": ["solution.vtk"],
    }
    report = _report(cfg, "solve", body, t0)
    dump_json(report, out / "solve.json")
    print(dump_json(report))
    return EXIT_OK


def cmd_evolve(cfg) -> int:
    from .solvers import (
        check_parabolic_exponents,
        energy_estimate_ratio,
        linf_bound_ratio,
        parabolic_data_norm,
        solve_parabolic,
    )

    t0 = time.perf_counter()
    steps = int(cfg["steps"])
    T = float(cfg["T"])
    theta = float(cfg["theta"])
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    if not T > 0:
        raise ValidationError("T must be positive")
    if theta not in (0.5, 1.0):
        raise ValidationError("theta must be 1 or 0.5")
    check_parabolic_exponents(float(cfg["kappa_p"]), float(cfg["p"]), float(cfg["kappa_q"]), float(cfg["q"]))
    preset, mesh, system = _problem(cfg)
    f = preset.source or (lambda t, x: np.full(len(x), float(preset.constants.get("f0", 0.0))))
    g = preset.flux or (lambda t, x, n: np.full(len(x), float(preset.constants.get("g", 0.0))))
    series = solve_parabolic(
        system, np.zeros(mesh.n_nodes), final_time=T, steps=steps, theta=theta, f=f, g=g,
        lumped=bool(cfg.get("lumped", False)),
    )
    out = _out_dir(cfg)
    every = max(1, int(cfg.get("every") or 1))
    index = []
    for k in range(0, steps + 1, every):
        name = f"u_{k:05d}.vtk"
        write_vtk(out / name, mesh, {"u": series.values[k]})
        index.append({"step": k, "time": float(series.times[k]), "file": name})
    dump_json({"frames": index}, out / "series.json")
    energy = energy_estimate_ratio(series, f, g)
    dnorm = parabolic_data_norm(
        series, f, g, kappa_p=float(cfg["kappa_p"]), p=float(cfg["p"]),
        kappa_q=float(cfg["kappa_q"]), q=float(cfg["q"]),
    )
    body = {
        "nodes": mesh.n_nodes,
        "steps": steps,
        "theta": theta,
        "dt": series.diagnostics["dt"],
        "min_value": series.diagnostics["min_value"],
        "energy": energy,
        "linf_ratio": linf_bound_ratio(series, dnorm),
        "exponents": series.diagnostics["exponents"],
        "frames": len(index),
    }
    report = _report(cfg, "evolve", body, t0)
    dump_json(report, out / "evolve.json")
    print(dump_json(report))
    return EXIT_OK


# verify --------------------------------------------------------------------

def cmd_verify(cfg) -> int:
    from .acceptance import run_all

    if cfg.get("suite", "primary") != "primary":
        raise ValidationError("only the 'primary' suite exists")
    t0 = time.perf_counter()
    results = run_all()
    body = {
        "criteria": [
            {"number": r.number, "name": r.name, "passed": r.passed, "runtime": r.runtime, "detail": r.detail}
            for r in results
        ],
        "all_passed": all(r.passed for r in results),
    }
    report = _report(cfg, "verify", body, t0)
    dump_json(report, _out_dir(cfg) / "verify.json")
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failed: {failed}" if failed else ""))
    return EXIT_OK if not failed else EXIT_INVARIANT


# parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ramified", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *keys):
        p.add_argument("--config", help="TOML file; flags override its values")
        p.add_argument("--out", help="output directory")
        if "tau" in keys:
            p.add_argument("--tau", help="contraction ratio or 'critical'")
        if "m" in keys:
            p.add_argument("--m", type=int, help="pre-fractal generation")
        if "h" in keys:
            p.add_argument("--h", type=float, help="target mesh size")
        if "preset" in keys:
            p.add_argument("--preset", help="problem preset name")
            for c in ("beta", "lam", "f0", "g"):
                p.add_argument(f"--{c}", type=float, help=f"override constant {c}")
            p.add_argument("--total-mass", dest="total_mass", type=float)

    p = sub.add_parser("geometry", help="build a pre-fractal and export its polygons")
    common(p, "tau", "m")
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("hausdorff", help="upper and lower Hausdorff-measure bounds")
    common(p, "tau")
    p.add_argument("--n", type=int)
    p.add_argument("--heuristic", action="store_true", default=None)
    p.add_argument("--beam", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--sample-depth", dest="sample_depth", type=int)
    p.set_defaults(func=cmd_hausdorff)

    p = sub.add_parser("solve", help="stationary Robin problem")
    common(p, "tau", "m", "h", "preset")
    p.add_argument("--export-matrices", dest="export_matrices", action="store_true", default=None)
    p.add_argument("--csv", action="store_true", default=None, help="also write mesh CSV tables")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evolve", help="heat flow by the theta-scheme")
    common(p, "tau", "m", "h", "preset")
    p.add_argument("--T", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--lumped", action="store_true", default=None)
    p.add_argument("--every", type=int, help="write every k-th frame")
    p.add_argument("--kappa-p", dest="kappa_p", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--kappa-q", dest="kappa_q", type=float)
    p.add_argument("--q", type=float)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("verify", help="run the acceptance suite")
    common(p)
    p.add_argument("--suite", default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve(args)
        return args.func(cfg)
    except (ValidationError, ExactSearchLimit, DepthError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except RamifiedError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
