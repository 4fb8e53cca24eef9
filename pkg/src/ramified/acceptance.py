"""Acceptance criteria, runnable from the CLI and from pytest.

Each criterion returns a ``CriterionResult`` carrying the measured numbers,
the tolerance it was judged against and the wall time.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse.linalg import spsolve

from . import geometry, hausdorff
from .analysis import oscillation_profile, prefractal_convergence
from .errors import OverlapError
from .fem import TRI_QUAD4, CoefficientSet, assemble, quadrature_points
from .mesh import boundary_measure_weights, triangulate, validate_mesh
from .presets import get_preset
from .solvers import (
    elliptic_data_norm,
    energy_estimate_ratio,
    linf_bound_ratio,
    solve_elliptic,
    solve_parabolic,
)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    runtime: float
    budget: float
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d} {self.name} ({self.runtime:.2f}s / {self.budget:g}s)"


def _timed(number, name, budget, fn: Callable[[], tuple[bool, dict]]) -> CriterionResult:
    t0 = time.perf_counter()
    ok, detail = fn()
    dt = time.perf_counter() - t0
    within = dt < budget
    detail["within_runtime_budget"] = within
    return CriterionResult(number, name, bool(ok and within), dt, budget, detail)


def _orders(errors) -> list[float]:
    e = np.asarray(errors)
    return np.log2(e[:-1] / e[1:]).tolist()


# 1 -------------------------------------------------------------------------

def criterion_tau_star() -> CriterionResult:
    def run():
        geometry.solve_tau_star.cache_clear()
        t0 = time.perf_counter()
        tau = geometry.solve_tau_star()
        elapsed = time.perf_counter() - t0
        residual = abs(geometry.tau_polynomial(tau))
        ok = abs(tau - 0.593465) <= 1e-6 and residual < 1e-12 and elapsed < 1e-3
        return ok, {"tau_star": tau, "residual": residual, "solve_seconds": elapsed}

    return _timed(1, "critical ratio", 1.0, run)


# 2 -------------------------------------------------------------------------

def criterion_a1() -> CriterionResult:
    def run():
        detail, ok = {}, True
        for key, tau in (("critical", geometry.solve_tau_star()), ("0.5", 0.5)):
            depth = hausdorff.default_sample_depth(tau, 1)
            row = hausdorff.compute_a_n(1, tau, extra_depth=depth - 1)
            target = hausdorff.PUBLISHED_A1[key]
            hit = abs(row.a_n - target) <= 5e-4
            width_ok = row.enclosure_width < 5e-4 and depth - 1 >= 14
            ok &= hit and width_ok
            detail[key] = {
                "computed_a_1": row.a_n,
                "published_a_1": target,
                "abs_error": abs(row.a_n - target),
                "enclosure_width": row.enclosure_width,
                "extra_depth": depth - 1,
                "first_increment_score": hausdorff.first_increment_score(tau),
            }
        return ok, detail

    return _timed(2, "Hausdorff a_1 values", 30.0, run)


# 3 -------------------------------------------------------------------------

def _terminal_endpoint_diameter(tau: float, level: int) -> tuple[float, float]:
    """Attractor diameter from images of the base endpoints, with its error bound."""
    base = geometry.base_hexagon(tau).vertices[:2]
    g = [geometry.similitude(i, tau, validate=False) for i in (1, 2)]
    pts = base.copy()
    for _ in range(level):
        pts = np.concatenate([g[0](pts), g[1](pts)])
    diam = geometry.point_set_diameter(pts)
    a = np.array(hausdorff.anchor_point(tau))
    r0 = hausdorff.certified_radius(tau)
    err = 2.0 * tau**level * (np.linalg.norm(base - a, axis=1).max() + r0)
    return diam, err


def criterion_sandwich() -> CriterionResult:
    def run():
        detail, ok = {}, True
        for key, tau in (("0.5", 0.5), ("critical", geometry.solve_tau_star())):
            rows = hausdorff.sandwich_report(3, tau)
            a = [r.a_n for r in rows]
            b = [r.b_n for r in rows]
            width = rows[0].enclosure_width
            d = rows[0].d
            diam2, err2 = _terminal_endpoint_diameter(tau, 19)
            identity_gap = abs(a[0] ** (1.0 / d) - diam2)
            checks = {
                "a_non_increasing": all(y <= x for x, y in zip(a, a[1:])),
                "b_non_decreasing": all(y >= x for x, y in zip(b, b[1:])),
                "b_le_a": all(y <= x for x, y in zip(a, b)),
                "a1_equals_diameter_power": identity_gap <= width + err2,
            }
            ok &= all(checks.values())
            detail[key] = {
                "a_n": a,
                "b_n": b,
                "enclosure_width": width,
                "diameter_second_route": diam2,
                "second_route_error": err2,
                "identity_gap": identity_gap,
                **checks,
            }
        return ok, detail

    return _timed(3, "sandwich structure", 120.0, run)


# 4 -------------------------------------------------------------------------

def criterion_b_values() -> CriterionResult:
    def run():
        detail = {}
        for key, tau in (("0.5", 0.5), ("critical", geometry.solve_tau_star())):
            rows = hausdorff.sandwich_report(3, tau)
            delta = rows[0].delta
            detail[key] = {
                "published_b_1": hausdorff.PUBLISHED_B1[key],
                "computed_b_n": [r.b_n for r in rows],
                "b_1_from_published_a_1": hausdorff.compute_b_n(1, hausdorff.PUBLISHED_A1[key], delta, tau),
                "delta": delta,
            }
        lines = [
            f"tau={k}: published b_1={v['published_b_1']:.11g}, computed b_1..3="
            + ", ".join(f"{x:.6g}" for x in v["computed_b_n"])
            for k, v in detail.items()
        ]
        detail["comparison"] = lines
        return True, detail

    return _timed(4, "b-value comparison emitted", 120.0, run)


# 5 -------------------------------------------------------------------------

def _mms_field():
    def u(x):
        return np.sin(x[:, 0] + 0.5) * np.cos(0.7 * x[:, 1]) + x[:, 0] * x[:, 1]

    def grad(x):
        return np.stack(
            [
                np.cos(x[:, 0] + 0.5) * np.cos(0.7 * x[:, 1]) + x[:, 1],
                -0.7 * np.sin(x[:, 0] + 0.5) * np.sin(0.7 * x[:, 1]) + x[:, 0],
            ],
            axis=1,
        )

    def neg_lap(x):
        return 1.49 * np.sin(x[:, 0] + 0.5) * np.cos(0.7 * x[:, 1])

    return u, grad, neg_lap


def l2_error(field_values, mesh, exact) -> float:
    x, wq, phi = quadrature_points(mesh, TRI_QUAD4)
    uh = (field_values[mesh.triangles][:, None, :] * phi[None]).sum(-1)
    ue = exact(x.reshape(-1, 2)).reshape(wq.shape)
    return float(np.sqrt((((uh - ue) ** 2) * wq).sum()))


def mms_errors(m: int, hs, tau: float = 0.5) -> list[float]:
    """L^2 errors of the manufactured solution with Robin coefficient beta = 1."""
    u, grad, neg_lap = _mms_field()
    errs = []
    for h in hs:
        domain = geometry.build_prefractal(m, tau)
        mesh = triangulate(domain, h)
        w = boundary_measure_weights(domain, mesh)
        rho = w.edge_density[mesh.robin_edges][0]
        coeffs = CoefficientSet(
            f0=neg_lap, g=lambda x, n: (grad(x) * n).sum(1) / rho + u(x), beta=1.0
        )
        sol = solve_elliptic(assemble(mesh, coeffs, w, dirichlet=u))
        errs.append(l2_error(sol.values, mesh, u))
    return errs


def criterion_mms() -> CriterionResult:
    def run():
        e0 = mms_errors(0, [1.0, 0.5, 0.25, 0.125])
        e2 = mms_errors(2, [0.5, 0.25, 0.125, 0.0625])
        o0, o2 = _orders(e0), _orders(e2)
        ok = min(o0) >= 1.8 and min(o2) >= 1.5
        return ok, {"errors_m0": e0, "orders_m0": o0, "errors_m2": e2, "orders_m2": o2}

    return _timed(5, "manufactured-solution convergence", 60.0, run)


# 6 -------------------------------------------------------------------------

def criterion_positivity() -> CriterionResult:
    def run():
        preset = get_preset("laplacian-robin")
        detail, ok = {}, True
        for tau in (0.5, geometry.solve_tau_star()):
            for m in (1, 2, 3):
                domain = geometry.build_prefractal(m, tau)
                mesh = triangulate(domain, 0.25)
                w = boundary_measure_weights(domain, mesh)
                sol = solve_elliptic(assemble(mesh, preset.coefficients(), w))
                lo = float(sol.values.min())
                ok &= lo >= -1e-8
                detail[f"tau={tau:.6f},m={m}"] = lo
        return ok, detail

    return _timed(6, "inverse positivity", 60.0, run)


# 7 -------------------------------------------------------------------------

def heat_energy_ratios(levels=((0.5, 10), (0.25, 20), (0.125, 40)), tau: float = 0.5, m: int = 1):
    preset = get_preset("heat")
    ratios = []
    for h, steps in levels:
        domain = geometry.build_prefractal(m, tau)
        mesh = triangulate(domain, h)
        w = boundary_measure_weights(domain, mesh)
        u0 = solve_elliptic(assemble(mesh, get_preset("laplacian-robin").coefficients(), w)).values
        system = assemble(mesh, preset.coefficients(), w)
        series = solve_parabolic(
            system, u0, final_time=1.0, steps=steps, theta=1.0, f=preset.source, g=preset.flux
        )
        ratios.append(energy_estimate_ratio(series, preset.source, preset.flux)["ratio"])
    return ratios


def criterion_energy() -> CriterionResult:
    def run():
        r = heat_energy_ratios()
        variation = (max(r) - min(r)) / min(r)
        ok = all(math.isfinite(x) for x in r) and variation < 0.25
        return ok, {"ratios": r, "relative_variation": variation}

    return _timed(7, "parabolic energy estimate", 300.0, run)


# 8 -------------------------------------------------------------------------

def time_mms_errors(theta: float, steps_list=(10, 20, 40, 80), tau: float = 0.5) -> list[float]:
    """Final-time errors against the exact semi-discrete solution exp(-t) w_h.

    w_h solves (K - M) w = b, so with load exp(-t) b and initial value w_h the
    ODE M u' + K u = exp(-t) b has exactly this solution; only the time
    discretization error remains.
    """
    domain = geometry.build_prefractal(1, tau)
    mesh = triangulate(domain, 0.25)
    w = boundary_measure_weights(domain, mesh)
    system = assemble(mesh, CoefficientSet(f0=1.0, g=1.0), w)
    b = system.rhs()
    wh = spsolve((system.K - system.M).tocsc(), b)
    errs = []
    for steps in steps_list:
        series = solve_parabolic(
            system, system.expand(wh), final_time=1.0, steps=steps, theta=theta,
            load=lambda t: math.exp(-t) * b,
        )
        e = series.final[system.free] - math.exp(-1.0) * wh
        errs.append(float(np.sqrt(e @ (system.M @ e))))
    return errs


def criterion_time_accuracy() -> CriterionResult:
    def run():
        e1, e2 = time_mms_errors(1.0), time_mms_errors(0.5)
        o1, o2 = _orders(e1), _orders(e2)
        ok = min(o1) >= 0.9 and min(o2) >= 1.8
        return ok, {"errors_theta1": e1, "orders_theta1": o1, "errors_theta_half": e2, "orders_theta_half": o2}

    return _timed(8, "time accuracy", 120.0, run)


# 9 -------------------------------------------------------------------------

def criterion_linf() -> CriterionResult:
    def run():
        preset = get_preset("laplacian-robin")
        ratios = []
        for m in (1, 2, 3):
            domain = geometry.build_prefractal(m, 0.5)
            mesh = triangulate(domain, 0.25)
            w = boundary_measure_weights(domain, mesh)
            system = assemble(mesh, preset.coefficients(), w)
            ratios.append(linf_bound_ratio(solve_elliptic(system), elliptic_data_norm(system)))
        spread = max(ratios) / min(ratios)
        return spread < 3.0, {"ratios": ratios, "max_over_min": spread}

    return _timed(9, "sup-bound stability", 60.0, run)


# 10 ------------------------------------------------------------------------

def oscillation_exponents(hs=(0.0625, 0.03125), tau: float = 0.5, m: int = 2) -> dict:
    domain = geometry.build_prefractal(m, tau)
    child = domain.hexagons[domain.index_of((2,))]
    centers = {
        "root junction": (tuple(domain.hexagons[0].vertices[2]), 3.0),
        "level-1 junction": (tuple(child.vertices[2]), 1.5),
        "level-1 interior": (tuple(child.vertices.mean(axis=0)), 1.5),
    }
    preset = get_preset("laplacian-robin")
    out: dict = {name: [] for name in centers}
    for h in hs:
        mesh = triangulate(domain, h)
        w = boundary_measure_weights(domain, mesh)
        sol = solve_elliptic(assemble(mesh, preset.coefficients(), w))
        for name, (c, rho) in centers.items():
            out[name].append(oscillation_profile(sol.values, mesh, c, rho, 3).delta0)
    return out


def criterion_oscillation() -> CriterionResult:
    def run():
        table = oscillation_exponents()
        ok = all(min(v) > 0 and max(v) - min(v) < 0.1 for v in table.values())
        return ok, {"delta0_per_refinement": table}

    return _timed(10, "oscillation exponent", 60.0, run)


# 11 ------------------------------------------------------------------------

def criterion_prefractal() -> CriterionResult:
    def run():
        table = prefractal_convergence("laplacian-robin", [1, 2, 3, 4], 0.125)
        return table.decreasing, table.as_dict()

    return _timed(11, "pre-fractal convergence", 180.0, run)


# 12 ------------------------------------------------------------------------

def criterion_structure() -> CriterionResult:
    def run():
        detail, ok = {}, True
        for tau in (0.5, 0.55, geometry.solve_tau_star()):
            for m in range(6):
                domain = geometry.build_prefractal(m, tau)
                hex_ok = len(domain.hexagons) == 2 ** (m + 1) - 1
                robin = domain.edges_of("robin")
                robin_ok = len(robin) == 2 ** (m + 1) and all(
                    abs(e.length - 2 * tau ** (m + 1)) <= 1e-10 for e in robin
                )
                area_series = geometry.base_hexagon_area(tau) * sum(
                    (2 * tau**2) ** k for k in range(m + 1)
                )
                area_ok = abs(domain.area - area_series) <= 1e-10 * area_series
                mesh = triangulate(domain, 1.0)
                report = validate_mesh(mesh)
                mass = float(boundary_measure_weights(domain, mesh).edge_mass(mesh).sum())
                mass_ok = abs(mass - 1.0) <= 1e-12
                good = hex_ok and robin_ok and area_ok and mass_ok
                ok &= good
                detail[f"tau={tau:.6f},m={m}"] = {
                    "hexagons": len(domain.hexagons),
                    "robin_edges": len(robin),
                    "robin_mass": mass,
                    "min_angle_deg": report["min_angle_deg"],
                    "ok": good,
                }
        try:
            geometry.build_prefractal(6, 0.62, allow_supercritical=True)
            overlap_detected = False
        except OverlapError:
            overlap_detected = True
        ok &= overlap_detected
        detail["supercritical_overlap_detected"] = overlap_detected
        return ok, detail

    return _timed(12, "structural invariants", 60.0, run)


CRITERIA = [
    criterion_tau_star,
    criterion_a1,
    criterion_sandwich,
    criterion_b_values,
    criterion_mms,
    criterion_positivity,
    criterion_energy,
    criterion_time_accuracy,
    criterion_linf,
    criterion_oscillation,
    criterion_prefractal,
    criterion_structure,
]


def run_all(printer=print) -> list[CriterionResult]:
    results = []
    for fn in CRITERIA:
        res = fn()
        results.append(res)
        if printer is not None:
            printer(res.line())
    return results
