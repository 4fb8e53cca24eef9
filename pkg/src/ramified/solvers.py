"""Stationary and time-dependent solves on an assembled system."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import SingularSystem, StepError, ValidationError, ZeroData
from .fem import DiscreteSystem, mass_matrix

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


@dataclass(eq=False)
class Field:
    system: DiscreteSystem
    values: np.ndarray  # nodal values on every mesh node
    residual: float = 0.0

    def h1_norm(self) -> float:
        return self.system.h1_norm(self.values)

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())


@dataclass(eq=False)
class TimeSeries:
    system: DiscreteSystem
    times: np.ndarray
    values: np.ndarray  # (steps + 1, n_nodes)
    theta: float
    lumped: bool
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())


def _factor(A: sp.spmatrix):
    try:
        lu = splu(A.tocsc())
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(lu.U.diagonal())) or np.any(lu.U.diagonal() == 0):
        raise SingularSystem("zero pivot in factorization")
    return lu


def solve_elliptic(system: DiscreteSystem) -> Field:
    """Direct solve of the stationary problem; checks the relative residual."""
    K = system.K
    b = system.rhs()
    lu = _factor(K)
    u = lu.solve(b)
    scale = max(np.linalg.norm(b), 1e-300)
    res = float(np.linalg.norm(K @ u - b) / scale) if np.linalg.norm(b) > 0 else float(np.linalg.norm(K @ u))
    if not np.all(np.isfinite(u)) or res > RESIDUAL_TOL:
        raise SingularSystem(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL}")
    return Field(system, system.expand(u), res)


def _time_load(system: DiscreteSystem, f, g, t: float) -> np.ndarray:
    f_t = None if f is None else (lambda x: f(t, x))
    g_t = None if g is None else (lambda x, n: g(t, x, n))
    return system.load(f0=f_t, g=g_t)[system.free]


def solve_parabolic(
    system: DiscreteSystem,
    u0,
    *,
    final_time: float,
    steps: int,
    theta: float = 1.0,
    f: Callable | None = None,
    g: Callable | None = None,
    load: Callable[[float], np.ndarray] | None = None,
    lumped: bool = False,
) -> TimeSeries:
    """theta-scheme for M u' + K u = F(t) with zero Dirichlet data.

    ``f(t, x)`` and ``g(t, x, normal)`` are sampled at t_k + theta*dt. A
    callable ``load(t)`` returning the free-node load vector replaces them.
    The factorization of M + theta*dt*K is reused for every step.
    """
    if not 0.5 <= theta <= 1.0:
        raise ValidationError("theta must lie in [1/2, 1]")
    if steps < 1 or not final_time > 0:
        raise ValidationError("need steps >= 1 and final_time > 0")
    free = system.free
    if callable(u0):
        u0_full = np.asarray(u0(system.mesh.nodes), dtype=float)
    else:
        u0_full = np.asarray(u0, dtype=float)
    if u0_full.shape == (len(free),):
        u0_full = system.expand(u0_full)
    if u0_full.shape != (system.mesh.n_nodes,):
        raise ValidationError("u0 has the wrong length")
    dt = final_time / steps
    K = system.K
    M = (mass_matrix(system.mesh, lumped=True)[free][:, free].tocsc() if lumped else system.M)
    lhs = _factor(M + theta * dt * K)
    explicit = (M - (1.0 - theta) * dt * K).tocsr()

    def F(t):
        return load(t) if load is not None else _time_load(system, f, g, t)

    values = np.zeros((steps + 1, system.mesh.n_nodes))
    u = u0_full[free].copy()
    values[0, free] = u
    times = np.linspace(0.0, final_time, steps + 1)
    min_value = float(u.min()) if len(u) else 0.0
    for k in range(steps):
        rhs = explicit @ u + dt * F(times[k] + theta * dt)
        u = lhs.solve(rhs)
        if not np.all(np.isfinite(u)):
            raise StepError(f"non-finite values at step {k + 1}")
        values[k + 1, free] = u
        min_value = min(min_value, float(u.min()))
    diag = {"dt": dt, "min_value": min_value}
    return TimeSeries(system, times, values, float(theta), lumped, diag)


def _data_samples(system: DiscreteSystem, f, g, t: float):
    """Squared L^2(Omega) norm of f(t) and squared L^2(mu) norm of g(t)."""
    from .fem import _boundary_values, quadrature_points, robin_points

    out = [0.0, 0.0]
    if f is not None:
        x, wq, _ = quadrature_points(system.mesh)
        fv = np.broadcast_to(np.asarray(f(t, x.reshape(-1, 2)), dtype=float), (wq.size,))
        out[0] = float((fv.reshape(wq.shape) ** 2 * wq).sum())
    if g is not None:
        _, _, xb, mass, _, normal = robin_points(system.mesh, system.weights)
        gv = _boundary_values(lambda p, n: g(t, p, n), xb.reshape(-1, 2), normal.reshape(-1, 2))
        out[1] = float((gv.reshape(mass.shape) ** 2 * mass).sum())
    return out


def energy_estimate_ratio(series: TimeSeries, f: Callable | None = None, g: Callable | None = None) -> dict:
    """Empirical constant of the a-priori energy estimate.

    LHS = max_k ||u_k||^2 + sum_k dt ||grad u_k||^2,
    RHS = ||u_0||^2 + int ||f||^2 dt + int ||g||^2_mu dt with the time
    integrals by the trapezoid rule on the step grid. Zero data and a zero
    solution give ratio 0.
    """
    sys_ = series.system
    dt = series.diagnostics["dt"]
    l2 = np.array([sys_.l2_norm(v) for v in series.values])
    grad = np.array([sys_.grad_norm(v) for v in series.values])
    lhs = float((l2**2).max() + dt * (grad[1:] ** 2).sum())
    samples = np.array([_data_samples(sys_, f, g, t) for t in series.times])
    trap = np.full(len(series.times), dt)
    trap[[0, -1]] *= 0.5
    rhs = float(l2[0] ** 2 + trap @ samples.sum(axis=1))
    if rhs <= 0:
        if lhs == 0:
            return {"lhs": 0.0, "rhs": 0.0, "ratio": 0.0}
        raise ZeroData("energy bound needs nonzero data")
    return {"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs}


def elliptic_data_norm(system: DiscreteSystem, p=(2.0, 4.0, 4.0), q: float = 2.0) -> float:
    """||f0||_p0 + ||f1||_p1 + ||f2||_p2 + ||g||_{q, mu} by quadrature."""
    from .fem import TRI_QUAD4, _boundary_values, _const_or_call, quadrature_points, robin_points

    p0, p1, p2 = p
    if not (p0 > 1 and p1 > 2 and p2 > 2 and q > 1):
        raise ValidationError("exponents must satisfy p0 > 1, p1 > 2, p2 > 2, q > 1")
    mesh = system.mesh
    c = system.coeffs
    x, wq, _ = quadrature_points(mesh, TRI_QUAD4)
    flat = x.reshape(-1, 2)
    total = 0.0
    for fn, pe in ((c.f0, p0), (c.f1, p1), (c.f2, p2)):
        v = np.abs(_const_or_call(fn, flat, ())).reshape(wq.shape)
        total += float(((v**pe) * wq).sum() ** (1.0 / pe))
    _, _, xb, mass, _, normal = robin_points(mesh, system.weights)
    gv = np.abs(_boundary_values(c.g, xb.reshape(-1, 2), normal.reshape(-1, 2))).reshape(mass.shape)
    total += float(((gv**q) * mass).sum() ** (1.0 / q))
    return total


def check_parabolic_exponents(kappa_p: float, p: float, kappa_q: float, q: float) -> None:
    """Integrability window 1/kappa_p + 1/p < 1 and 1/kappa_q + 1/(2q) < 1/2."""
    if not (p > 1 and kappa_p > 1 and q > 1 and kappa_q > 1):
        raise ValidationError("all exponents must exceed 1")
    if not 1.0 / kappa_p + 1.0 / p < 1.0:
        raise ValidationError(f"need 1/kappa_p + 1/p < 1, got {1 / kappa_p + 1 / p:.6g}")
    if not 1.0 / kappa_q + 1.0 / (2.0 * q) < 0.5:
        raise ValidationError(f"need 1/kappa_q + 1/(2q) < 1/2, got {1 / kappa_q + 1 / (2 * q):.6g}")


def parabolic_data_norm(
    series: TimeSeries,
    f: Callable | None,
    g: Callable | None,
    *,
    kappa_p: float = 4.0,
    p: float = 4.0,
    kappa_q: float = 8.0,
    q: float = 4.0,
) -> float:
    """||u0||_inf + ||f||_{L^kp(0,T;L^p)} + ||g||_{L^kq(0,T;L^q(mu))}."""
    from .fem import _boundary_values, quadrature_points, robin_points

    sys_ = series.system
    check_parabolic_exponents(kappa_p, p, kappa_q, q)
    series.diagnostics["exponents"] = {"kappa_p": kappa_p, "p": p, "kappa_q": kappa_q, "q": q}
    dt = series.diagnostics["dt"]
    mesh = sys_.mesh
    x, wq, _ = quadrature_points(mesh)
    _, _, xb, mass, _, normal = robin_points(mesh, sys_.weights)
    mids = series.times[:-1] + 0.5 * dt
    fk, gk = 0.0, 0.0
    for t in mids:
        if f is not None:
            fv = np.abs(np.broadcast_to(np.asarray(f(t, x.reshape(-1, 2)), float), (wq.size,)))
            fk += dt * float((((fv.reshape(wq.shape)) ** p * wq).sum()) ** (kappa_p / p))
        if g is not None:
            gv = np.abs(_boundary_values(lambda pt, n: g(t, pt, n), xb.reshape(-1, 2), normal.reshape(-1, 2)))
            gk += dt * float(((gv.reshape(mass.shape) ** q * mass).sum()) ** (kappa_q / q))
    return float(np.abs(series.values[0]).max() + fk ** (1 / kappa_p) + gk ** (1 / kappa_q))


def linf_bound_ratio(solution, data_norm: float) -> float:
    """||u||_inf / data norm for a Field or a TimeSeries."""
    if not data_norm > 0:
        if solution.sup_norm() == 0:
            return 0.0
        raise ZeroData("sup bound needs nonzero data")
    return solution.sup_norm() / data_norm
