"""Numerical probes of regularity and trace inequalities."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .errors import ResolutionError, ValidationError
from .fem import DiscreteSystem, assemble
from .mesh import Mesh, RobinWeights, boundary_measure_weights, triangulate
from .geometry import build_prefractal

log = logging.getLogger(__name__)

DEFAULT_SEED = 20240917


@dataclass(frozen=True)
class OscillationProfile:
    center: tuple[float, float]
    radii: np.ndarray
    osc: np.ndarray
    counts: np.ndarray
    delta0: float  # fitted slope of log osc against log radius
    fit_residual: float
    ratios: np.ndarray  # osc(rho_{j+1}) / osc(rho_j)
    constant: bool = False

    def as_dict(self) -> dict:
        return {
            "center": list(self.center),
            "radii": self.radii.tolist(),
            "osc": self.osc.tolist(),
            "nodes_per_ball": self.counts.tolist(),
            "delta0": self.delta0,
            "fit_residual": self.fit_residual,
            "ratios": self.ratios.tolist(),
            "constant": self.constant,
        }


def _local_h(mesh: Mesh, inside: np.ndarray) -> float:
    tri_mask = inside[mesh.triangles].any(axis=1)
    p = mesh.nodes[mesh.triangles[tri_mask]]
    return float(np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2).max())


def oscillation_profile(values: np.ndarray, mesh: Mesh, x0, rho: float, levels: int = 3) -> OscillationProfile:
    """Nodal oscillation on the balls B(x0, rho / 4**j), j < levels."""
    if levels < 2 or not rho > 0:
        raise ValidationError("need rho > 0 and at least two levels")
    x0 = np.asarray(x0, dtype=float)
    dist = np.linalg.norm(mesh.nodes - x0, axis=1)
    radii = rho / 4.0 ** np.arange(levels)
    osc, counts = [], []
    for r in radii:
        inside = dist <= r
        n = int(inside.sum())
        if n < 4:
            raise ResolutionError(f"ball of radius {r:.3g} holds only {n} nodes")
        osc.append(float(values[inside].max() - values[inside].min()))
        counts.append(n)
    h_loc = _local_h(mesh, dist <= radii[-1])
    if radii[-1] < 3.0 * h_loc:
        raise ResolutionError(f"finest radius {radii[-1]:.3g} below 3h = {3 * h_loc:.3g}")
    osc = np.array(osc)
    scale = max(np.abs(values).max(), 1.0)
    if np.all(osc <= 1e-14 * scale):
        return OscillationProfile(tuple(x0), radii, osc, np.array(counts), np.inf, 0.0, np.zeros(levels - 1), True)
    if np.any(osc <= 0):
        raise ResolutionError("oscillation vanishes on an inner ball; the fit is undefined")
    lr, lo = np.log(radii), np.log(osc)
    coef, res, *_ = np.polyfit(lr, lo, 1, full=True)
    resid = float(np.sqrt(res[0] / levels)) if len(res) else 0.0
    return OscillationProfile(
        tuple(x0), radii, osc, np.array(counts), float(coef[0]), resid, osc[1:] / osc[:-1]
    )


def random_smooth_fields(nodes: np.ndarray, trials: int, seed: int = DEFAULT_SEED, modes: int = 8, bandwidth: float = 2.0) -> np.ndarray:
    """Random trigonometric fields sampled at the nodes, shape (trials, N).

    Amplitudes, phases and frequencies are standard-normal draws (frequencies
    scaled by ``bandwidth``) from a generator seeded with ``seed``.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    omega = bandwidth * rng.standard_normal((trials, modes, 2))
    amp = rng.standard_normal((trials, modes, 2))
    phase = np.einsum("nd,tkd->tkn", nodes, omega)
    fields = (amp[..., 0, None] * np.cos(phase) + amp[..., 1, None] * np.sin(phase)).sum(axis=1)
    return fields


def _v2_fields(system: DiscreteSystem, trials: int, seed: int) -> np.ndarray:
    """Smooth members of the discrete V_2: Dirichlet-Laplacian solves of random loads."""
    raw = random_smooth_fields(system.mesh.nodes, trials, seed)
    lu = splu(system.S.tocsc())
    M_fa = system.M_full[system.free]
    out = np.zeros_like(raw)
    for k in range(trials):
        out[k, system.free] = lu.solve(M_fa @ raw[k])
    return out


def _norm_system(mesh: Mesh, weights: RobinWeights) -> DiscreteSystem:
    from .fem import CoefficientSet

    return assemble(mesh, CoefficientSet(), weights)


def trace_ratio_probe(mesh: Mesh, weights: RobinWeights, trials: int = 32, seed: int = DEFAULT_SEED) -> dict:
    """max over random smooth u of ||u||_{L^2(mu)} / ||u||_{H^1}."""
    sys_ = _norm_system(mesh, weights)
    fields = random_smooth_fields(mesh.nodes, trials, seed)
    ratios = np.array([sys_.boundary_norm(u) / sys_.h1_norm(u) for u in fields])
    return {"max_ratio": float(ratios.max()), "ratios": ratios.tolist(), "seed": seed, "trials": trials}


def poincare_probe(mesh: Mesh, trials: int = 32, seed: int = DEFAULT_SEED) -> dict:
    """max over random u in V_2 of ||u||_{H^1} / ||grad u||_2."""
    weights = boundary_measure_weights(mesh.domain, mesh)
    sys_ = _norm_system(mesh, weights)
    fields = _v2_fields(sys_, trials, seed)
    ratios = np.array([sys_.h1_norm(u) / sys_.grad_norm(u) for u in fields])
    return {"max_ratio": float(ratios.max()), "ratios": ratios.tolist(), "seed": seed, "trials": trials}


def poincare_ratio(system: DiscreteSystem, u: np.ndarray) -> float:
    return system.h1_norm(u) / system.grad_norm(u)


def epsilon_inequality_probe(
    mesh: Mesh, weights: RobinWeights, eps_list, trials: int = 32, seed: int = DEFAULT_SEED
) -> dict:
    """Empirical C_eps with ||u||_mu <= eps ||grad u|| + C_eps ||u||_2 over random draws."""
    eps = np.asarray(eps_list, dtype=float)
    if eps.size == 0 or np.any(eps <= 0):
        raise ValidationError("eps_list must be positive")
    sys_ = _norm_system(mesh, weights)
    fields = random_smooth_fields(mesh.nodes, trials, seed)
    tr = np.array([sys_.boundary_norm(u) for u in fields])
    gr = np.array([sys_.grad_norm(u) for u in fields])
    l2 = np.array([sys_.l2_norm(u) for u in fields])
    c_eps = [float(np.clip((tr - e * gr) / l2, 0.0, None).max()) for e in eps]
    return {"eps": eps.tolist(), "C_eps": c_eps, "seed": seed, "trials": trials}


@dataclass
class ConvergenceTable:
    m_list: list
    h: float
    differences: list  # e between consecutive entries, H^1 on the coarser domain
    norms: list
    decreasing: bool
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "m_list": self.m_list,
            "h": self.h,
            "differences": self.differences,
            "h1_norms": self.norms,
            "strictly_decreasing": self.decreasing,
        }


def _restrict(fine: Mesh, coarse: Mesh, values: np.ndarray) -> np.ndarray:
    """Nodal values of a fine-domain field at the coarse-domain nodes."""
    n = coarse.n_nodes
    if fine.n_nodes >= n and np.array_equal(fine.nodes[:n], coarse.nodes):
        return values[:n]
    from scipy.spatial import cKDTree

    dist, idx = cKDTree(fine.nodes).query(coarse.nodes)
    if dist.max() > 1e-10:
        raise ResolutionError("coarse nodes are not nodes of the finer mesh")
    return values[idx]


def prefractal_convergence(preset, m_list, h: float, tau: float | None = None) -> ConvergenceTable:
    """Solve the preset on each generation and difference consecutive solutions."""
    from .presets import get_preset
    from .solvers import solve_elliptic

    chosen = get_preset(preset) if isinstance(preset, str) else preset
    m_list = [int(m) for m in m_list]
    if len(m_list) < 2 or any(b < a for a, b in zip(m_list, m_list[1:])):
        raise ValidationError("m_list must be non-decreasing with at least two entries")
    tau = chosen.tau if tau is None else tau
    solved = []
    for m in m_list:
        domain = build_prefractal(m, tau)
        mesh = triangulate(domain, h)
        weights = boundary_measure_weights(domain, mesh, chosen.total_mass)
        sys_ = assemble(mesh, chosen.coefficients(), weights)
        solved.append(solve_elliptic(sys_))
    diffs, norms = [], []
    for a, b in zip(solved, solved[1:]):
        restricted = _restrict(b.system.mesh, a.system.mesh, b.values)
        diffs.append(a.system.h1_norm(a.values - restricted))
    norms = [f.h1_norm() for f in solved]
    decreasing = all(y < x for x, y in zip(diffs, diffs[1:]))
    return ConvergenceTable(m_list, float(h), diffs, norms, decreasing)
