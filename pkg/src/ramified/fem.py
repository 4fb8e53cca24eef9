"""P1 finite elements for the mixed Dirichlet/Robin problem.

Bilinear form on V_2 (zero on the base and lateral edges)::

    E(u, v) = int alpha grad u . grad v + int (eta . grad u) v + int lam u v
              + int beta u v dmu

and load ``F(v) = int f0 v + f . grad v + int g v dmu``. The measure mu
lives on the terminal edges with the density from ``RobinWeights``.
"""
from __future__ import annotations

import inspect
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

from .errors import NonCoerciveError, SingularSystem, ValidationError
from .mesh import Mesh, RobinWeights

log = logging.getLogger(__name__)

# degree-2 rule on the reference triangle (barycentric a, b; weight / area)
TRI_QUAD = (np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]]), np.full(3, 1 / 3))
# degree-4 rule, used for error norms
_a, _b = 0.445948490915965, 0.091576213509771
TRI_QUAD4 = (
    np.array(
        [[_a, _a], [1 - 2 * _a, _a], [_a, 1 - 2 * _a], [_b, _b], [1 - 2 * _b, _b], [_b, 1 - 2 * _b]]
    ),
    np.array([0.223381589678011] * 3 + [0.109951743655322] * 3),
)
EDGE_QUAD = (np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]), np.array([0.5, 0.5]))


def _const_or_call(value, x, shape):
    if value is None:
        return np.zeros((len(x),) + shape)
    if callable(value):
        out = np.asarray(value(x), dtype=float)
    else:
        out = np.asarray(value, dtype=float)
    if shape == (2, 2) and out.ndim == 0:
        out = float(out) * np.eye(2)
    if shape == (2, 2) and out.shape == (len(x),):
        out = out[:, None, None] * np.eye(2)
    if out.shape == shape or out.ndim == 0:
        out = np.broadcast_to(out, (len(x),) + shape).astype(float)
    if out.shape != (len(x),) + shape:
        raise ValidationError(f"coefficient returned shape {out.shape}, expected {(len(x),) + shape}")
    if not np.all(np.isfinite(out)):
        raise ValidationError("coefficient is not finite")
    return out


def _n_args(fn) -> int:
    try:
        params = inspect.signature(fn).parameters.values()
    except (TypeError, ValueError):
        return 2
    if any(p.kind is p.VAR_POSITIONAL for p in params):
        return 2
    return sum(p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD) for p in params)


def _boundary_values(value, x, normal):
    """Boundary data may depend on the point and on the outward normal."""
    if value is None:
        return np.zeros(len(x))
    if callable(value):
        out = value(x, normal) if _n_args(value) >= 2 else value(x)
        out = np.asarray(out, dtype=float)
    else:
        out = np.asarray(value, dtype=float)
    out = np.broadcast_to(out, (len(x),)).astype(float)
    if not np.all(np.isfinite(out)):
        raise ValidationError("boundary coefficient is not finite")
    return out


@dataclass
class CoefficientSet:
    """Coefficients of the form and load. Constants or callables of x (or x, normal)."""

    alpha: object = 1.0
    eta: object = None
    lam: object = 0.0
    beta: object = 1.0
    f0: object = 0.0
    f1: object = 0.0
    f2: object = 0.0
    g: object = 0.0

    def replace(self, **kw) -> "CoefficientSet":
        data = dict(self.__dict__)
        data.update(kw)
        return CoefficientSet(**data)


@dataclass(frozen=True)
class _Geometry:
    x0: np.ndarray
    jac: np.ndarray  # (T, 2, 2), columns are edge vectors
    area: np.ndarray
    grads: np.ndarray  # (T, 2, 3)


def _triangle_geometry(mesh: Mesh) -> _Geometry:
    p = mesh.nodes[mesh.triangles]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv_t = np.empty_like(jac)  # inverse transpose
    inv_t[:, 0, 0] = jac[:, 1, 1] / det
    inv_t[:, 0, 1] = -jac[:, 1, 0] / det
    inv_t[:, 1, 0] = -jac[:, 0, 1] / det
    inv_t[:, 1, 1] = jac[:, 0, 0] / det
    ref_grad = np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
    grads = inv_t @ ref_grad
    return _Geometry(p[:, 0], jac, 0.5 * det, grads)


def quadrature_points(mesh: Mesh, rule=TRI_QUAD):
    """Physical points (T, Q, 2), weights (T, Q) and basis values (Q, 3)."""
    geo = _triangle_geometry(mesh)
    ref, w = rule
    x = geo.x0[:, None, :] + np.einsum("tij,qj->tqi", geo.jac, ref)
    phi = np.column_stack([1.0 - ref.sum(1), ref[:, 0], ref[:, 1]])
    return x, geo.area[:, None] * w[None, :], phi


def _scatter(mesh: Mesh, local: np.ndarray, n: int) -> sp.csr_matrix:
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def mass_matrix(mesh: Mesh, lumped: bool = False) -> sp.csr_matrix:
    area = np.abs(mesh.areas)
    n = mesh.n_nodes
    if lumped:
        diag = np.bincount(mesh.triangles.ravel(), np.repeat(area / 3.0, 3), minlength=n)
        return sp.diags(diag).tocsr()
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _scatter(mesh, area[:, None, None] * ref, n)


def stiffness_matrix(mesh: Mesh) -> sp.csr_matrix:
    geo = _triangle_geometry(mesh)
    local = geo.area[:, None, None] * np.einsum("tia,tib->tab", geo.grads, geo.grads)
    return _scatter(mesh, local, mesh.n_nodes)


def robin_points(mesh: Mesh, weights: RobinWeights):
    """Gauss points on the Robin edges, with their measure weights."""
    idx = mesh.robin_edges
    e = mesh.boundary_edges[idx]
    p0, p1 = mesh.nodes[e[:, 0]], mesh.nodes[e[:, 1]]
    s, w = EDGE_QUAD
    x = p0[:, None, :] + s[None, :, None] * (p1 - p0)[:, None, :]
    mass = (weights.edge_density[idx] * mesh.boundary_lengths[idx])[:, None] * w[None, :]
    phi = np.column_stack([1.0 - s, s])
    normal = np.repeat(mesh.boundary_normals[idx][:, None, :], len(s), axis=1)
    return idx, e, x, mass, phi, normal


def _robin_matrix(mesh, weights, beta) -> sp.csr_matrix:
    idx, e, x, mass, phi, normal = robin_points(mesh, weights)
    n = mesh.n_nodes
    if len(idx) == 0:
        return sp.csr_matrix((n, n))
    b = _boundary_values(beta, x.reshape(-1, 2), normal.reshape(-1, 2)).reshape(mass.shape)
    local = np.einsum("eq,qa,qb->eab", b * mass, phi, phi)
    rows = np.repeat(e, 2, axis=1).ravel()
    cols = np.tile(e, (1, 2)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def robin_mass(mesh: Mesh, weights: RobinWeights) -> sp.csr_matrix:
    """Gram matrix of the boundary measure, so u^T B u is the L^2(mu) norm squared."""
    return _robin_matrix(mesh, weights, 1.0)


def load_vector(mesh: Mesh, weights: RobinWeights, f0=0.0, f1=0.0, f2=0.0, g=0.0) -> np.ndarray:
    n = mesh.n_nodes
    x, wq, phi = quadrature_points(mesh)
    flat = x.reshape(-1, 2)
    shape = wq.shape
    geo = _triangle_geometry(mesh)
    vals0 = _const_or_call(f0, flat, ()).reshape(shape)
    vals1 = _const_or_call(f1, flat, ()).reshape(shape)
    vals2 = _const_or_call(f2, flat, ()).reshape(shape)
    local = np.einsum("tq,qa->ta", vals0 * wq, phi)
    local += np.einsum("tq,ta->ta", vals1 * wq, geo.grads[:, 0, :])
    local += np.einsum("tq,ta->ta", vals2 * wq, geo.grads[:, 1, :])
    out = np.bincount(mesh.triangles.ravel(), local.ravel(), minlength=n)
    idx, e, xb, mass, phib, normal = robin_points(mesh, weights)
    if len(idx):
        gv = _boundary_values(g, xb.reshape(-1, 2), normal.reshape(-1, 2)).reshape(mass.shape)
        lb = np.einsum("eq,qa->ea", gv * mass, phib)
        out += np.bincount(e.ravel(), lb.ravel(), minlength=n)
    return out


@dataclass(eq=False)
class DiscreteSystem:
    mesh: Mesh
    weights: RobinWeights
    coeffs: CoefficientSet
    K_full: sp.csr_matrix
    M_full: sp.csr_matrix
    S_full: sp.csr_matrix
    B_full: sp.csr_matrix  # boundary-measure Gram matrix
    load_full: np.ndarray
    dirichlet_nodes: np.ndarray
    free: np.ndarray
    dirichlet_values: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def _restrict(self, A):
        return A[self.free][:, self.free].tocsc()

    @property
    def K(self) -> sp.csc_matrix:
        return self._restrict(self.K_full)

    @property
    def M(self) -> sp.csc_matrix:
        return self._restrict(self.M_full)

    @property
    def S(self) -> sp.csc_matrix:
        return self._restrict(self.S_full)

    @property
    def B(self) -> sp.csc_matrix:
        return self._restrict(self.B_full)

    def rhs(self, load_full: np.ndarray | None = None) -> np.ndarray:
        """Free-node right-hand side, with the Dirichlet lift moved across."""
        b = self.load_full if load_full is None else load_full
        out = b[self.free].copy()
        if self.dirichlet_values is not None:
            coupling = self.K_full[self.free][:, self.dirichlet_nodes]
            out -= coupling @ self.dirichlet_values[self.dirichlet_nodes]
        return out

    def expand(self, free_values: np.ndarray) -> np.ndarray:
        full = np.zeros(self.mesh.n_nodes)
        if self.dirichlet_values is not None:
            full[self.dirichlet_nodes] = self.dirichlet_values[self.dirichlet_nodes]
        full[self.free] = free_values
        return full

    def load(self, f0=0.0, f1=0.0, f2=0.0, g=0.0) -> np.ndarray:
        return load_vector(self.mesh, self.weights, f0, f1, f2, g)

    def h1_norm(self, u_full: np.ndarray) -> float:
        return float(np.sqrt(max(u_full @ (self.M_full @ u_full) + u_full @ (self.S_full @ u_full), 0.0)))

    def l2_norm(self, u_full: np.ndarray) -> float:
        return float(np.sqrt(max(u_full @ (self.M_full @ u_full), 0.0)))

    def grad_norm(self, u_full: np.ndarray) -> float:
        return float(np.sqrt(max(u_full @ (self.S_full @ u_full), 0.0)))

    def boundary_norm(self, u_full: np.ndarray) -> float:
        return float(np.sqrt(max(u_full @ (self.B_full @ u_full), 0.0)))


def assemble(
    mesh: Mesh,
    coeffs: CoefficientSet,
    weights: RobinWeights,
    *,
    dirichlet=None,
    check: bool = True,
) -> DiscreteSystem:
    """Assemble the stiffness, mass and load on ``mesh``.

    ``dirichlet`` optionally lifts nonzero values on the Dirichlet edges
    (a callable of x); by default the solution vanishes there.
    """
    x, wq, phi = quadrature_points(mesh)
    geo = _triangle_geometry(mesh)
    flat = x.reshape(-1, 2)
    nt, nq = wq.shape
    alpha = _const_or_call(coeffs.alpha, flat, (2, 2)).reshape(nt, nq, 2, 2)
    eta = _const_or_call(coeffs.eta, flat, (2,)).reshape(nt, nq, 2)
    lam = _const_or_call(coeffs.lam, flat, ()).reshape(nt, nq)

    diag: dict = {}
    sym = 0.5 * (alpha + np.swapaxes(alpha, -1, -2))
    alpha0 = float(np.linalg.eigvalsh(sym.reshape(-1, 2, 2))[:, 0].min())
    diag["alpha0"] = alpha0
    if check and not alpha0 > 0:
        raise ValidationError(f"alpha is not uniformly elliptic (min eigenvalue {alpha0:.3e})")

    # K[a, b] = E(phi_b, phi_a)
    local = np.einsum("tq,tib,tqij,tja->tab", wq, geo.grads, alpha, geo.grads)
    local += np.einsum("tq,tqi,tib,qa->tab", wq, eta, geo.grads, phi)
    local += np.einsum("tq,tq,qa,qb->tab", wq, lam, phi, phi)
    n = mesh.n_nodes
    K = _scatter(mesh, local, n) + _robin_matrix(mesh, weights, coeffs.beta)
    K = K.tocsr()

    dnodes = mesh.dirichlet_nodes
    free = np.setdiff1d(np.arange(n), dnodes)
    if len(free) == 0:
        raise SingularSystem("no free nodes")
    lift = None
    if dirichlet is not None:
        lift = np.zeros(n)
        lift[dnodes] = _const_or_call(dirichlet, mesh.nodes[dnodes], ())

    diag.update(sign_conditions(mesh, coeffs, weights))
    system = DiscreteSystem(
        mesh=mesh,
        weights=weights,
        coeffs=coeffs,
        K_full=K,
        M_full=mass_matrix(mesh),
        S_full=stiffness_matrix(mesh),
        B_full=robin_mass(mesh, weights),
        load_full=load_vector(mesh, weights, coeffs.f0, coeffs.f1, coeffs.f2, coeffs.g),
        dirichlet_nodes=dnodes,
        free=free,
        dirichlet_values=lift,
        diagnostics=diag,
    )
    return system


def sign_conditions(mesh: Mesh, coeffs: CoefficientSet, weights: RobinWeights) -> dict:
    """Pointwise sign conditions lam - div(eta)/2 >= 0 and beta >= 0 at quadrature points.

    The divergence of a callable eta is taken by central differences. These
    are diagnostics only: coercivity is certified separately.
    """
    x, _, _ = quadrature_points(mesh)
    flat = x.reshape(-1, 2)
    lam = _const_or_call(coeffs.lam, flat, ())
    div = np.zeros(len(flat))
    if callable(coeffs.eta):
        step = 1e-6
        for k in range(2):
            e = np.zeros(2)
            e[k] = step
            div += (
                _const_or_call(coeffs.eta, flat + e, (2,))[:, k]
                - _const_or_call(coeffs.eta, flat - e, (2,))[:, k]
            ) / (2 * step)
    _, _, xb, _, _, normal = robin_points(mesh, weights)
    beta = _boundary_values(coeffs.beta, xb.reshape(-1, 2), normal.reshape(-1, 2))
    return {
        "lam_minus_half_div_eta_min": float((lam - 0.5 * div).min()),
        "beta_min": float(beta.min()) if len(beta) else 0.0,
        "sign_condition_holds": bool((lam - 0.5 * div).min() >= 0 and (beta.min() if len(beta) else 0) >= 0),
    }


@dataclass(frozen=True)
class CoercivityCertificate:
    lower: float  # min over V_2 of E(u, u) / ||u||_{H^1}^2 on the mesh
    method: str
    iterations: int


def coercivity_certificate(system: DiscreteSystem, tol: float = 1e-10, maxiter: int = 500) -> CoercivityCertificate:
    """Smallest generalized eigenvalue of sym(K) against the H^1 Gram matrix.

    Raises NonCoerciveError when that eigenvalue is not positive.
    """
    A = system.K
    Ssym = (0.5 * (A + A.T)).tocsc()
    G = (system.M + system.S).tocsc()
    # shift-invert around zero finds the eigenvalue closest to zero; confirm
    # definiteness with an unshifted lowest-eigenvalue solve when needed.
    try:
        vals = eigsh(Ssym, k=1, M=G, sigma=0.0, which="LM", tol=tol, maxiter=maxiter, return_eigenvectors=False)
        near_zero = float(vals[0])
    except Exception as exc:  # singular sym(K) shows up here
        raise NonCoerciveError(f"symmetric part is singular: {exc}") from exc
    method = "shift-invert"
    lowest = near_zero
    if near_zero > 0:
        # a negative eigenvalue further from zero would be missed; rule it out
        # by a Cholesky-style LU with symmetric pivoting
        lu = splu(Ssym, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
        symmetric_pivots = np.array_equal(lu.perm_r, lu.perm_c)
        if not (symmetric_pivots and np.all(lu.U.diagonal() > 0)):
            vals = eigsh(Ssym, k=1, M=G, which="SA", tol=tol, maxiter=20 * maxiter, return_eigenvectors=False)
            lowest = min(near_zero, float(vals[0]))
            method = "lowest-algebraic"
    if not lowest > 0:
        raise NonCoerciveError(f"form is not coercive on V_2: eigenvalue {lowest:.4e}")
    return CoercivityCertificate(lowest, method, maxiter)


def export_matrix_market(system: DiscreteSystem, prefix: str) -> list[str]:
    from scipy.io import mmwrite

    paths = []
    for name, mat in (("K", system.K), ("M", system.M), ("B", system.B)):
        path = f"{prefix}_{name}.mtx"
        mmwrite(path, mat)
        paths.append(path)
    path = f"{prefix}_load.mtx"
    mmwrite(path, sp.csr_matrix(system.rhs()[:, None]))
    paths.append(path)
    return paths
