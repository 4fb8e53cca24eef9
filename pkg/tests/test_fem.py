from types import SimpleNamespace

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from ramified import geometry as G
from ramified.errors import NonCoerciveError, ValidationError
from ramified.fem import (
    CoefficientSet,
    assemble,
    coercivity_certificate,
    export_matrix_market,
    load_vector,
    mass_matrix,
    stiffness_matrix,
)
from ramified.mesh import boundary_measure_weights, triangulate


def _setup(m=1, tau=0.5, h=0.5):
    d = G.build_prefractal(m, tau)
    mesh = triangulate(d, h)
    return d, mesh, boundary_measure_weights(d, mesh)


def _polygon_moment_y(v):
    # int y dA over a polygon (counterclockwise), via Green's formula
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return ((x * yn - xn * y) * (y + yn)).sum() / 6.0


def test_unit_triangle_reference_element():
    tri = SimpleNamespace(
        nodes=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        triangles=np.array([[0, 1, 2]]),
        n_nodes=3,
        areas=np.array([0.5]),
    )
    K = stiffness_matrix(tri).toarray()
    M = mass_matrix(tri).toarray()
    assert np.allclose(K, 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]), atol=1e-13)
    assert np.allclose(M, np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24, atol=1e-13)
    assert np.allclose(mass_matrix(tri, lumped=True).diagonal(), [1 / 6] * 3, atol=1e-15)


def test_laplacian_rows_sum_to_zero():
    _, mesh, w = _setup()
    s = assemble(mesh, CoefficientSet(beta=0.0), w)
    assert np.abs(s.K_full @ np.ones(mesh.n_nodes)).max() < 1e-12


def test_mass_totals():
    d, mesh, w = _setup(2, 0.55, 0.5)
    s = assemble(mesh, CoefficientSet(), w)
    one = np.ones(mesh.n_nodes)
    assert one @ s.M_full @ one == pytest.approx(d.area, rel=1e-12)
    assert one @ s.B_full @ one == pytest.approx(1.0, abs=1e-12)


def test_dirichlet_elimination():
    _, mesh, w = _setup()
    s = assemble(mesh, CoefficientSet(), w)
    assert s.K.shape == (len(s.free), len(s.free))
    assert len(s.free) + len(s.dirichlet_nodes) == mesh.n_nodes


def test_symmetric_without_convection():
    _, mesh, w = _setup()
    s = assemble(mesh, CoefficientSet(alpha=((2.0, 0.3), (0.3, 1.0)), lam=0.5, beta=2.0), w)
    K = s.K_full
    assert abs(K - K.T).max() <= 1e-12 * abs(K).max()


def test_convection_is_linear_in_eta():
    _, mesh, w = _setup()
    eta = lambda x: np.stack([x[:, 1] + 1.0, -0.5 * x[:, 0]], axis=1)
    K_pos = assemble(mesh, CoefficientSet(eta=eta), w).K_full
    K_neg = assemble(mesh, CoefficientSet(eta=lambda x: -eta(x)), w).K_full
    K0 = assemble(mesh, CoefficientSet(), w).K_full
    assert abs(K_pos + K_neg - 2 * K0).max() < 1e-12


def test_affine_coefficients_integrate_exactly():
    d, mesh, w = _setup(1, 0.55, 0.5)
    moment = sum(_polygon_moment_y(h.vertices) for h in d.hexagons)
    one = np.ones(mesh.n_nodes)
    x1 = mesh.nodes[:, 0]
    # u = x1, v = 1, eta = (x2 + 1, 0): int eta . grad u = int (x2 + 1)
    conv = assemble(mesh, CoefficientSet(alpha=1.0, beta=0.0, eta=lambda x: np.stack([x[:, 1] + 1, 0 * x[:, 0]], 1)), w)
    lap = assemble(mesh, CoefficientSet(beta=0.0), w)
    value = one @ (conv.K_full - lap.K_full) @ x1
    assert value == pytest.approx(d.area + moment, rel=1e-13)
    # u = v = 1, lam = 2 - x2: int lam
    react = assemble(mesh, CoefficientSet(beta=0.0, lam=lambda x: 2 - x[:, 1]), w)
    assert one @ react.K_full @ one == pytest.approx(2 * d.area - moment, rel=1e-13)
    # load of f0 = x2 against v = 1
    assert load_vector(mesh, w, f0=lambda x: x[:, 1]).sum() == pytest.approx(moment, rel=1e-13)


def test_gradient_load_terms():
    d, mesh, w = _setup(0, 0.5, 0.5)
    # f1 = 1: F(v) = int dv/dx1, so F(x1) = area
    b = load_vector(mesh, w, f1=1.0)
    assert b @ mesh.nodes[:, 0] == pytest.approx(d.area, rel=1e-13)
    b = load_vector(mesh, w, f2=1.0)
    assert b @ mesh.nodes[:, 1] == pytest.approx(d.area, rel=1e-13)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_load_linearity(a, b, c, e):
    _, mesh, w = _setup(1, 0.5, 1.0)
    f = lambda x: np.sin(x[:, 0]) * a
    f2 = lambda x: x[:, 1] * c
    g = lambda x, n: b * n[:, 0]
    g2 = lambda x, n: e + 0 * x[:, 0]
    lhs = load_vector(mesh, w, f0=lambda x: f(x) + f2(x), g=lambda x, n: g(x, n) + g2(x, n))
    rhs = load_vector(mesh, w, f0=f, g=g) + load_vector(mesh, w, f0=f2, g=g2)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_ellipticity_rejected():
    _, mesh, w = _setup()
    with pytest.raises(ValidationError):
        assemble(mesh, CoefficientSet(alpha=((1.0, 0.0), (0.0, -1.0))), w)


def test_certificate_matches_dense_eigenproblem():
    _, mesh, w = _setup(1, 0.5, 0.5)
    s = assemble(mesh, CoefficientSet(eta=(1.0, 0.5), lam=1.0, beta=1.0), w)
    cert = coercivity_certificate(s)
    A = s.K.toarray()
    G_ = (s.M + s.S).toarray()
    oracle = sla.eigh(0.5 * (A + A.T), G_, eigvals_only=True)[0]
    assert cert.lower == pytest.approx(oracle, rel=1e-8)
    assert cert.lower > 0


def test_certificate_monotone_in_beta():
    _, mesh, w = _setup(1, 0.5, 0.5)
    vals = [coercivity_certificate(assemble(mesh, CoefficientSet(beta=b), w)).lower for b in (1, 2, 5, 10)]
    assert all(y >= x - 1e-12 for x, y in zip(vals, vals[1:]))


def test_non_coercive_detected():
    _, mesh, w = _setup(1, 0.5, 0.5)
    with pytest.raises(NonCoerciveError):
        coercivity_certificate(assemble(mesh, CoefficientSet(lam=-200.0), w))


def test_negative_reaction_detected_by_dense_oracle():
    _, mesh, w = _setup(1, 0.5, 0.5)
    shifted = assemble(mesh, CoefficientSet(lam=-40.0), w)
    B = shifted.K.toarray()
    G_ = (shifted.M + shifted.S).toarray()
    assert sla.eigh(0.5 * (B + B.T), G_, eigvals_only=True)[0] < 0
    with pytest.raises(NonCoerciveError):
        coercivity_certificate(shifted)


def test_strong_convection():
    from ramified.solvers import solve_elliptic

    _, mesh, w = _setup(1, 0.5, 0.25)
    s = assemble(mesh, CoefficientSet(eta=(50.0, 0.0), lam=0.0, beta=10.0, f0=1.0), w)
    try:
        cert = coercivity_certificate(s)
    except NonCoerciveError:
        return
    assert cert.lower > 0
    assert solve_elliptic(s).residual < 1e-10


def test_matrix_market_export(tmp_path):
    from scipy.io import mmread

    _, mesh, w = _setup(0, 0.5, 1.0)
    s = assemble(mesh, CoefficientSet(f0=1.0), w)
    paths = export_matrix_market(s, str(tmp_path / "sys"))
    K = mmread(paths[0])
    assert abs(K - s.K).max() < 1e-15
