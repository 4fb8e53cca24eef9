import numpy as np
import pytest

from ramified import geometry as G
from ramified.errors import MeshError, ValidationError
from ramified.io import read_vtk_points, write_mesh_csv, write_vtk
from ramified.mesh import boundary_measure_weights, reference_mesh, triangulate, validate_mesh


def test_coarsest_fan():
    d = G.build_prefractal(0, 0.5)
    mesh = triangulate(d, 2.0)
    assert len(mesh.triangles) >= 6
    assert mesh.areas.sum() == pytest.approx(G.base_hexagon_area(0.5), rel=1e-12)
    validate_mesh(mesh)


@pytest.mark.parametrize("tau", [0.5, 0.55, 0.5934653559719874])
def test_conforming_m2(tau):
    d = G.build_prefractal(2, tau)
    mesh = triangulate(d, 0.2)
    validate_mesh(mesh)
    # weld audit: no two nodes share a position
    rounded = np.round(mesh.nodes / 1e-9).astype(np.int64)
    assert len(np.unique(rounded, axis=0)) == mesh.n_nodes
    # every interface edge carries the same nodes from both sides
    for e in d.edges_of("interface"):
        on_seg = _nodes_on_segment(mesh.nodes, e.start, e.end)
        assert len(on_seg) == 2**mesh.refinement + 1


def _nodes_on_segment(nodes, a, b, tol=1e-10):
    d = b - a
    t = ((nodes - a) @ d) / (d @ d)
    proj = a + t[:, None] * d
    mask = (np.linalg.norm(nodes - proj, axis=1) < tol) & (t > -tol) & (t < 1 + tol)
    return np.flatnonzero(mask)


def test_refinement_halves_max_edge():
    d = G.build_prefractal(1, 0.5)
    sizes = [triangulate(d, h).max_edge() for h in (0.5, 0.25, 0.125)]
    for coarse, fine in zip(sizes, sizes[1:]):
        assert coarse / fine == pytest.approx(2.0, rel=0.2)
    assert all(s <= h + 1e-12 for s, h in zip(sizes, (0.5, 0.25, 0.125)))


def test_ccw_and_positive_area():
    mesh = triangulate(G.build_prefractal(3, 0.55), 0.5)
    assert np.all(mesh.areas >= 1e-14)


def test_h_floor():
    d = G.build_prefractal(2, 0.5)
    with pytest.raises(MeshError):
        triangulate(d, 0.5**3 / 4 * 0.99)
    triangulate(d, 0.5**3 / 4)
    with pytest.raises(ValidationError):
        triangulate(d, 0.0)


@pytest.mark.parametrize("tau", [0.5, 0.55, 0.5934653559719874])
def test_min_angle(tau):
    # red refinement produces similar triangles, so the angle bound of the
    # coarse fan holds at every refinement level
    for r in range(4):
        ref = reference_mesh(tau, r)
        p = ref.nodes[ref.triangles]
        ang = []
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            c = (u * v).sum(1) / np.linalg.norm(u, axis=1) / np.linalg.norm(v, axis=1)
            ang.append(np.degrees(np.arccos(c)).min())
        assert min(ang) >= 15.0
    for m in range(6):
        assert triangulate(G.build_prefractal(m, tau), 2.0).min_angle() >= 15.0


def test_tag_partition():
    d = G.build_prefractal(2, 0.5)
    mesh = triangulate(d, 0.25)
    kinds = set(mesh.boundary_kind.tolist())
    assert kinds == {"base", "lateral", "robin"}
    robin_nodes = np.unique(mesh.boundary_edges[mesh.robin_edges])
    # Robin and Dirichlet sets meet only at the shared segment endpoints
    shared = np.intersect1d(robin_nodes, mesh.dirichlet_nodes)
    assert len(shared) == 2 * 2 ** (d.generation + 1)


def test_deterministic():
    d = G.build_prefractal(2, 0.55)
    a, b = triangulate(d, 0.25), triangulate(d, 0.25)
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.triangles, b.triangles)


@pytest.mark.parametrize("m", [0, 3])
def test_measure_weights(m):
    tau = 0.55
    d = G.build_prefractal(m, tau)
    mesh = triangulate(d, 1.0)
    w = boundary_measure_weights(d, mesh)
    assert len(w.density_by_word) == 2 ** (m + 1)
    for dens in w.density_by_word.values():
        assert dens == pytest.approx(1 / (2 ** (m + 2) * tau ** (m + 1)), rel=1e-14)
    mass = w.edge_mass(mesh)
    per_word = {}
    for e in mesh.robin_edges:
        per_word[mesh.boundary_word[e]] = per_word.get(mesh.boundary_word[e], 0.0) + mass[e]
    assert all(v == pytest.approx(2.0 ** -(m + 1), abs=1e-14) for v in per_word.values())
    assert mass.sum() == pytest.approx(1.0, abs=1e-12)
    w2 = boundary_measure_weights(d, mesh, 2.5)
    assert w2.edge_mass(mesh).sum() == pytest.approx(2.5, abs=1e-12)


def test_exports_roundtrip(tmp_path):
    d = G.build_prefractal(1, 0.5)
    mesh = triangulate(d, 0.5)
    values = mesh.nodes[:, 0] ** 2
    write_vtk(tmp_path / "m.vtk", mesh, {"u": values})
    nodes, tris, data = read_vtk_points(tmp_path / "m.vtk")
    assert np.array_equal(nodes, mesh.nodes)
    assert np.array_equal(tris, mesh.triangles)
    assert np.array_equal(data["u"], values)
    files = write_mesh_csv(tmp_path / "csv", mesh)
    assert [f.name for f in files] == ["nodes.csv", "tris.csv", "bedges.csv"]
    lines = (tmp_path / "csv" / "bedges.csv").read_text().splitlines()
    assert len(lines) == len(mesh.boundary_edges) + 1
