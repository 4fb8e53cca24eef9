"""Conforming triangulations of the pre-fractal domains.

Every hexagon is the image of one reference triangulation of the base
hexagon: a centroid fan of six triangles, each split into ``4**r`` congruent
copies. All hexagon edges therefore carry ``2**r`` segments, so a child's
base edge and its parent's attachment edge always match node for node.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MeshError, ValidationError
from .geometry import (
    ATTACHMENT_EDGE,
    BASE,
    PreFractalDomain,
    Word,
    _base_vertices,
    word_map,
)

WELD_TOL = 1e-12


@dataclass(frozen=True)
class ReferenceMesh:
    nodes: np.ndarray
    triangles: np.ndarray
    edge_nodes: tuple[np.ndarray, ...]  # per hexagon edge, ordered start -> end


def _fan_lattice(a, b, c, n):
    """Nodes and triangles of the regular n-subdivision of triangle (a, b, c)."""
    ij = [(i, j) for j in range(n + 1) for i in range(n + 1 - j)]
    index = {p: k for k, p in enumerate(ij)}
    lam = np.array(ij, dtype=float) / n
    nodes = (
        (1.0 - lam[:, :1] - lam[:, 1:]) * a + lam[:, :1] * b + lam[:, 1:] * c
    )
    tris = []
    for j in range(n):
        for i in range(n - j):
            tris.append((index[i, j], index[i + 1, j], index[i, j + 1]))
            if i + j + 1 < n:
                tris.append((index[i + 1, j], index[i + 1, j + 1], index[i, j + 1]))
    edge = [index[i, 0] for i in range(n + 1)]
    return nodes, np.array(tris), np.array(edge)


@functools.lru_cache(maxsize=16)
def reference_mesh(tau: float, refinement: int) -> ReferenceMesh:
    verts = _base_vertices(tau)
    area_w = verts[:, 0] * np.roll(verts[:, 1], -1) - np.roll(verts[:, 0], -1) * verts[:, 1]
    cx = ((verts[:, 0] + np.roll(verts[:, 0], -1)) * area_w).sum() / (3.0 * area_w.sum())
    cy = ((verts[:, 1] + np.roll(verts[:, 1], -1)) * area_w).sum() / (3.0 * area_w.sum())
    centre = np.array([cx, cy])
    n = 2**refinement

    all_nodes, all_tris, edges = [], [], []
    offset = 0
    for k in range(6):
        nodes, tris, edge = _fan_lattice(verts[k], verts[(k + 1) % 6], centre, n)
        all_nodes.append(nodes)
        all_tris.append(tris + offset)
        edges.append(edge + offset)
        offset += len(nodes)
    nodes = np.concatenate(all_nodes)
    tris = np.concatenate(all_tris)

    # Weld the spokes shared by neighbouring fan triangles.
    from scipy.spatial import cKDTree

    canon = np.arange(len(nodes))
    for i, j in sorted(cKDTree(nodes).query_pairs(1e-9)):
        root_i, root_j = canon[i], canon[j]
        canon[canon == max(root_i, root_j)] = min(root_i, root_j)
    keep, new_index = np.unique(canon, return_inverse=True)
    nodes = nodes[keep]
    tris = new_index[tris]
    edges = tuple(new_index[e] for e in edges)
    return ReferenceMesh(nodes, tris, edges)


def refinement_for(h: float, tau: float) -> int:
    """Smallest r whose reference mesh has every edge of length <= h."""
    coarse = reference_mesh(tau, 0)
    longest = _max_edge(coarse.nodes, coarse.triangles)
    return max(0, math.ceil(math.log2(longest / h) - 1e-12))


def _edge_lengths(nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p = nodes[tris]
    return np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)


def _max_edge(nodes, tris) -> float:
    return float(_edge_lengths(nodes, tris).max())


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray  # (N, 2)
    triangles: np.ndarray  # (T, 3), counterclockwise
    boundary_edges: np.ndarray  # (E, 2), oriented with the domain on the left
    boundary_kind: np.ndarray  # (E,) "base" / "lateral" / "robin"
    boundary_word: tuple  # (E,) word of the Robin edge, None otherwise
    h: float
    refinement: int
    triangle_hexagon: np.ndarray  # (T,) owning hexagon index
    domain: PreFractalDomain = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @functools.cached_property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @functools.cached_property
    def dirichlet_nodes(self) -> np.ndarray:
        mask = np.isin(self.boundary_kind, ("base", "lateral"))
        return np.unique(self.boundary_edges[mask])

    @functools.cached_property
    def robin_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_kind == "robin")

    @functools.cached_property
    def boundary_lengths(self) -> np.ndarray:
        p = self.nodes[self.boundary_edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @functools.cached_property
    def boundary_normals(self) -> np.ndarray:
        p = self.nodes[self.boundary_edges]
        d = p[:, 1] - p[:, 0]
        return np.stack([d[:, 1], -d[:, 0]], axis=1) / self.boundary_lengths[:, None]

    def max_edge(self) -> float:
        return _max_edge(self.nodes, self.triangles)

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        p = self.nodes[self.triangles]
        worst = np.inf
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            cos = (u * v).sum(1) / np.linalg.norm(u, axis=1) / np.linalg.norm(v, axis=1)
            worst = min(worst, float(np.degrees(np.arccos(np.clip(cos, -1, 1))).min()))
        return worst

    def edge_counts(self) -> dict[tuple[int, int], int]:
        counts: dict[tuple[int, int], int] = {}
        for tri in self.triangles.tolist():
            for k in range(3):
                a, b = tri[k], tri[(k + 1) % 3]
                key = (a, b) if a < b else (b, a)
                counts[key] = counts.get(key, 0) + 1
        return counts


def triangulate(domain: PreFractalDomain, h: float) -> Mesh:
    if not h > 0:
        raise ValidationError("mesh size h must be positive")
    m, tau = domain.generation, domain.tau
    if h < tau ** (m + 1) / 4.0:
        raise MeshError(
            f"h={h} below the floor tau^(m+1)/4 = {tau ** (m + 1) / 4.0:.3e}"
        )
    r = refinement_for(h, tau)
    ref = reference_mesh(tau, r)
    n_ref = len(ref.nodes)
    base_edge = ref.edge_nodes[BASE]
    base_set = np.zeros(n_ref, dtype=bool)
    base_set[base_edge] = True
    interior_local = np.flatnonzero(~base_set)

    nodes_out: list[np.ndarray] = []
    tris_out: list[np.ndarray] = []
    owner: list[np.ndarray] = []
    local_to_global: dict[Word, np.ndarray] = {}
    n_global = 0
    for k, hexagon in enumerate(domain.hexagons):
        coords = word_map(hexagon.word, tau, validate=False)(ref.nodes)
        l2g = np.empty(n_ref, dtype=np.int64)
        if hexagon.level == 0:
            l2g[:] = np.arange(n_ref) + n_global
            nodes_out.append(coords)
            n_global += n_ref
        else:
            parent = hexagon.word[:-1]
            letter = hexagon.word[-1]
            parent_edge = ref.edge_nodes[ATTACHMENT_EDGE[letter]][::-1]
            shared = local_to_global[parent][parent_edge]
            all_coords = np.concatenate(nodes_out)
            mismatch = np.abs(all_coords[shared] - coords[base_edge]).max()
            if mismatch > WELD_TOL:
                raise MeshError(
                    f"interface of hexagon {hexagon.word} unmatched by {mismatch:.2e}"
                )
            l2g[base_edge] = shared
            l2g[interior_local] = np.arange(len(interior_local)) + n_global
            nodes_out.append(coords[interior_local])
            n_global += len(interior_local)
        local_to_global[hexagon.word] = l2g
        tris_out.append(l2g[ref.triangles])
        owner.append(np.full(len(ref.triangles), k))

    nodes = np.concatenate(nodes_out)
    triangles = np.concatenate(tris_out)

    bedges, kinds, bwords = [], [], []
    for edge in domain.edges:
        if edge.tag.kind == "interface":
            continue
        l2g = local_to_global[domain.hexagons[edge.hexagon].word]
        chain = l2g[ref.edge_nodes[edge.local]]
        pairs = np.stack([chain[:-1], chain[1:]], axis=1)
        bedges.append(pairs)
        kinds.extend([edge.tag.kind] * len(pairs))
        bwords.extend([edge.tag.word] * len(pairs))

    mesh = Mesh(
        nodes=nodes,
        triangles=triangles,
        boundary_edges=np.concatenate(bedges),
        boundary_kind=np.array(kinds),
        boundary_word=tuple(bwords),
        h=float(h),
        refinement=r,
        triangle_hexagon=np.concatenate(owner),
        domain=domain,
    )
    if np.any(mesh.areas < 1e-14):
        raise MeshError("degenerate triangle in mesh")
    return mesh


def validate_mesh(mesh: Mesh) -> dict:
    """Check every structural mesh invariant; raise MeshError on failure."""
    report: dict = {}
    if np.any(mesh.areas < 1e-14):
        raise MeshError("non-positive or tiny triangle area")
    counts = mesh.edge_counts()
    boundary = {tuple(sorted(e)) for e in mesh.boundary_edges.tolist()}
    if len(boundary) != len(mesh.boundary_edges):
        raise MeshError("duplicate boundary edge")
    for key, c in counts.items():
        expected = 1 if key in boundary else 2
        if c != expected:
            raise MeshError(f"edge {key} shared by {c} triangles (expected {expected})")
    if not boundary <= counts.keys():
        raise MeshError("boundary edge not part of any triangle")
    domain_area = mesh.domain.area
    rel = abs(mesh.areas.sum() - domain_area) / domain_area
    if rel > 1e-8:
        raise MeshError(f"mesh area differs from domain area by {rel:.2e}")
    tau, m = mesh.domain.tau, mesh.domain.generation
    robin = mesh.robin_edges
    per_word: dict = {}
    for e in robin.tolist():
        per_word[mesh.boundary_word[e]] = per_word.get(mesh.boundary_word[e], 0.0) + float(
            mesh.boundary_lengths[e]
        )
    if len(per_word) != 2 ** (m + 1):
        raise MeshError("Robin edges do not cover every terminal segment")
    target = 2.0 * tau ** (m + 1)
    worst = max(abs(v - target) for v in per_word.values())
    if worst > 1e-10:
        raise MeshError(f"Robin segment tiling off by {worst:.2e}")
    report.update(
        nodes=mesh.n_nodes,
        triangles=len(mesh.triangles),
        min_angle_deg=mesh.min_angle(),
        max_edge=mesh.max_edge(),
        area_rel_error=rel,
    )
    return report


@dataclass(frozen=True, eq=False)
class RobinWeights:
    """Line density of the self-similar measure on the terminal edges."""

    total_mass: float
    density_by_word: dict
    edge_density: np.ndarray  # per mesh boundary edge, zero away from Robin edges

    def edge_mass(self, mesh: Mesh) -> np.ndarray:
        return self.edge_density * mesh.boundary_lengths


def boundary_measure_weights(
    domain: PreFractalDomain, mesh: Mesh, total_mass: float = 1.0
) -> RobinWeights:
    """Spread mass ``total_mass * 2**-(m+1)`` uniformly on each terminal edge."""
    if not total_mass > 0:
        raise ValidationError("total_mass must be positive")
    m, tau = domain.generation, domain.tau
    density = total_mass * 2.0 ** -(m + 1) / (2.0 * tau ** (m + 1))
    by_word = {e.tag.word: density for e in domain.edges_of("robin")}
    edge_density = np.where(mesh.boundary_kind == "robin", density, 0.0)
    return RobinWeights(float(total_mass), by_word, edge_density)
