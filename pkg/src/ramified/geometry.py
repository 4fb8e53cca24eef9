"""Similitudes, hexagons and the pre-fractal domains of the ramified tree.

The two generators are

    G_i(x) = ((-1)^i (1 - c) + c (x1 + (-1)^i x2),  1 + c + c (x2 + (-1)^(i+1) x1)),

with ``c = tau / sqrt(2)``; each is ``tau`` times a rotation by +-45 degrees.
Words are tuples over ``{1, 2}`` and ``M_w = G_{w[0]} o ... o G_{w[-1]}``.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import OverlapError, ValidationError

SQRT2 = math.sqrt(2.0)
GEOM_TOL = 1e-12

Word = tuple[int, ...]

# Vertex / edge layout of every hexagon, counterclockwise: P1, P2, P4, P6, P5, P3.
BASE, RIGHT_SIDE, RIGHT_CUT, TOP, LEFT_CUT, LEFT_SIDE = range(6)
# Hexagon edge that carries the child ``w + (i,)``; the child's base edge
# P1 -> P2 runs along it in reverse direction.
ATTACHMENT_EDGE = {1: LEFT_CUT, 2: RIGHT_CUT}


def tau_polynomial(t: float) -> float:
    """``2 sqrt2 t^5 + 2 t^4 + 2 t^2 + sqrt2 t - 2``; its root in (0, 1) is tau*."""
    return (((2.0 * SQRT2 * t + 2.0) * t + 0.0) * t + 2.0) * t * t + SQRT2 * t - 2.0


def _tau_polynomial_derivative(t: float) -> float:
    return 10.0 * SQRT2 * t**4 + 8.0 * t**3 + 4.0 * t + SQRT2


@functools.lru_cache(maxsize=None)
def solve_tau_star() -> float:
    """Critical contraction ratio: bisection on [0.5, 0.7], then one Newton step."""
    lo, hi = 0.5, 0.7
    f_lo, f_hi = tau_polynomial(lo), tau_polynomial(hi)
    assert f_lo < 0.0 < f_hi, "tau* is not bracketed by [0.5, 0.7]"
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if tau_polynomial(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    t -= tau_polynomial(t) / _tau_polynomial_derivative(t)
    return t


def validate_tau(tau: float) -> float:
    tau = float(tau)
    if not (0.0 < tau <= solve_tau_star() + 1e-15):
        raise ValidationError(
            f"tau={tau!r} outside (0, tau*] with tau*={solve_tau_star():.12f}"
        )
    return tau


@dataclass(frozen=True, eq=False)
class Similitude:
    linear: np.ndarray
    translation: np.ndarray
    ratio: float

    def __call__(self, points):
        p = np.asarray(points, dtype=float)
        return p @ self.linear.T + self.translation

    def compose(self, inner: "Similitude") -> "Similitude":
        """Return ``self o inner``."""
        return Similitude(
            self.linear @ inner.linear,
            self.linear @ inner.translation + self.translation,
            self.ratio * inner.ratio,
        )

    @classmethod
    def identity(cls) -> "Similitude":
        return cls(np.eye(2), np.zeros(2), 1.0)


def similitude(i: int, tau: float, *, validate: bool = True) -> Similitude:
    if i not in (1, 2):
        raise ValidationError(f"generator index must be 1 or 2, got {i!r}")
    if validate:
        validate_tau(tau)
    elif not 0.0 < tau < 1.0:
        raise ValidationError(f"tau={tau!r} outside (0, 1)")
    c = tau / SQRT2
    s = (-1) ** i
    linear = np.array([[c, s * c], [-s * c, c]])
    translation = np.array([s * (1.0 - c), 1.0 + c])
    return Similitude(linear, translation, float(tau))


def word_map(word: Sequence[int], tau: float, *, validate: bool = True) -> Similitude:
    gens = {i: similitude(i, tau, validate=validate) for i in (1, 2)}
    result = Similitude.identity()
    for letter in word:
        result = result.compose(gens[letter])
    return result


def apply_word(word: Sequence[int], tau: float, p, *, validate: bool = True):
    return word_map(word, tau, validate=validate)(p)


def words(n: int) -> list[Word]:
    """All words of length ``n`` in lexicographic order."""
    return [tuple(w) for w in itertools.product((1, 2), repeat=n)]


def mirror_word(word: Sequence[int]) -> Word:
    return tuple(3 - letter for letter in word)


def shoelace_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def base_hexagon_area(tau: float) -> float:
    return 2.0 + 2.0 * SQRT2 * tau - 2.0 * tau * tau


@dataclass(frozen=True, eq=False)
class Hexagon:
    vertices: np.ndarray  # (6, 2): P1, P2, P4, P6, P5, P3
    word: Word = ()

    @property
    def level(self) -> int:
        return len(self.word)

    @property
    def area(self) -> float:
        return shoelace_area(self.vertices)

    def edge(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices[k], self.vertices[(k + 1) % 6]

    def diameter(self) -> float:
        diff = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((diff**2).sum(-1)).max())


def _base_vertices(tau: float) -> np.ndarray:
    r = SQRT2 * tau
    p1, p2 = (-1.0, 0.0), (1.0, 0.0)
    p3, p4 = (-1.0, 1.0), (1.0, 1.0)
    p5, p6 = (-1.0 + r, 1.0 + r), (1.0 - r, 1.0 + r)
    return np.array([p1, p2, p4, p6, p5, p3])


def base_hexagon(tau: float) -> Hexagon:
    validate_tau(tau)
    return Hexagon(_base_vertices(tau), ())


def hexagon_for_word(word: Sequence[int], tau: float, *, validate: bool = True) -> Hexagon:
    base = _base_vertices(tau)
    return Hexagon(word_map(word, tau, validate=validate)(base), tuple(word))


def height(tau: float) -> float:
    """Sup of the vertical coordinate over the full ramified domain."""
    if not 0.0 < tau < 1.0:
        raise ValidationError(f"tau={tau!r} outside (0, 1)")
    return (1.0 + 3.0 * tau / SQRT2) / (1.0 - tau * tau)


def increment_diameter(k: int, tau: float) -> float:
    """Tabulated diameter of the k-th generation increment of the pre-fractals."""
    if k < 1:
        raise ValidationError("increment index k must be >= 1")
    return 1.0 / 2**k + tau / (2 ** (k - 1) * SQRT2)


@dataclass(frozen=True)
class EdgeTag:
    kind: str  # "base", "lateral", "interface" or "robin"
    word: Word | None = None

    def __str__(self) -> str:
        if self.word is None:
            return self.kind
        return f"{self.kind}:{format_word(self.word)}"

    @property
    def is_dirichlet(self) -> bool:
        return self.kind in ("base", "lateral")


@dataclass(frozen=True, eq=False)
class Edge:
    start: np.ndarray
    end: np.ndarray
    tag: EdgeTag
    hexagon: int  # index of the hexagon that owns the edge
    local: int  # local edge index in that hexagon

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))


@dataclass(frozen=True, eq=False)
class PreFractalDomain:
    generation: int
    tau: float
    hexagons: list[Hexagon]
    edges: list[Edge] = field(repr=False)

    def edges_of(self, kind: str) -> list[Edge]:
        return [e for e in self.edges if e.tag.kind == kind]

    @property
    def area(self) -> float:
        return sum(h.area for h in self.hexagons)

    def index_of(self, word: Sequence[int]) -> int:
        return self._word_index[tuple(word)]

    @functools.cached_property
    def _word_index(self) -> dict[Word, int]:
        return {h.word: k for k, h in enumerate(self.hexagons)}


def format_word(word: Sequence[int]) -> str:
    return "".join(str(letter) for letter in word) or "-"


def parse_word(text: str) -> Word:
    return () if text in ("", "-") else tuple(int(ch) for ch in text)


def build_prefractal(
    m: int,
    tau: float,
    *,
    check_overlap: bool = True,
    allow_supercritical: bool = False,
) -> PreFractalDomain:
    """Hexagons for every word of length 0..m with classified boundary edges.

    ``allow_supercritical`` skips the ``tau <= tau*`` guard so the overlap
    detector can be exercised just above the critical ratio.
    """
    if int(m) != m or m < 0:
        raise ValidationError(f"generation m must be a non-negative integer, got {m!r}")
    m = int(m)
    if allow_supercritical:
        if not 0.0 < tau < 1.0:
            raise ValidationError(f"tau={tau!r} outside (0, 1)")
    else:
        validate_tau(tau)
    validate = not allow_supercritical

    hexagons = [
        hexagon_for_word(w, tau, validate=validate)
        for n in range(m + 1)
        for w in words(n)
    ]
    edges: list[Edge] = []
    for k, hexagon in enumerate(hexagons):
        v = hexagon.vertices
        if hexagon.level == 0:
            edges.append(Edge(v[BASE], v[BASE + 1], EdgeTag("base"), k, BASE))
        for local in (RIGHT_SIDE, TOP, LEFT_SIDE):
            edges.append(
                Edge(v[local], v[(local + 1) % 6], EdgeTag("lateral"), k, local)
            )
        kind = "interface" if hexagon.level < m else "robin"
        for letter in (1, 2):
            local = ATTACHMENT_EDGE[letter]
            tag = EdgeTag(kind, hexagon.word + (letter,))
            edges.append(Edge(v[local], v[(local + 1) % 6], tag, k, local))

    if check_overlap:
        check_overlaps(hexagons)
    return PreFractalDomain(m, float(tau), hexagons, edges)


def _edge_normals(polys: np.ndarray) -> np.ndarray:
    d = np.roll(polys, -1, axis=-2) - polys
    normals = np.stack([-d[..., 1], d[..., 0]], axis=-1)
    return normals / np.linalg.norm(normals, axis=-1, keepdims=True)


def check_overlaps(hexagons: Sequence[Hexagon], tol: float = GEOM_TOL) -> None:
    """Separating-axis test on every pair with intersecting bounding boxes.

    Shared edges and touching corners are allowed; a penetration deeper than
    ``tol`` along every candidate axis raises :class:`OverlapError`.
    """
    if len(hexagons) < 2:
        return
    polys = np.stack([h.vertices for h in hexagons])
    lo, hi = polys.min(axis=1), polys.max(axis=1)
    i, j = np.triu_indices(len(hexagons), k=1)
    box = np.all((lo[i] < hi[j] - tol) & (lo[j] < hi[i] - tol), axis=1)
    i, j = i[box], j[box]
    if i.size == 0:
        return
    axes = np.concatenate([_edge_normals(polys[i]), _edge_normals(polys[j])], axis=1)
    proj_a = np.einsum("pvk,pak->pav", polys[i], axes)
    proj_b = np.einsum("pvk,pak->pav", polys[j], axes)
    depth = np.minimum(proj_a.max(-1), proj_b.max(-1)) - np.maximum(
        proj_a.min(-1), proj_b.min(-1)
    )
    overlapping = np.all(depth > tol, axis=1)
    if overlapping.any():
        a, b = int(i[overlapping][0]), int(j[overlapping][0])
        raise OverlapError(
            f"hexagons {format_word(hexagons[a].word)} and "
            f"{format_word(hexagons[b].word)} overlap "
            f"(penetration {depth[overlapping][0].min():.3e})"
        )


def point_set_diameter(points: np.ndarray) -> float:
    """Exact diameter of a finite planar point set (via its convex hull)."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return 0.0
    if len(pts) > 64:
        from scipy.spatial import ConvexHull, QhullError

        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def tabulated_increment_sum(tau: float, kmax: int | None = None) -> float:
    """Partial (or full, ``kmax=None``) sum of :func:`increment_diameter`."""
    if kmax is None:
        return 1.0 + SQRT2 * tau
    return sum(increment_diameter(k, tau) for k in range(1, kmax + 1))


def iter_words(max_len: int) -> Iterable[Word]:
    for n in range(max_len + 1):
        yield from words(n)
