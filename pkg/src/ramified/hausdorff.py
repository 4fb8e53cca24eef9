"""Upper and lower bounds for the d-dimensional Hausdorff measure of the canopy.

Both generators have ratio ``tau`` and ``tau**d == 1/2``, so an n-cell carries
self-similar mass ``2**-n`` and a collection of ``k`` n-cells scores

    diam(union)**d * 2**n / k.

``a_n`` is the minimum score over all nonempty collections. Diameters are not
available in closed form; every cell is sampled at a fixed total depth ``D``
and each sample point carries a certified enclosure disc of radius
``tau**D * R0`` (see :func:`certified_radius`). Scores use the upper end of
the resulting diameter interval, so ``a_n`` stays an upper bound.
"""
from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DepthError, ExactSearchLimit, InvariantViolation, ValidationError
from .geometry import SQRT2, Word, increment_diameter, similitude, solve_tau_star

EXACT_MAX_N = 4
MAX_SAMPLE_DEPTH = 22
# Exponent relating the control estimate of delta to the case-4 crossover.
CROSSOVER_EXPONENT = 3.70431
PUBLISHED_A1 = {"0.5": 0.8535533906, "critical": 0.894684280597}
PUBLISHED_B1 = {"0.5": 0.7582916255, "critical": 0.83383674565}


def hausdorff_dimension(tau: float) -> float:
    if not 0.0 < tau < 1.0:
        raise ValidationError(f"tau={tau!r} outside (0, 1)")
    return -math.log(2.0) / math.log(tau)


@dataclass(frozen=True)
class Cell:
    word: Word

    @property
    def depth(self) -> int:
        return len(self.word)

    @property
    def index(self) -> int:
        """Position among the n-cells, first letter most significant."""
        idx = 0
        for letter in self.word:
            idx = 2 * idx + (letter - 1)
        return idx

    @property
    def mass(self) -> float:
        return 2.0 ** -self.depth

    @classmethod
    def from_index(cls, index: int, depth: int) -> "Cell":
        return cls(tuple(((index >> (depth - 1 - b)) & 1) + 1 for b in range(depth)))


@dataclass(frozen=True)
class DiameterBound:
    lower: float
    upper: float
    depth_used: int

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def __contains__(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class MeasureBounds:
    n: int
    a_n: float
    b_n: float
    delta: float
    d: float
    tau: float
    exact: bool
    argmin_bitmask: int = 0
    enclosure_width: float = 0.0
    sample_depth: int = 0
    locally_optimal: bool = True

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _maps(tau: float):
    g1, g2 = similitude(1, tau, validate=False), similitude(2, tau, validate=False)
    return (g1.linear, g1.translation), (g2.linear, g2.translation)


@functools.lru_cache(maxsize=8)
def anchor_point(tau: float) -> tuple[float, float]:
    """Midpoint of the fixed points of the two generators.

    Both fixed points lie on the attractor and are mirror images, so the
    anchor sits on the symmetry axis inside the attractor's convex hull.
    """
    fixed = [np.linalg.solve(np.eye(2) - lin, t) for lin, t in _maps(tau)]
    mid = 0.5 * (fixed[0] + fixed[1])
    return 0.0, float(mid[1])


def _iterate(points: np.ndarray, tau: float, depth: int) -> np.ndarray:
    (l1, t1), (l2, t2) = _maps(tau)
    pts = points
    for _ in range(depth):
        pts = np.concatenate([pts @ l1.T + t1, pts @ l2.T + t2])
    return pts


@functools.lru_cache(maxsize=8)
def certified_radius(tau: float, level: int = 12) -> float:
    """Bound on ``sup |x - anchor|`` over the attractor.

    With ``r_L = max_{|w| = L} |M_w(a) - a|``, telescoping over blocks of
    length ``L`` gives ``sup_x |x - a| <= r_L / (1 - tau**L)``.
    """
    a = np.array(anchor_point(tau))
    pts = _iterate(a[None, :], tau, level)
    return float(np.sqrt(((pts - a) ** 2).sum(1)).max()) / (1.0 - tau**level)


def sample_attractor(words_depth: int, tau: float) -> np.ndarray:
    """Images of the anchor under every word of length ``words_depth``.

    Row ``j`` belongs to the word whose letters are the binary digits of
    ``j`` (first letter most significant, 0 -> generator 1).
    """
    if words_depth < 0:
        raise DepthError("depth must be non-negative")
    if words_depth > MAX_SAMPLE_DEPTH:
        raise DepthError(f"depth {words_depth} exceeds memory guard {MAX_SAMPLE_DEPTH}")
    return _sample_cached(float(tau), int(words_depth))


@functools.lru_cache(maxsize=4)
def _sample_cached(tau: float, depth: int) -> np.ndarray:
    pts = _iterate(np.array([anchor_point(tau)]), tau, depth)
    pts.setflags(write=False)
    return pts


def enclosure_radius(tau: float, sample_depth: int) -> float:
    return tau**sample_depth * certified_radius(tau)


def _hull(points: np.ndarray) -> np.ndarray:
    from scipy.spatial import ConvexHull

    if len(points) < 4:
        return points
    return points[ConvexHull(points).vertices]


def _max_cross_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = a[:, None, :] - b[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


@functools.lru_cache(maxsize=16)
def sampled_pair_diameters(n: int, tau: float, sample_depth: int) -> np.ndarray:
    """``S[i, j]`` = max distance between sample points of n-cells i and j."""
    if sample_depth < n:
        raise DepthError("sample depth must be at least the cell depth")
    pts = sample_attractor(sample_depth, tau)
    count = 2**n
    block = 2 ** (sample_depth - n)
    hulls = [_hull(pts[j * block:(j + 1) * block]) for j in range(count)]
    out = np.zeros((count, count))
    for i in range(count):
        for j in range(i, count):
            out[i, j] = out[j, i] = _max_cross_distance(hulls[i], hulls[j])
    out.setflags(write=False)
    return out


def cell_union_diameter(
    cells: Iterable[Cell], tau: float, extra_depth: int
) -> DiameterBound:
    """Certified enclosure of the diameter of a union of equal-depth cells."""
    cells = list(cells)
    if not cells:
        raise ValidationError("need at least one cell")
    if extra_depth < 1:
        raise DepthError("extra_depth must be >= 1")
    n = cells[0].depth
    if any(c.depth != n for c in cells):
        raise ValidationError("all cells must have the same depth")
    depth = n + extra_depth
    idx = sorted({c.index for c in cells})
    sampled = sampled_pair_diameters(n, float(tau), depth)[np.ix_(idx, idx)].max()
    eps = 2.0 * enclosure_radius(tau, depth)
    return DiameterBound(max(sampled - eps, 0.0), sampled + eps, depth)


def _popcount(masks: np.ndarray) -> np.ndarray:
    counts = np.zeros(masks.shape, dtype=np.int64)
    m = masks.copy()
    while np.any(m):
        counts += m & 1
        m >>= 1
    return counts


def _subset_diameters(pair: np.ndarray) -> np.ndarray:
    """Max of ``pair`` over all index pairs of every bitmask subset."""
    count = pair.shape[0]
    diam = np.zeros(2**count)
    for b in range(count):
        low = np.arange(2**b, dtype=np.int64)
        if b:
            bits = ((low[:, None] >> np.arange(b)) & 1).astype(bool)
            cross = np.where(bits, pair[b, :b][None, :], 0.0).max(axis=1)
        else:
            cross = np.zeros(1)
        diam[2**b:2 ** (b + 1)] = np.maximum(np.maximum(diam[:2**b], cross), pair[b, b])
    return diam


def _scores(diam: np.ndarray, counts: np.ndarray, n: int, d: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return diam**d * 2.0**n / counts


def _check_search_args(n: int, tau: float, extra_depth: int) -> None:
    if n < 1:
        raise ValidationError("n must be >= 1")
    if not 0.0 < tau < 1.0:
        raise ValidationError(f"tau={tau!r} outside (0, 1)")
    if extra_depth < 1:
        raise DepthError("extra_depth must be >= 1")
    if n + extra_depth > MAX_SAMPLE_DEPTH:
        raise DepthError(
            f"n + extra_depth = {n + extra_depth} exceeds {MAX_SAMPLE_DEPTH}"
        )


def compute_a_n(n: int, tau: float, extra_depth: int = 16) -> MeasureBounds:
    """Exhaustive minimum over all ``2**(2**n) - 1`` collections of n-cells."""
    if n > EXACT_MAX_N:
        raise ExactSearchLimit(
            f"exact search supports n <= {EXACT_MAX_N}; use compute_a_n_heuristic"
        )
    _check_search_args(n, tau, extra_depth)
    depth = n + extra_depth
    d = hausdorff_dimension(tau)
    eps = 2.0 * enclosure_radius(tau, depth)
    sampled = sampled_pair_diameters(n, float(tau), depth)
    diam_hi = _subset_diameters(sampled + eps)
    masks = np.arange(2 ** (2**n), dtype=np.int64)
    counts = _popcount(masks)
    scores = _scores(diam_hi, counts, n, d)
    scores[0] = np.inf
    best = int(np.argmin(scores))  # first minimum: lexicographic tie-break
    neighbours = [best ^ (1 << j) for j in range(2**n)]
    locally_optimal = all(scores[k] >= scores[best] for k in neighbours if k)
    diam_lo = max(_subset_diameters(sampled)[best] - eps, 0.0)
    return MeasureBounds(
        n=n,
        a_n=float(scores[best]),
        b_n=math.nan,
        delta=math.nan,
        d=d,
        tau=float(tau),
        exact=True,
        argmin_bitmask=best,
        enclosure_width=float(diam_hi[best] - diam_lo),
        sample_depth=depth,
        locally_optimal=locally_optimal,
    )


def compute_a_n_heuristic(
    n: int, tau: float, beam: int = 64, extra_depth: int | None = None
) -> MeasureBounds:
    """Beam search over collections grown one cell at a time.

    Level ``k`` keeps the ``beam`` k-collections of smallest diameter (ties
    broken by bitmask); the returned score is the best seen at any level, so
    it can only overestimate the exhaustive minimum.
    """
    if beam < 1:
        raise ValidationError("beam must be >= 1")
    if extra_depth is None:
        extra_depth = max(1, min(16, MAX_SAMPLE_DEPTH - n))
    _check_search_args(n, tau, extra_depth)
    if n > 10:
        raise ExactSearchLimit("heuristic search supports n <= 10")
    depth = n + extra_depth
    d = hausdorff_dimension(tau)
    eps = 2.0 * enclosure_radius(tau, depth)
    upper = sampled_pair_diameters(n, float(tau), depth) + eps
    count = 2**n
    one = np.int64(1)

    # Frontier state: member sets (python ints), diameters, row maxima.
    order = np.lexsort((np.arange(count), np.diag(upper)))[:beam]
    members = [int(one << int(j)) for j in order]
    diam = np.diag(upper)[order].copy()
    rowmax = upper[order].copy()
    best_score = float(diam.min() ** d * count)
    best_mask = members[int(np.argmin(diam))]
    for k in range(2, count + 1):
        member_bits = np.array(
            [[(mask >> j) & 1 for j in range(count)] for mask in members], dtype=bool
        )
        cand = np.maximum(np.maximum(diam[:, None], rowmax), np.diag(upper)[None, :])
        cand[member_bits] = np.inf
        flat = {}
        rows, cols = np.nonzero(np.isfinite(cand))
        for r, c in zip(rows.tolist(), cols.tolist()):
            mask = members[r] | (1 << c)
            value = cand[r, c]
            if mask not in flat or value < flat[mask][0]:
                flat[mask] = (value, r, c)
        ranked = sorted(flat.items(), key=lambda kv: (kv[1][0], kv[0]))[:beam]
        members = [mask for mask, _ in ranked]
        diam = np.array([v[0] for _, v in ranked])
        rowmax = np.array(
            [np.maximum(rowmax[v[1]], upper[v[2]]) for _, v in ranked]
        )
        score = float(diam[0] ** d * count / k)
        if score < best_score:
            best_score, best_mask = score, members[0]
    return MeasureBounds(
        n=n,
        a_n=best_score,
        b_n=math.nan,
        delta=math.nan,
        d=d,
        tau=float(tau),
        exact=False,
        argmin_bitmask=int(best_mask),
        enclosure_width=2.0 * eps,
        sample_depth=depth,
        locally_optimal=False,
    )


def compute_b_n(n: int, a_n: float, delta: float, tau: float) -> float:
    if not 0.0 < delta < 1.0:
        raise ValidationError(f"delta={delta!r} must lie in (0, 1)")
    d = hausdorff_dimension(tau)
    exponent = 2.0 * SQRT2 * d * tau**n / (delta * (1.0 - tau) * (SQRT2 + 3.0 * tau))
    return a_n * math.exp(-exponent)


def delta_hat(tau: float) -> float:
    """Control estimate of delta, from the crossover exponent 3.70431."""
    if not 0.5 - 1e-15 <= tau <= solve_tau_star() + 1e-15:
        raise ValidationError(f"delta_hat needs tau in [1/2, tau*], got {tau!r}")
    return 2.0 * SQRT2 * tau**CROSSOVER_EXPONENT / (SQRT2 + 3.0 * tau)


def crossover_exponent(delta: float, tau: float) -> float:
    """Forward map of :func:`delta_hat`: ``log(delta (sqrt2 + 3 tau) / 2 sqrt2) / log tau``."""
    return math.log(delta * (SQRT2 + 3.0 * tau) / (2.0 * SQRT2)) / math.log(tau)


def case_constants(tau: float, N: int, delta: float, m: int) -> tuple[float, float, float]:
    """Exponent prefactors of the case analysis: ``(xi_1^(N), xi_2^(delta), xi^(m))``."""
    if N < 1 or m < 0:
        raise ValidationError("need N >= 1 and m >= 0")
    if not 0.0 < delta < 1.0:
        raise ValidationError(f"delta={delta!r} must lie in (0, 1)")
    xi1 = 2.0 ** (1 - N) * (1.0 + SQRT2 * tau) / (1.0 - tau)
    xi2 = 2.0 * SQRT2 / (delta * (1.0 - tau) * (SQRT2 + 3.0 * tau))
    xim = 1.0 / ((1.0 - tau) * tau**m)
    return xi1, xi2, xim


def first_increment_score(tau: float) -> float:
    """Diameter of the first pre-fractal increment raised to the power d.

    This is the quantity behind the published ``a_1`` values; it is *not* the
    attractor diameter (see the README).
    """
    return increment_diameter(1, tau) ** hausdorff_dimension(tau)


def default_sample_depth(tau: float, n_max: int, target_width: float = 2.5e-4) -> int:
    """Smallest total depth with enclosure width below ``target_width``.

    Never below ``n_max + 14`` and never above the memory guard.
    """
    depth = n_max + 14
    while depth < MAX_SAMPLE_DEPTH and 4.0 * enclosure_radius(tau, depth) >= target_width:
        depth += 1
    return depth


def sandwich_report(
    n_max: int,
    tau: float,
    delta: float | None = None,
    *,
    heuristic: bool = False,
    beam: int = 64,
    sample_depth: int | None = None,
) -> list[MeasureBounds]:
    """Rows ``n = 1..n_max`` of the Hausdorff sandwich at a common sample depth.

    A common depth makes the sample sets identical across ``n``; since a
    collection of n-cells is also a collection of its (n+1)-children with the
    same union and score, the computed ``a_n`` are then non-increasing exactly.
    """
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    if n_max > EXACT_MAX_N and not heuristic:
        raise ExactSearchLimit(
            f"n={n_max} exceeds exact limit {EXACT_MAX_N}; pass heuristic=True"
        )
    if delta is None:
        delta = delta_hat(tau)
    if sample_depth is None:
        sample_depth = default_sample_depth(tau, n_max)
    rows = []
    for n in range(1, n_max + 1):
        extra = sample_depth - n
        if n <= EXACT_MAX_N:
            row = compute_a_n(n, tau, extra)
        else:
            row = compute_a_n_heuristic(n, tau, beam=beam, extra_depth=extra)
        b = compute_b_n(n, row.a_n, delta, tau)
        rows.append(dataclasses.replace(row, b_n=b, delta=float(delta)))
    check_sandwich(rows)
    return rows


def check_sandwich(rows: Sequence[MeasureBounds]) -> None:
    exact = [r for r in rows if r.exact]
    for prev, cur in zip(exact, exact[1:]):
        if cur.a_n > prev.a_n:
            raise InvariantViolation(f"a_{cur.n} = {cur.a_n} > a_{prev.n} = {prev.a_n}")
        if cur.b_n < prev.b_n:
            raise InvariantViolation(f"b_{cur.n} = {cur.b_n} < b_{prev.n} = {prev.b_n}")
    for r in rows:
        if not 0.0 < r.b_n <= r.a_n:
            raise InvariantViolation(f"row n={r.n}: need 0 < b_n <= a_n")


def sandwich_json(rows: Sequence[MeasureBounds]) -> dict:
    tau = rows[0].tau
    key = "0.5" if abs(tau - 0.5) < 1e-12 else (
        "critical" if abs(tau - solve_tau_star()) < 1e-12 else None
    )
    report = {
        "tau": tau,
        "d": rows[0].d,
        "delta": rows[0].delta,
        "rows": [
            {
                "n": r.n,
                "a_n": r.a_n,
                "b_n": r.b_n,
                "exact": r.exact,
                "argmin_bitmask": r.argmin_bitmask,
                "enclosure_width": r.enclosure_width,
                "sample_depth": r.sample_depth,
            }
            for r in rows
        ],
        "first_increment_score": first_increment_score(tau),
    }
    if key is not None:
        report["published"] = {"a_1": PUBLISHED_A1[key], "b_1": PUBLISHED_B1[key]}
    return report
