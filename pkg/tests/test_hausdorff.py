import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ramified import geometry as G
from ramified import hausdorff as H
from ramified.errors import DepthError, ExactSearchLimit, ValidationError

SQ2 = math.sqrt(2.0)


def attractor_diameter_oracle(tau, level=18):
    """Diameter of the images of the base endpoints (a different seed set), with error bound."""
    base = G.base_hexagon(tau).vertices[:2]
    g1, g2 = G.similitude(1, tau), G.similitude(2, tau)
    pts = base.copy()
    for _ in range(level):
        pts = np.concatenate([g1(pts), g2(pts)])
    a = np.array(H.anchor_point(tau))
    err = 2 * tau**level * (np.linalg.norm(base - a, axis=1).max() + H.certified_radius(tau))
    return G.point_set_diameter(pts), err


def test_dimension_values(tau_star):
    assert H.hausdorff_dimension(0.5) == 1.0
    assert H.hausdorff_dimension(tau_star) == pytest.approx(1.3285, abs=1e-3)


@given(st.floats(0.05, 0.95))
def test_dimension_identity(tau):
    assert tau ** H.hausdorff_dimension(tau) == pytest.approx(0.5, abs=1e-14)


def test_cell_mass_and_index():
    for w in G.words(3):
        c = H.Cell(w)
        assert c.mass == 2.0**-3
        assert H.Cell.from_index(c.index, 3) == c
    assert [H.Cell(w).index for w in G.words(2)] == [0, 1, 2, 3]


def test_sample_depth_one_is_mirror_pair():
    pts = H.sample_attractor(1, 0.5)
    assert pts.shape == (2, 2)
    assert np.allclose(pts[0] * [-1, 1], pts[1], atol=1e-15)


def test_samples_below_height():
    pts = H.sample_attractor(10, 0.5)
    assert pts[:, 1].max() <= G.height(0.5)


def test_height_is_attained_in_the_limit(tau_star):
    for tau in (0.5, tau_star):
        top = H.sample_attractor(18, tau)[:, 1].max()
        assert G.height(tau) - top < 10 * H.enclosure_radius(tau, 18)


def test_sample_guard():
    with pytest.raises(DepthError):
        H.sample_attractor(23, 0.5)


def test_samples_within_certified_radius(tau_star):
    for tau in (0.5, tau_star):
        a = np.array(H.anchor_point(tau))
        pts = H.sample_attractor(16, tau)
        assert np.linalg.norm(pts - a, axis=1).max() <= H.certified_radius(tau)


def test_nested_hulls():
    tau = 0.55
    coarse, fine = H.sample_attractor(8, tau), H.sample_attractor(9, tau)
    r = tau**8 * 2 * H.certified_radius(tau)
    dist = np.min(np.linalg.norm(fine[:, None] - coarse[None], axis=2), axis=1)
    assert dist.max() <= r


def test_extra_depth_must_be_positive():
    with pytest.raises(DepthError):
        H.cell_union_diameter([H.Cell((1,))], 0.5, 0)
    with pytest.raises(DepthError):
        H.compute_a_n(1, 0.5, 0)


@pytest.mark.parametrize("tau", [0.5, 0.5934653559719874])
def test_cell_union_examples(tau):
    diam, err = attractor_diameter_oracle(tau)
    single = H.cell_union_diameter([H.Cell((1,))], tau, 14)
    assert single.lower - err * tau <= tau * diam <= single.upper + err * tau
    both = H.cell_union_diameter([H.Cell((1,)), H.Cell((2,))], tau, 14)
    assert both.lower - err <= diam <= both.upper + err
    assert both.width <= 4 * tau**15 * H.certified_radius(tau) + 1e-15


@pytest.mark.parametrize("cells", [[(1, 2)], [(1, 1), (2, 2)], [(1, 2), (2, 1)]])
def test_enclosure_contains_deeper_sampling(cells):
    tau = 0.55
    bound = H.cell_union_diameter([H.Cell(c) for c in cells], tau, 8)
    # independent oracle: direct deeper sampling of the same cells
    deep = H.sample_attractor(14, tau)
    block = 2 ** 12
    pts = np.concatenate([deep[H.Cell(c).index * block:(H.Cell(c).index + 1) * block] for c in cells])
    assert G.point_set_diameter(pts) in bound


@pytest.mark.parametrize("tau", [0.5, 0.5934653559719874])
def test_a1_is_attractor_diameter_power(tau):
    row = H.compute_a_n(1, tau, 18)
    diam, err = attractor_diameter_oracle(tau)
    assert abs(row.a_n ** (1 / row.d) - diam) <= row.enclosure_width + err


def test_a1_is_whole_attractor_at_half():
    # d = 1: the whole attractor is optimal and a_1 is its diameter
    row = H.compute_a_n(1, 0.5, 16)
    assert row.argmin_bitmask == 0b11
    assert row.a_n == pytest.approx(4.12441, abs=1e-4)


def test_published_a1_is_first_increment_power(tau_star):
    # the published first-level values equal (1/2 + tau/sqrt2)^d
    assert H.first_increment_score(0.5) == pytest.approx(H.PUBLISHED_A1["0.5"], abs=1e-10)
    assert H.first_increment_score(tau_star) == pytest.approx(H.PUBLISHED_A1["critical"], abs=2e-6)


def test_exact_limit():
    with pytest.raises(ExactSearchLimit):
        H.compute_a_n(5, 0.5)
    with pytest.raises(ExactSearchLimit):
        H.sandwich_report(5, 0.5)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("tau", [0.5, 0.5934653559719874])
def test_heuristic_agrees_with_exact(n, tau):
    exact = H.compute_a_n(n, tau, 12)
    beam = H.compute_a_n_heuristic(n, tau, beam=2**n, extra_depth=12)
    assert beam.a_n == pytest.approx(exact.a_n, abs=1e-9)
    assert not beam.exact and exact.exact


@pytest.mark.parametrize("n", [2, 3])
def test_greedy_never_beats_exact(n, tau_star):
    exact = H.compute_a_n(n, tau_star, 12)
    greedy = H.compute_a_n_heuristic(n, tau_star, beam=1, extra_depth=12)
    assert greedy.a_n >= exact.a_n - 1e-12


def test_heuristic_n5_below_exact_a4(tau_star):
    for tau in (0.5, tau_star):
        a4 = H.compute_a_n(4, tau, 14)
        a5 = H.compute_a_n_heuristic(5, tau, beam=64, extra_depth=13)
        assert a5.a_n <= a4.a_n + a4.enclosure_width


def test_locally_optimal_argmin(tau_star):
    for tau in (0.5, tau_star):
        for n in (1, 2, 3, 4):
            assert H.compute_a_n(n, tau, 12).locally_optimal


def test_scale_consistency(tau_star):
    # every subset diameter moves by at most the coarser enclosure width, so
    # each score (and hence the minimum) moves by at most 2^n d (D + w)^(d-1) w
    for tau in (0.5, tau_star):
        for n in (1, 2, 3):
            lo = H.compute_a_n(n, tau, 12)
            hi = H.compute_a_n(n, tau, 14)
            w, d = lo.enclosure_width, lo.d
            dmax = 2 * H.certified_radius(tau)
            assert abs(lo.a_n - hi.a_n) <= 2**n * d * (dmax + w) ** (d - 1) * w


@given(st.integers(1, 30), st.floats(0.01, 20), st.floats(0.01, 0.99), st.floats(0.3, 0.59))
def test_b_below_a(n, a, delta, tau):
    assert H.compute_b_n(n, a, delta, tau) <= a


def test_b_over_a_tends_to_one():
    ratios = [H.compute_b_n(n, 1.0, 0.1, 0.5) for n in (5, 20, 60)]
    assert ratios[0] < ratios[1] < ratios[2]
    assert ratios[2] == pytest.approx(1.0, abs=1e-12)


def test_b_formula_stored_exactly():
    tau, delta, n, a = 0.55, 0.2, 3, 2.0
    d = H.hausdorff_dimension(tau)
    expect = a * math.exp(-2 * SQ2 * d * tau**n / (delta * (1 - tau) * (SQ2 + 3 * tau)))
    assert H.compute_b_n(n, a, delta, tau) == expect


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.2, 1.5])
def test_b_rejects_delta(delta):
    with pytest.raises(ValidationError):
        H.compute_b_n(1, 1.0, delta, 0.5)


def test_delta_hat(tau_star):
    dh = H.delta_hat(tau_star)
    assert dh == pytest.approx(0.1282, abs=2e-3)
    assert H.crossover_exponent(dh, tau_star) == pytest.approx(3.70431, abs=1e-4)
    assert 0 < H.delta_hat(0.5) < 1
    grid = np.linspace(0.5, tau_star, 20)
    vals = [H.delta_hat(t) for t in grid]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_case_constants(tau_star):
    xi1, _, xi0 = H.case_constants(0.5, 1, 0.3, 0)
    assert xi1 == pytest.approx(2 + SQ2)
    assert xi0 == pytest.approx(1 / (1 - 0.5))
    dh = H.delta_hat(tau_star)
    _, xi2, xi3 = H.case_constants(tau_star, 1, dh, 3)
    _, _, xi4 = H.case_constants(tau_star, 1, dh, 4)
    assert xi3 < xi2 < xi4


@pytest.mark.parametrize("tau", [0.5, 0.5934653559719874])
def test_sandwich_monotone(tau):
    rows = H.sandwich_report(3, tau)
    a = [r.a_n for r in rows]
    b = [r.b_n for r in rows]
    assert all(y <= x for x, y in zip(a, a[1:]))
    assert all(y >= x for x, y in zip(b, b[1:]))
    assert all(0 < y <= x for x, y in zip(a, b))
    gaps = [x - y for x, y in zip(a, b)]
    assert all(g2 <= g1 for g1, g2 in zip(gaps, gaps[1:]))
    # every row is below the certified bound on the attractor diameter
    assert all(x <= (2 * H.certified_radius(tau)) ** rows[0].d for x in a)


def test_sandwich_deterministic():
    a = H.sandwich_json(H.sandwich_report(2, 0.55))
    b = H.sandwich_json(H.sandwich_report(2, 0.55))
    assert a == b


def test_report_carries_published_numbers():
    rep = H.sandwich_json(H.sandwich_report(1, 0.5))
    assert rep["published"] == {"a_1": 0.8535533906, "b_1": 0.7582916255}
    assert {"n", "a_n", "b_n", "exact", "argmin_bitmask", "enclosure_width"} <= set(rep["rows"][0])
