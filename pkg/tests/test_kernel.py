import math

import numpy as np
import pytest

from exchwalk.env import TransitionVector, TypeIndex, WindowTruncationError, two_atom_mu, type_of, window_from_iid, window_from_vectors
from exchwalk.kernel import (
    axis_kernel,
    axis_tail_bound,
    ball_average_table,
    ball_kernel,
    build_table,
    check_crown_ordering,
    check_monotonicity,
    crown_error_sums,
    crown_extremes,
    exact_mean,
    gaussian_ball_average,
    gaussian_kernel,
    kernel,
    kernel_1d,
    lclt_error,
    neighbor_difference_decay,
    truncation_radius,
)
from exchwalk.lattice import ball_offsets, crown_members
from exchwalk.oracles import (
    gaussian_riemann_mass,
    kernel_1d_uniformization,
    kernel_box_generator_expm,
)

# --- one-dimensional kernel ---------------------------------------------------


def test_kernel_1d_time_zero():
    assert kernel_1d(1.0, 0.0, 0) == 1.0
    assert kernel_1d(1.0, 0.0, 3) == 0.0


def test_kernel_1d_normalization():
    r = truncation_radius(1.0, 1.0)
    assert float(np.sum(axis_kernel(1.0, 1.0, r))) >= 1.0 - 1e-10


@pytest.mark.parametrize("gamma,t", [(1.0, 1.0), (0.5, 2.0), (4.0, 1.0), (1.0, 10.0)])
def test_kernel_1d_vs_uniformization(gamma, t):
    for k in (0, 1, 2, 5, 11):
        mine = kernel_1d(gamma, t, k)
        oracle = kernel_1d_uniformization(gamma, t, k)
        assert mine == pytest.approx(oracle, rel=1e-12)


def test_axis_tail_bound_is_a_bound():
    for gamma, t in [(1.0, 1.0), (2.0, 3.0)]:
        big = truncation_radius(gamma, t, 1e-20)
        ax = axis_kernel(gamma, t, big)
        for r in (1, 3, 8, 15):
            mass_beyond = 1.0 - float(ax[big - r : big + r + 1].sum())
            assert mass_beyond <= axis_tail_bound(gamma, t, r) + 1e-15


# --- product kernel -----------------------------------------------------------


def test_kernel_max_at_origin_and_symmetry():
    tab = build_table(2, 1.0, 0.7)
    assert tab.values.max() == tab.value_at((0, 0))
    assert np.array_equal(tab.values, tab.values[::-1, ::-1])
    assert np.array_equal(tab.values, tab.values.T)  # coordinate permutation


def test_table_invariants():
    tab = build_table(2, 1.0, 2.0)
    assert np.all(tab.values >= 0)
    assert 0.0 <= tab.mass_deficit <= tab.certified_deficit


def test_kernel_vs_generator_expm_small():
    tab = build_table(2, 1.0, 0.5, r_trunc=10)
    oracle = kernel_box_generator_expm(2, 1.0, 0.5, 10)
    assert float(np.abs(tab.values - oracle).max()) <= 1e-9


def test_chapman_kolmogorov():
    gamma, s, t = 1.0, 0.6, 1.1
    r = truncation_radius(gamma, s + t)
    a = axis_kernel(gamma, s, r)
    b = axis_kernel(gamma, t, r)
    conv = np.convolve(a, b)
    c = axis_kernel(gamma, s + t, 2 * r)
    assert float(np.abs(conv - c).max()) <= 1e-9


# --- ball averages --------------------------------------------------------------


def test_ball_kernel_m0_is_kernel():
    assert ball_kernel(1.0, 0.8, (2, 1), 0) == pytest.approx(kernel(1.0, 0.8, (2, 1)))


def test_ball_kernel_time_zero_indicator():
    M = 3
    size = len(ball_offsets(2, M))
    assert ball_kernel(1.0, 0.0, (1, 1), M) == pytest.approx(1.0 / size)
    assert ball_kernel(1.0, 0.0, (M + 1, 0), M) == 0.0


def test_ball_average_total_mass():
    gamma, t, M = 1.0, 1.5, 2
    r = truncation_radius(gamma, t) + M + 2
    table = ball_average_table(1, gamma, t, M, r)
    assert float(table.sum()) == pytest.approx(1.0, abs=1e-10)


# --- crowns ----------------------------------------------------------------------


def test_crown_extremes_origin():
    _, hi, _, lo, spread = crown_extremes(2, 1.0, 1.0, 2, 0)
    assert spread == 0.0 and hi == lo


def test_crown_extremes_d1_symmetric():
    for n in (1, 3, 6):
        _, hi, _, lo, spread = crown_extremes(1, 1.0, 2.0, 3, n)
        assert spread == 0.0


def test_crown_extremes_d2_vs_direct_enumeration():
    # independent re-evaluation from raw scaled-Bessel values
    from scipy.special import ive

    gamma, t, M, n = 1.0, 1.0, 2, 2
    offs = ball_offsets(2, M)
    vals = []
    for z in crown_members(2, n):
        acc = []
        for y in offs:
            p = z + y
            acc.append(float(ive(abs(p[0]), 2 * gamma * t) * ive(abs(p[1]), 2 * gamma * t)))
        vals.append(math.fsum(acc) / len(offs))
    _, hi, _, lo, spread = crown_extremes(2, gamma, t, M, n)
    assert hi == pytest.approx(max(vals), rel=1e-12)
    assert lo == pytest.approx(min(vals), rel=1e-12)
    assert spread == pytest.approx(max(vals) - min(vals), rel=1e-9)


def test_monotonicity_d1():
    assert check_monotonicity(1, 1.0, 1.0, 2, 20) <= 1e-12


def test_monotonicity_point_mass():
    assert check_monotonicity(1, 1.0, 0.0, 0, 5) <= 1e-12


def test_monotonicity_d2_grid():
    for t in (0.5, 2.0):
        for M in (0, 2):
            assert check_monotonicity(2, 1.0, t, M, 12) <= 1e-12


def test_crown_ordering_first_step():
    table_free = crown_extremes(2, 1.0, 1.0, 2, 0)[1]
    next_hi = crown_extremes(2, 1.0, 1.0, 2, 1)[1]
    assert table_free >= next_hi


def test_crown_ordering_grids():
    assert check_crown_ordering(1, 1.0, 2.0, 3, 25) <= 1e-12
    for t in (0.5, 2.0):
        for M in (0, 2):
            assert check_crown_ordering(2, 1.0, t, M, 12) <= 1e-12


# --- Gaussian comparison -----------------------------------------------------------


def test_gaussian_at_origin():
    for d, gamma, t in [(1, 1.0, 2.0), (2, 0.5, 3.0)]:
        z = np.zeros(d)
        assert gaussian_kernel(gamma, t, z) == pytest.approx(
            (2 * math.pi * gamma * t) ** (-d / 2)
        )


def test_gaussian_symmetry():
    z = np.array([1.3, -0.4])
    assert gaussian_kernel(1.0, 2.0, z) == gaussian_kernel(1.0, 2.0, -z)


def test_gaussian_mass_riemann():
    assert gaussian_riemann_mass(1, 1.0, 2.0, 25.0, 0.05) == pytest.approx(1.0, abs=1e-6)
    assert gaussian_riemann_mass(2, 1.0, 1.0, 10.0, 0.1) == pytest.approx(1.0, abs=1e-6)


def test_gaussian_ball_average_matches_pointwise():
    val = gaussian_ball_average(1.0, 2.0, np.array([1.0]), 0)
    assert val == pytest.approx(gaussian_kernel(1.0, 2.0, [1.0]))


def test_gaussian_rejects_time_zero():
    with pytest.raises(ValueError):
        gaussian_kernel(1.0, 0.0, [0.0])


# --- local CLT and neighbour decay ---------------------------------------------------


def test_lclt_scaled_ratio_bounded_d1():
    reps = [lclt_error(1, 1.0, gt, truncation_radius(1.0, gt)) for gt in (4.0, 16.0, 64.0)]
    scaled = [r.scaled for r in reps]
    med = sorted(scaled)[1]
    assert max(scaled) <= 2 * med and min(scaled) >= med / 2
    sups = [r.sup_error for r in reps]
    assert sups[0] > sups[1] > sups[2]


def test_lclt_peak_ratio_large_time():
    gt = 64.0
    ratio = kernel_1d(1.0, gt, 0) * math.sqrt(4 * math.pi * gt)
    assert abs(ratio - 1.0) <= 0.05


def test_neighbor_decay_bounded_and_monotone():
    reps = [neighbor_difference_decay(1, 1.0, gt) for gt in (4.0, 16.0, 64.0)]
    scaled = [r.scaled for r in reps]
    med = sorted(scaled)[1]
    assert max(scaled) <= 2 * med and min(scaled) >= med / 2
    sups = [r.sup_diff for r in reps]
    assert sups[0] > sups[1] > sups[2]
    # sup attained near the diffusive core
    for gt, r in zip((4.0, 16.0, 64.0), reps):
        assert abs(r.argmax[0]) <= 3 * math.sqrt(2 * gt) + 2


# --- crown error sums ------------------------------------------------------------------


def test_crown_sums_d1_exactly_zero():
    cs = crown_error_sums(1, 1.0, 4.0, 6, 3, 0.05)
    assert cs.total == 0.0 and cs.boundary == 0.0


def test_crown_sums_h1_empty_when_clipped():
    cs = crown_error_sums(2, 1.0, 16.0, 3, 3, 0.05)
    assert cs.m_minus == 3 and cs.h1 == 0.0


def test_crown_sums_partition():
    cs = crown_error_sums(2, 1.0, 4.0, 6, 3, 0.05)
    assert cs.h1 + cs.h2 + cs.h3 == pytest.approx(cs.total, rel=1e-12)
    assert cs.tail_bound < 1e-9


def test_crown_sums_scaled_ratios_d2():
    ratios = [crown_error_sums(2, 1.0, gt, 6, 3, 0.05).scaled_total for gt in (4.0, 16.0)]
    assert max(ratios) <= 4 * min(ratios)


# --- exact mean ------------------------------------------------------------------------


def _env_d1(marks, radius):
    return window_from_vectors(1, radius, 0, marks)


def test_exact_mean_all_of_type():
    v = TransitionVector(np.array([0.1, 0.9]))
    k = type_of(v, 3)
    env = _env_d1([v] * 101, 50)
    res = exact_mean(env, 1.0, 1.0, 5, k)
    assert res.value == pytest.approx(1.0, abs=1e-9)
    assert res.outside_mass <= 1e-9


def test_exact_mean_none_of_type():
    v = TransitionVector(np.array([0.1, 0.9]))
    other = TransitionVector(np.array([0.9, 0.1]))
    env = _env_d1([v] * 101, 50)
    res = exact_mean(env, 1.0, 1.0, 5, type_of(other, 3))
    assert res.value == 0.0


def test_exact_mean_budget_enforced():
    v = TransitionVector(np.array([0.1, 0.9]))
    env = _env_d1([v] * 11, 5)
    with pytest.raises(WindowTruncationError):
        exact_mean(env, 4.0, 4.0, 2, type_of(v, 3))


def test_exact_mean_complement():
    mu = two_atom_mu(0.9, 0.1, 0.5)
    env = window_from_iid(mu, 1, 60, 0, 9)
    ka = type_of(mu.atoms[0], 2)
    kb = type_of(mu.atoms[1], 2)
    ra = exact_mean(env, 1.0, 1.0, 5, ka)
    rb = exact_mean(env, 1.0, 1.0, 5, kb)
    assert ra.value + rb.value == pytest.approx(1.0 - ra.outside_mass, abs=1e-9)


def test_exact_mean_vs_monte_carlo():
    # stirring Monte Carlo against the kernel formula (smaller than the
    # acceptance instance, same construction)
    from exchwalk.interchange import sample_schedule_pooled, evolve_perm, window_geometry

    mu = two_atom_mu(0.9, 0.1, 0.5)
    gamma, t, L = 4.0, 1.0, 5
    env = window_from_iid(mu, 1, L, 55, 17)
    k = type_of(mu.atoms[0], 2)
    exact = exact_mean(env, gamma, t, L, k, mass_budget=1e-8)
    geom = window_geometry(env)
    atom_types = [type_of(a, 2).coords for a in mu.atoms]
    indicator = np.array([1.0 if atom_types[i] == k.coords else 0.0 for i in env.atom_ids])
    sites = env.site_indices(ball_offsets(1, L))
    n = 2000
    vals = np.empty(n)
    for s in range(n):
        sched = sample_schedule_pooled(geom, gamma, t, 900 + s)
        perm = np.arange(env.n_sites, dtype=np.int64)
        evolve_perm(sched, perm, 0, t)
        vals[s] = indicator[perm[sites]].mean()
    se = vals.std(ddof=1) / math.sqrt(n)
    assert abs(vals.mean() - exact.value) <= 4 * se
