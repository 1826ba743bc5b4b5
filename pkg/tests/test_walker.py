import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exchwalk.env import (
    MuDistribution,
    TransitionVector,
    annealed_drift,
    two_atom_mu,
    window_from_iid,
    window_from_vectors,
)
from exchwalk.kernel import kernel_1d
from exchwalk.walker import (
    BufferBreachError,
    ProjectionFrame,
    WalkSeeds,
    annealed_window,
    project,
    projection_frame,
    run_annealed,
    run_infinite_gamma,
    run_quenched,
    step,
)


def vec(*probs):
    return TransitionVector(np.array(probs, dtype=float))


# --- single step ------------------------------------------------------------


def test_step_deterministic_vector():
    env = window_from_vectors(2, 1, 0, [TransitionVector.point_mass(1, 2)] * 9)
    for u in (0.0, 0.3, 0.99):
        assert step(env, (0, 0), u) == 1


def test_step_inverse_cdf_d1():
    # s_1 = 0.9, s_{-1} = 0.1; canonical order (-1, 1) gives CDF (0.1, 1.0)
    env = window_from_vectors(1, 1, 0, [vec(0.1, 0.9)] * 3)
    assert step(env, (0,), 0.05) == -1
    assert step(env, (0,), 0.5) == 1


def test_step_uniform_frequencies():
    d = 2
    env = window_from_vectors(d, 1, 0, [vec(0.25, 0.25, 0.25, 0.25)] * 9)
    rng = np.random.default_rng(0)
    n = 100_000
    us = rng.random(n)
    counts = {j: 0 for j in (-2, -1, 1, 2)}
    for u in us:
        counts[step(env, (0, 0), float(u))] += 1
    p = 1 / (2 * d)
    bound = 4 * math.sqrt(p * (1 - p) / n)
    for j, c in counts.items():
        assert abs(c / n - p) <= bound


def test_step_requires_unit_interval():
    env = window_from_vectors(1, 1, 0, [vec(0.5, 0.5)] * 3)
    with pytest.raises(ValueError):
        step(env, (0,), 1.0)


# --- quenched runs ------------------------------------------------------------


def test_quenched_single_atom_ballistic(mu_point_right):
    env = annealed_window(mu_point_right, 1, 6, 2.0, seed=1)
    sample = run_quenched(env, 2.0, 6, WalkSeeds(3, 4))
    assert np.array_equal(sample.positions[-1], [6])
    inc = sample.increments()
    assert np.all(np.abs(inc).sum(axis=1) == 1)


def test_quenched_first_step_law():
    # T=1: distribution of X_1 is the vector at the origin of the start state
    env = window_from_vectors(1, 1, 60, [vec(0.3, 0.7)] * 123)
    n = 20_000
    right = 0
    for s in range(n):
        smp = run_quenched(env, 1.0, 1, WalkSeeds(s, 10**6 + s))
        right += smp.positions[-1][0] == 1
    se = math.sqrt(0.7 * 0.3 / n)
    assert abs(right / n - 0.7) <= 4 * se


def test_quenched_toy_matches_generator_oracle():
    # One right-stepper mark at the origin in a sea of left-steppers: X_1 = 1
    # always, and X_2 = 2 exactly when the tagged mark sits at site 1 at time
    # 1.  The mark moves as a rate-gamma walk on the finite path, so its
    # marginal is the reflecting-path generator exponential.
    from scipy.linalg import expm

    gamma, half = 0.3, 4
    n_sites = 2 * half + 1
    gen = np.zeros((n_sites, n_sites))
    for i in range(n_sites - 1):
        gen[i, i + 1] = gen[i + 1, i] = gamma
    np.fill_diagonal(gen, -gen.sum(axis=1))
    q_move = float(expm(gen)[half, half + 1])  # origin -> site 1 at time 1

    marks = [vec(1.0, 0.0)] * n_sites
    marks[half] = vec(0.0, 1.0)
    env = window_from_vectors(1, half, 0, marks)
    n = 20_000
    hits = 0
    for s in range(n):
        smp = run_quenched(env, gamma, 2, WalkSeeds(s, 5 * 10**6 + s))
        assert smp.positions[1][0] == 1
        hits += smp.positions[2][0] == 2
    se = math.sqrt(q_move * (1 - q_move) / n)
    assert abs(hits / n - q_move) <= 4 * se


def test_quenched_buffer_breach_diagnostics(mu_point_right):
    env = window_from_iid(mu_point_right, 1, 2, 0, 1)
    with pytest.raises(BufferBreachError, match="buffer"):
        run_quenched(env, 1.0, 8, WalkSeeds(1, 2))


def test_quenched_reproducible(mu_drift048):
    env = annealed_window(mu_drift048, 1, 5, 1.0, seed=9)
    a = run_quenched(env, 1.0, 5, WalkSeeds(7, 8))
    b = run_quenched(env, 1.0, 5, WalkSeeds(7, 8))
    assert np.array_equal(a.positions, b.positions)


# --- annealed runs ---------------------------------------------------------------


def test_annealed_single_atom_reduces_to_ballistic(mu_point_right):
    for driver in ("window", "lazy"):
        smp = run_annealed(mu_point_right, 1, 1.0, 10, WalkSeeds(1, 2), driver=driver)
        assert np.array_equal(smp.positions[-1], [10])


def test_annealed_first_step_mean(mu_drift048):
    n = 4000
    total = 0
    for s in range(n):
        smp = run_annealed(mu_drift048, 1, 2.0, 1, WalkSeeds(2 * s, 2 * s + 1), driver="window")
        total += smp.positions[-1][0]
    sd = math.sqrt(1 - 0.48**2)
    assert abs(total / n - 0.48) <= 4 * sd / math.sqrt(n)


def _exact_two_step_law(mu, gamma):
    """Enumeration oracle for the annealed law of X_2 in d=1.

    The only coupling between steps is whether the revealed origin mark has
    moved exactly onto the walker's new site after one unit of stirring,
    which happens with probability p(1, 1) of the one-coordinate kernel.
    """
    p_same = float(kernel_1d(gamma, 1.0, 1))
    mbar = float(annealed_drift(mu)[0] + 1) / 2  # mean right probability
    law: dict[int, float] = {}
    for atom, w in zip(mu.atoms, mu.weights):
        p_right = atom.prob(1)
        for s1, p1 in ((1, p_right), (-1, 1 - p_right)):
            for same, p_c in ((True, p_same), (False, 1 - p_same)):
                right2 = p_right if same else mbar
                for s2, p2 in ((1, right2), (-1, 1 - right2)):
                    law[s1 + s2] = law.get(s1 + s2, 0.0) + w * p1 * p_c * p2
    return law


@pytest.mark.parametrize("driver", ["window", "lazy"])
def test_annealed_two_step_exact_law(driver, mu_drift048):
    gamma = 1.0
    law = _exact_two_step_law(mu_drift048, gamma)
    assert sum(law.values()) == pytest.approx(1.0)
    n = 12_000
    counts: dict[int, int] = {}
    for s in range(n):
        smp = run_annealed(mu_drift048, 1, gamma, 2, WalkSeeds(2 * s, 2 * s + 1), driver=driver)
        x2 = int(smp.positions[-1][0])
        counts[x2] = counts.get(x2, 0) + 1
    for x2, p in law.items():
        emp = counts.get(x2, 0) / n
        se = math.sqrt(p * (1 - p) / n)
        assert abs(emp - p) <= 4 * se, (driver, x2, emp, p)


def test_lazy_reproducible(mu_drift048):
    a = run_annealed(mu_drift048, 1, 3.0, 40, WalkSeeds(5, 6), driver="lazy")
    b = run_annealed(mu_drift048, 1, 3.0, 40, WalkSeeds(5, 6), driver="lazy")
    assert np.array_equal(a.positions, b.positions)
    assert a.tracked_marks == b.tracked_marks


@given(st.integers(0, 10_000), st.sampled_from([0.5, 2.0, 8.0]))
@settings(max_examples=15, deadline=None)
def test_lazy_unit_steps(seed, gamma):
    mu = two_atom_mu(0.9, 0.1, 0.8)
    smp = run_annealed(mu, 1, gamma, 30, WalkSeeds(seed, seed + 1), driver="lazy")
    inc = smp.increments()
    assert np.all(np.abs(inc).sum(axis=1) == 1)
    assert np.array_equal(smp.positions[0], [0])


# --- refresh-every-step baseline ---------------------------------------------------


def test_infinite_gamma_single_atom(mu_point_right):
    smp = run_infinite_gamma(mu_point_right, 1, 25, 3)
    assert np.array_equal(smp.positions[-1], [25])


def test_infinite_gamma_velocity(mu_drift048):
    T = 100_000
    smp = run_infinite_gamma(mu_drift048, 1, T, 11)
    sd = math.sqrt(1 - 0.48**2)
    assert abs(smp.positions[-1][0] / T - 0.48) <= 4 * sd / math.sqrt(T)


def test_infinite_gamma_increment_mixture(mu_drift048):
    # step-increment frequencies match the weight-mixed vector
    T = 100_000
    smp = run_infinite_gamma(mu_drift048, 1, T, 13)
    inc = smp.increments()[:, 0]
    p_right = 0.8 * 0.9 + 0.2 * 0.1
    emp = float(np.mean(inc == 1))
    assert abs(emp - p_right) <= 4 * math.sqrt(p_right * (1 - p_right) / T)


# --- projections ----------------------------------------------------------------


def test_projection_frame_components(mu_drift048):
    frame = projection_frame(mu_drift048, [1.0])
    assert frame.v == pytest.approx(0.48)
    assert np.allclose(frame.components, [-1.0, 1.0])


def test_projection_frame_antisymmetric_components():
    mu2 = MuDistribution(
        atoms=(TransitionVector(np.array([0.1, 0.2, 0.3, 0.4])),), weights=(1.0,)
    )
    v = np.array([3.0, 4.0]) / 5.0
    frame = projection_frame(mu2, v)
    comps = frame.components
    assert comps[0] == -comps[3] and comps[1] == -comps[2]


def test_projection_frame_rejects_non_unit():
    with pytest.raises(ValueError):
        ProjectionFrame(np.array([1.0, 1.0]), 0.0, np.zeros(4))


def test_project_first_coordinate(mu_drift048):
    smp = run_infinite_gamma(mu_drift048, 1, 10, 1)
    frame = projection_frame(mu_drift048, [1.0])
    assert np.allclose(project(smp, frame), smp.positions[:, 0])


def test_project_diagonal_example():
    mu2 = MuDistribution(
        atoms=(TransitionVector(np.array([0.25, 0.25, 0.25, 0.25])),), weights=(1.0,)
    )
    frame = projection_frame(mu2, np.array([1.0, 1.0]) / math.sqrt(2))
    smp = run_infinite_gamma(mu2, 2, 4, 7)
    proj = project(smp, frame)
    x = smp.positions
    assert proj[-1] == pytest.approx((x[-1, 0] + x[-1, 1]) / math.sqrt(2))
    # with unit steps the projection of X_k is at most k for unit directions
    assert np.all(np.abs(proj) <= np.arange(len(proj)) + 1e-12)


def test_project_arithmetic_instance():
    # X = (3, 1) against the diagonal direction
    frame = ProjectionFrame(
        np.array([1.0, 1.0]) / math.sqrt(2), 0.1, np.array([-0.70710678118654746, -0.70710678118654746, 0.70710678118654746, 0.70710678118654746]),
    )
    from exchwalk.walker import WalkSample

    pos = np.array([[0, 0], [1, 0], [2, 0], [3, 0], [3, 1]], dtype=np.int64)
    smp = WalkSample(pos, 0, 0, 1.0, 4)
    assert project(smp, frame)[-1] == pytest.approx(4 / math.sqrt(2))
