import itertools
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from exchwalk.lattice import (
    ball_offsets,
    box_coords,
    crown_index,
    crown_indices_of,
    crown_members,
    direction_indices,
    direction_matrix,
    direction_slot,
    slot_direction,
    unit_vector,
)


def test_direction_order_and_slots():
    assert direction_indices(2) == (-2, -1, 1, 2)
    for d in (1, 2, 3):
        for slot, j in enumerate(direction_indices(d)):
            assert direction_slot(j, d) == slot
            assert slot_direction(slot, d) == j
            assert np.array_equal(unit_vector(-j, d), -unit_vector(j, d))


def test_ball_offsets_match_bruteforce():
    for d, radius in [(1, 0), (1, 5), (2, 3), (3, 2)]:
        offs = {tuple(z) for z in ball_offsets(d, radius)}
        brute = {
            z
            for z in itertools.product(range(-radius, radius + 1), repeat=d)
            if sum(c * c for c in z) <= radius * radius
        }
        assert offs == brute


def test_ball_sizes_d1():
    # radius L in d=1 always holds 2L+1 integers
    for L in range(6):
        assert len(ball_offsets(1, L)) == 2 * L + 1


def test_crown_partition():
    for d in (1, 2):
        n_max = 6
        union = [tuple(z) for n in range(n_max + 1) for z in crown_members(d, n)]
        assert len(union) == len(set(union))
        assert set(union) == {tuple(z) for z in ball_offsets(d, n_max)}


@given(st.lists(st.integers(min_value=-50, max_value=50), min_size=1, max_size=3))
def test_crown_index_exact(z):
    n = crown_index(z)
    norm = math.sqrt(sum(c * c for c in z))
    assert n - 1 < norm <= n or (n == 0 and norm == 0.0)


def test_crown_indices_vectorised_agrees():
    pts = box_coords(2, 12)
    vec = crown_indices_of(pts)
    for p, n in zip(pts, vec):
        assert crown_index(p) == n


def test_direction_matrix_rows():
    m = direction_matrix(2)
    assert np.array_equal(m, np.array([[0, -1], [-1, 0], [1, 0], [0, 1]]))
