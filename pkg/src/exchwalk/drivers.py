"""Jitted event loops shared by the simulators.

The lazy cores run on a flat dense occupancy array with a one-cell guard
ring: cell value -1 means free, -2 means guard, >= 0 is a particle index.
Stepping by a signed per-direction stride from any interior cell lands on a
valid cell or on a guard cell, never wraps, so a bounds check is one load.

Swap candidates are drawn per (particle, direction) at rate gamma; a
candidate whose target holds another tracked particle fires with
probability 1/2, thinning the doubled per-edge proposal rate back to rate
gamma per undirected edge.  Candidate counts over an interval of length h
are Poisson(2 d gamma m h) and their order is the jump chain, so event
times never need to be materialised.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_WALKER_BREACH = 1
STATUS_PARTICLE_BREACH = 2


@njit(cache=True)
def apply_swaps(perm, a_idx, b_idx, start, stop):
    """Apply swap events [start, stop) to the site permutation in order."""
    for i in range(start, stop):
        a = a_idx[i]
        b = b_idx[i]
        tmp = perm[a]
        perm[a] = perm[b]
        perm[b] = tmp


@njit(cache=True)
def _stir_candidates(occ, pos, strides, n_events):
    m = pos.shape[0]
    twod = strides.shape[0]
    for _ in range(n_events):
        r = np.random.randint(0, m * twod)
        p = r // twod
        s = r - p * twod
        old = pos[p]
        tgt = old + strides[s]
        to = occ[tgt]
        if to == -1:
            occ[old] = -1
            occ[tgt] = p
            pos[p] = tgt
        elif to == -2:
            return STATUS_PARTICLE_BREACH
        else:
            if np.random.random() < 0.5:
                occ[old] = to
                occ[tgt] = p
                pos[p] = tgt
                pos[to] = old
    return STATUS_OK


@njit(cache=True)
def stir_dense(occ, pos, strides, gamma, t, seed):
    """Stir m tracked contents for time t; pos is updated in place."""
    np.random.seed(seed)
    m = pos.shape[0]
    for i in range(m):
        occ[pos[i]] = i
    twod = strides.shape[0]
    n_events = np.random.poisson(twod * gamma * t * m)
    return _stir_candidates(occ, pos, strides, n_events)


@njit(cache=True)
def lazy_annealed_walk(occ, T, gamma, atom_cdf, dir_cdf, strides, start, seed):
    """Walk T steps on a fresh product-law environment, revealing marks lazily.

    Unrevealed sites are exchangeable fresh draws, so only particles the
    walker has read are tracked; they stir among themselves at the full
    edge rate.  Returns (flat path, tracked count, status).
    """
    np.random.seed(seed)
    twod = strides.shape[0]
    n_atoms = atom_cdf.shape[0]
    pos = np.empty(T + 1, np.int64)
    mark = np.empty(T + 1, np.int32)
    m = 0
    x = start
    path = np.empty(T + 1, np.int64)
    path[0] = x
    for k in range(T):
        j = occ[x]
        if j >= 0:
            a = mark[j]
        else:
            u = np.random.random()
            a = np.searchsorted(atom_cdf, u)
            if a >= n_atoms:
                a = n_atoms - 1
            pos[m] = x
            mark[m] = a
            occ[x] = m
            m += 1
        u = np.random.random()
        s = np.searchsorted(dir_cdf[a], u)
        if s >= twod:
            s = twod - 1
        x = x + strides[s]
        path[k + 1] = x
        if occ[x] == -2:
            return path[: k + 2], m, STATUS_WALKER_BREACH
        n_events = np.random.poisson(twod * gamma * m)
        st = _stir_candidates(occ, pos[:m], strides, n_events)
        if st != STATUS_OK:
            return path[: k + 2], m, st
    return path, m, STATUS_OK


@njit(cache=True)
def quenched_window_walk(
    marks_cdf, perm, ev_a, ev_b, ev_upto, T, half, axis_of, sign_of, seed
):
    """Walk T steps on an explicit window, replaying schedule events in between.

    marks_cdf holds per-site direction CDF rows of the initial marks; perm
    maps site -> original site whose mark currently sits there.  ev_upto[k]
    counts schedule events with time <= k, so slice [ev_upto[k-1], ev_upto[k])
    is what happens strictly between consecutive reads.  Returns the
    coordinate path, the max L-inf excursion, and a breach status.
    """
    np.random.seed(seed)
    twod = marks_cdf.shape[1]
    d = twod // 2
    side = 2 * half + 1
    coords = np.zeros(d, np.int64)
    path = np.zeros((T + 1, d), np.int64)
    applied = 0
    max_exc = 0
    for k in range(T):
        apply_swaps(perm, ev_a, ev_b, applied, ev_upto[k])
        applied = ev_upto[k]
        x = 0
        for a in range(d):
            c = coords[a]
            if c < -half or c > half:
                return path[: k + 1], max_exc, STATUS_WALKER_BREACH
            x = x * side + (c + half)
        row = marks_cdf[perm[x]]
        u = np.random.random()
        s = np.searchsorted(row, u)
        if s >= twod:
            s = twod - 1
        coords[axis_of[s]] += sign_of[s]
        for a in range(d):
            e = -coords[a] if coords[a] < 0 else coords[a]
            if e > max_exc:
                max_exc = e
            path[k + 1, a] = coords[a]
    return path, max_exc, STATUS_OK
