"""Compiled hot loops: xoshiro256** RNG, sweep kernels, pattern extraction.

Everything here operates on flat uint8 minus-mask arrays (1 = minus spin)
and a uint64[4] RNG state that is advanced in place, so trajectories are
bit-for-bit reproducible from (master_seed, stream_id). All kernels release
the GIL; each trajectory owns its spins and state arrays.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64

# triplet scramble targets by local parity, bit k = site (r-1+k); 0b000 is frozen
TRIPLET_EVEN = np.array([3, 5, 6], dtype=np.uint8)
TRIPLET_ODD = np.array([1, 2, 4, 7], dtype=np.uint8)

# plaquette scramble targets, bit order (LL, LR, UL, UR); 0b0000/0b1111 frozen
PLAQ_EVEN = np.array([3, 5, 6, 9, 10, 12], dtype=np.uint8)
PLAQ_ODD = np.array([1, 2, 4, 7, 8, 11, 13, 14], dtype=np.uint8)

# Moore offsets (dx, dy), E first then counterclockwise; must match lattice.MOORE_OFFSETS
MOORE_DX = np.array([1, 1, 0, -1, -1, -1, 0, 1], dtype=np.int64)
MOORE_DY = np.array([0, 1, 1, 1, 0, -1, -1, -1], dtype=np.int64)


# ---------------------------------------------------------------------------
# RNG primitives (xoshiro256**)
# ---------------------------------------------------------------------------


@njit(inline="always", cache=True)
def _rotl(x, k):
    return (x << k) | (x >> (uint64(64) - k))


@njit(inline="always", cache=True)
def next_u64(s):
    result = _rotl(s[1] * uint64(5), uint64(7)) * uint64(9)
    t = s[1] << uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], uint64(45))
    return result


@njit(inline="always", cache=True)
def next_unit(s):
    """Uniform double in [0, 1) from the top 53 bits."""
    return (next_u64(s) >> uint64(11)) * (1.0 / 9007199254740992.0)


@njit(inline="always", cache=True)
def next_below(s, n):
    """Uniform integer in [0, n). Bias is O(n / 2^53), negligible here."""
    k = int(next_unit(s) * n)
    if k >= n:
        k = n - 1
    return k


# ---------------------------------------------------------------------------
# 1d kernels
# ---------------------------------------------------------------------------


@njit(inline="always", cache=True)
def _apply_absorbing_1d(spins, L, r):
    # flip sites r-1, r when X_r = -1: errors hop left, adjacent pairs annihilate
    if spins[r] == 1:
        rl = r - 1 if r > 0 else L - 1
        spins[r] = 0
        spins[rl] ^= 1


@njit(inline="always", cache=True)
def _apply_triplet_1d(spins, L, r, state):
    rl = r - 1 if r > 0 else L - 1
    rr = r + 1 if r < L - 1 else 0
    pat = spins[rl] | (spins[r] << 1) | (spins[rr] << 2)
    if pat == 0:
        return
    par = (pat ^ (pat >> 1) ^ (pat >> 2)) & 1
    if par == 0:
        new = TRIPLET_EVEN[next_below(state, 3)]
    else:
        new = TRIPLET_ODD[next_below(state, 4)]
    spins[rl] = new & 1
    spins[r] = (new >> 1) & 1
    spins[rr] = (new >> 2) & 1


@njit(nogil=True, cache=True)
def step_1d(spins, r, use_swssb, state):
    """One elementary update at site r with the chosen sub-rule."""
    L = spins.shape[0]
    if use_swssb:
        _apply_triplet_1d(spins, L, r, state)
    else:
        _apply_absorbing_1d(spins, L, r)


@njit(nogil=True, cache=True)
def sweep_1d(spins, alpha, n_sweeps, state):
    """n_sweeps sweeps of L elementary updates each.

    Per update: draw the site, then Bernoulli(alpha) picks the triplet
    scramble over the absorbing rule. Draw order is part of the
    reproducibility contract.
    """
    L = spins.shape[0]
    for _ in range(n_sweeps * L):
        r = next_below(state, L)
        if next_unit(state) < alpha:
            _apply_triplet_1d(spins, L, r, state)
        else:
            _apply_absorbing_1d(spins, L, r)


# ---------------------------------------------------------------------------
# 2d kernels
# ---------------------------------------------------------------------------


@njit(inline="always", cache=True)
def pair_delta_dw(spins, Lx, Ly, xa, ya, xb, yb):
    """Domain-wall-length change from flipping sites a and b together.

    Only bonds incident to exactly one flipped site toggle; a shared bond
    (a, b adjacent) is skipped in both loops and never changes.
    """
    delta = 0
    sa = spins[ya * Lx + xa]
    for k in range(4):
        dx = MOORE_DX[2 * k]  # E, N, W, S
        dy = MOORE_DY[2 * k]
        xq = (xa + dx) % Lx
        yq = (ya + dy) % Ly
        if xq == xb and yq == yb:
            continue
        if sa == spins[yq * Lx + xq]:
            delta += 1  # satisfied bond becomes unsatisfied
        else:
            delta -= 1
    sb = spins[yb * Lx + xb]
    for k in range(4):
        dx = MOORE_DX[2 * k]
        dy = MOORE_DY[2 * k]
        xq = (xb + dx) % Lx
        yq = (yb + dy) % Ly
        if xq == xa and yq == ya:
            continue
        if sb == spins[yq * Lx + xq]:
            delta += 1
        else:
            delta -= 1
    return delta


@njit(nogil=True, cache=True)
def toom_move_deltas(spins, Lx, Ly, r):
    """delta_dw for pairing site r with each of its 8 Moore partners."""
    x = r % Lx
    y = r // Lx
    out = np.empty(8, dtype=np.int64)
    for k in range(8):
        xb = (x + MOORE_DX[k]) % Lx
        yb = (y + MOORE_DY[k]) % Ly
        out[k] = pair_delta_dw(spins, Lx, Ly, x, y, xb, yb)
    return out


@njit(inline="always", cache=True)
def _toom_unstable(spins, Lx, Ly, x, y):
    s = spins[y * Lx + x]
    north = spins[((y + 1) % Ly) * Lx + x]
    east = spins[y * Lx + (x + 1) % Lx]
    return s != north and s != east


@njit(inline="always", cache=True)
def _apply_toom_2d(spins, Lx, Ly, r, strict, state, moves):
    x = r % Lx
    y = r // Lx
    if not _toom_unstable(spins, Lx, Ly, x, y):
        return
    n_moves = 0
    for k in range(8):
        xb = (x + MOORE_DX[k]) % Lx
        yb = (y + MOORE_DY[k]) % Ly
        d = pair_delta_dw(spins, Lx, Ly, x, y, xb, yb)
        if d < 0 or (d == 0 and not strict):
            moves[n_moves] = yb * Lx + xb
            n_moves += 1
    if n_moves == 0:
        return
    q = moves[next_below(state, n_moves)]
    spins[r] ^= 1
    spins[q] ^= 1


@njit(inline="always", cache=True)
def _apply_plaquette_2d(spins, Lx, Ly, r, state):
    x = r % Lx
    y = r // Lx
    xp = (x + 1) % Lx
    yp = (y + 1) % Ly
    p0 = r
    p1 = y * Lx + xp
    p2 = yp * Lx + x
    p3 = yp * Lx + xp
    pat = spins[p0] | (spins[p1] << 1) | (spins[p2] << 2) | (spins[p3] << 3)
    if pat == 0 or pat == 15:
        return
    par = (pat ^ (pat >> 1) ^ (pat >> 2) ^ (pat >> 3)) & 1
    if par == 0:
        new = PLAQ_EVEN[next_below(state, 6)]
    else:
        new = PLAQ_ODD[next_below(state, 8)]
    spins[p0] = new & 1
    spins[p1] = (new >> 1) & 1
    spins[p2] = (new >> 2) & 1
    spins[p3] = (new >> 3) & 1


@njit(nogil=True, cache=True)
def step_2d(spins, Lx, Ly, r, use_swssb, strict, state):
    """One elementary update at site r (plaquette anchored at r for SWSSB)."""
    moves = np.empty(8, dtype=np.int64)
    if use_swssb:
        _apply_plaquette_2d(spins, Lx, Ly, r, state)
    else:
        _apply_toom_2d(spins, Lx, Ly, r, strict, state, moves)


@njit(nogil=True, cache=True)
def sweep_2d(spins, Lx, Ly, alpha, strict, n_sweeps, state):
    """n_sweeps sweeps of Lx*Ly elementary updates; same draw order as sweep_1d."""
    n = Lx * Ly
    moves = np.empty(8, dtype=np.int64)
    for _ in range(n_sweeps * n):
        r = next_below(state, n)
        if next_unit(state) < alpha:
            _apply_plaquette_2d(spins, Lx, Ly, r, state)
        else:
            _apply_toom_2d(spins, Lx, Ly, r, strict, state, moves)


# ---------------------------------------------------------------------------
# observables on raw spin arrays
# ---------------------------------------------------------------------------


@njit(nogil=True, cache=True)
def domain_wall_count_2d(spins, Lx, Ly):
    """Number of unsatisfied nearest-neighbor bonds on the torus (of 2*Lx*Ly)."""
    count = 0
    for y in range(Ly):
        for x in range(Lx):
            s = spins[y * Lx + x]
            if s != spins[y * Lx + (x + 1) % Lx]:
                count += 1
            if s != spins[((y + 1) % Ly) * Lx + x]:
                count += 1
    return count


@njit(nogil=True, cache=True)
def active_plaquette_count_2d(spins, Lx, Ly):
    """Number of 2x2 plaquettes that are neither all-plus nor all-minus."""
    count = 0
    for y in range(Ly):
        for x in range(Lx):
            total = (
                spins[y * Lx + x]
                + spins[y * Lx + (x + 1) % Lx]
                + spins[((y + 1) % Ly) * Lx + x]
                + spins[((y + 1) % Ly) * Lx + (x + 1) % Lx]
            )
            if total != 0 and total != 4:
                count += 1
    return count


# ---------------------------------------------------------------------------
# region pattern extraction for fidelity histograms
# ---------------------------------------------------------------------------


@njit(nogil=True, cache=True)
def extract_keys(spins, site_table, out):
    """Region bit patterns at each row of a translate table.

    site_table[t, k] is the absolute site index of region position k for
    translate t; out[t] packs the corresponding minus flags little-endian
    (bit k = position k).
    """
    n_t = site_table.shape[0]
    w = site_table.shape[1]
    for t in range(n_t):
        key = uint64(0)
        for k in range(w):
            key |= uint64(spins[site_table[t, k]]) << uint64(k)
        out[t] = key


@njit(nogil=True, cache=True)
def accumulate_keys(keys, counts):
    for i in range(keys.shape[0]):
        counts[keys[i]] += 1


# ---------------------------------------------------------------------------
# exact-oracle helpers: configuration-space union-find and Toom transitions
# ---------------------------------------------------------------------------


@njit(inline="always", cache=True)
def _uf_find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(inline="always", cache=True)
def _uf_union(parent, a, b):
    ra = _uf_find(parent, a)
    rb = _uf_find(parent, b)
    if ra != rb:
        if ra < rb:
            parent[rb] = ra
        else:
            parent[ra] = rb


@njit(cache=True)
def scramble_class_labels(n_bits, groups, group_masks, scatter_even, scatter_odd, frozen_tab):
    """Union-find labels of configuration space under local scramble moves.

    groups[gi, k] are the site indices of scramble unit gi; scatter_even/odd
    rows hold the scattered target bit patterns per unit; frozen_tab marks
    local patterns with no transitions. Labels are the minimal reachable
    configuration index per class.
    """
    n_configs = 1 << n_bits
    g = groups.shape[1]
    parent = np.arange(n_configs, dtype=np.int64)
    for x in range(n_configs):
        for gi in range(groups.shape[0]):
            pat = 0
            for k in range(g):
                pat |= ((x >> groups[gi, k]) & 1) << k
            if frozen_tab[pat]:
                continue
            par = 0
            p = pat
            while p:
                par ^= p & 1
                p >>= 1
            base = x & ~group_masks[gi]
            if par == 0:
                for t in range(scatter_even.shape[1]):
                    _uf_union(parent, x, base | scatter_even[gi, t])
            else:
                for t in range(scatter_odd.shape[1]):
                    _uf_union(parent, x, base | scatter_odd[gi, t])
    for x in range(n_configs):
        parent[x] = _uf_find(parent, x)
    return parent


@njit(cache=True)
def toom_rate_entries(Lx, Ly, strict):
    """COO entries (dest, src, rate) of one pair-flip Toom update per site.

    Enumerates every configuration of the Lx*Ly torus; rates are 1/|moves|
    for each admissible pair flip at each Toom-unstable site. Self-loops are
    omitted (they never enter the generator).
    """
    n = Lx * Ly
    n_configs = 1 << n
    cap = n_configs * n * 8  # up to 8 admissible moves per (config, site)
    rows_list = np.empty(cap, dtype=np.int64)
    cols_list = np.empty(cap, dtype=np.int64)
    vals_list = np.empty(cap, dtype=np.float64)
    cnt = 0
    spins = np.empty(n, dtype=np.uint8)
    moves = np.empty(8, dtype=np.int64)
    for x in range(n_configs):
        for k in range(n):
            spins[k] = (x >> k) & 1
        for r in range(n):
            xx = r % Lx
            yy = r // Lx
            if not _toom_unstable(spins, Lx, Ly, xx, yy):
                continue
            n_moves = 0
            for k in range(8):
                xb = (xx + MOORE_DX[k]) % Lx
                yb = (yy + MOORE_DY[k]) % Ly
                d = pair_delta_dw(spins, Lx, Ly, xx, yy, xb, yb)
                if d < 0 or (d == 0 and not strict):
                    moves[n_moves] = yb * Lx + xb
                    n_moves += 1
            if n_moves == 0:
                continue
            w = 1.0 / n_moves
            for t in range(n_moves):
                y = x ^ (1 << r) ^ (1 << moves[t])
                rows_list[cnt] = y
                cols_list[cnt] = x
                vals_list[cnt] = w
                cnt += 1
    return rows_list[:cnt], cols_list[:cnt], vals_list[:cnt]
