"""Compiled inner loops: spatial-hash graph build, single-site chains, walk-tree
recursion, subset enumeration, and the 1D transfer recursion.

All randomness is counter-based (same constants as :mod:`hardgrid.rng`), so a
kernel's output is a pure function of its key arguments; parallel loops write
disjoint slots and never share generator state.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX_A = U64(0xBF58476D1CE4E5B9)
_MIX_B = U64(0x94D049BB133111EB)
_ONE = U64(1)
_TWO = U64(2)
_INV_2_53 = 1.0 / (1 << 53)


@njit(inline="always")
def _mix64(z):
    z = (z ^ (z >> U64(30))) * _MIX_A
    z = (z ^ (z >> U64(27))) * _MIX_B
    return z ^ (z >> U64(31))


@njit(inline="always")
def _unit(key, counter):
    u = _mix64(key + (counter + _ONE) * _GOLDEN)
    return (u >> U64(11)) * _INV_2_53


# ---------------------------------------------------------------------------
# Spatial-hash graph construction (point-level adjacency)


@njit(cache=True)
def _cell_ids(pos, cell_side, ncells):
    n, d = pos.shape
    ids = np.empty(n, np.int64)
    for p in range(n):
        flat = 0
        for i in range(d):
            c = int(pos[p, i] / cell_side)
            if c < 0:
                c = 0
            if c >= ncells[i]:
                c = ncells[i] - 1
            flat = flat * ncells[i] + c
        ids[p] = flat
    return ids


@njit(cache=True)
def build_point_adjacency(pos, cell_side, ncells, cell_offsets_nd, lam_max2,
                          pair_cap, want_dist2):
    """Two-pass CSR build of the point pairs with dist^2 < lam_max2.

    Returns (offsets, neighbors, dist2, scanned). ``scanned`` is -1 when the
    candidate-pair budget ``pair_cap`` was exceeded (nothing is allocated
    beyond the counting pass in that case).
    """
    n, d = pos.shape
    total_cells = 1
    for i in range(ncells.shape[0]):
        total_cells *= ncells[i]
    ids = _cell_ids(pos, cell_side, ncells)

    # bucket points by cell, stable in original index order
    counts = np.zeros(total_cells + 1, np.int64)
    for p in range(n):
        counts[ids[p] + 1] += 1
    for c in range(total_cells):
        counts[c + 1] += counts[c]
    bucket = np.empty(n, np.int64)
    fill = counts[:total_cells].copy()
    for p in range(n):
        bucket[fill[ids[p]]] = p
        fill[ids[p]] += 1

    noff = cell_offsets_nd.shape[0]
    deg = np.zeros(n, np.int64)
    scanned = 0
    # decode flat cell id incrementally per point to visit 3^d neighbour cells
    coords = np.empty(d, np.int64)
    for p in range(n):
        rem = ids[p]
        for i in range(d - 1, -1, -1):
            coords[i] = rem % ncells[i]
            rem //= ncells[i]
        for o in range(noff):
            flat = 0
            ok = True
            for i in range(d):
                c = coords[i] + cell_offsets_nd[o, i]
                if c < 0 or c >= ncells[i]:
                    ok = False
                    break
                flat = flat * ncells[i] + c
            if not ok:
                continue
            for b in range(counts[flat], counts[flat + 1]):
                p2 = bucket[b]
                if p2 == p:
                    continue
                scanned += 1
                if scanned > pair_cap:
                    return (np.empty(0, np.int64), np.empty(0, np.int32),
                            np.empty(0, np.float64), -1)
                d2 = 0.0
                for i in range(d):
                    diff = pos[p, i] - pos[p2, i]
                    d2 += diff * diff
                if d2 < lam_max2:
                    deg[p] += 1

    offsets = np.zeros(n + 1, np.int64)
    for p in range(n):
        offsets[p + 1] = offsets[p] + deg[p]
    nedges = offsets[n]
    neighbors = np.empty(nedges, np.int32)
    dist2 = np.empty(nedges if want_dist2 else 0, np.float64)
    cursor = offsets[:n].copy()
    for p in range(n):
        rem = ids[p]
        for i in range(d - 1, -1, -1):
            coords[i] = rem % ncells[i]
            rem //= ncells[i]
        for o in range(noff):
            flat = 0
            ok = True
            for i in range(d):
                c = coords[i] + cell_offsets_nd[o, i]
                if c < 0 or c >= ncells[i]:
                    ok = False
                    break
                flat = flat * ncells[i] + c
            if not ok:
                continue
            for b in range(counts[flat], counts[flat + 1]):
                p2 = bucket[b]
                if p2 == p:
                    continue
                d2 = 0.0
                for i in range(d):
                    diff = pos[p, i] - pos[p2, i]
                    d2 += diff * diff
                if d2 < lam_max2:
                    neighbors[cursor[p]] = p2
                    if want_dist2:
                        dist2[cursor[p]] = d2
                    cursor[p] += 1

    # canonical neighbour order: ascending point index within each segment
    for p in range(n):
        lo, hi = offsets[p], offsets[p + 1]
        if hi - lo > 1:
            order = np.argsort(neighbors[lo:hi], kind="mergesort")
            neighbors[lo:hi] = neighbors[lo:hi][order]
            if want_dist2:
                dist2[lo:hi] = dist2[lo:hi][order]
    return offsets, neighbors, dist2, scanned


# ---------------------------------------------------------------------------
# Glauber chains on explicit CSR adjacency


@njit(cache=True)
def run_chain_occupancy(offsets, neighbors, w_v, active, key, steps, occ,
                        counter_start=0):
    """Single-site dynamics from the state in ``occ`` (updated in place).

    ``counter_start`` resumes the stream mid-way, so chunked runs reproduce
    one long run exactly.
    """
    k = U64(key)
    for t in range(counter_start, counter_start + steps):
        tt = U64(t)
        u1 = _unit(k, _TWO * tt)
        u2 = _unit(k, _TWO * tt + _ONE)
        v = int(u1 * active)
        if v >= active:
            v = active - 1
        w = w_v[v]
        if u2 * (1.0 + w) < 1.0:
            occ[v] = 0
        else:
            blocked = False
            for e in range(offsets[v], offsets[v + 1]):
                u = neighbors[e]
                if u < active and occ[u] == 1:
                    blocked = True
                    break
            if not blocked:
                occ[v] = 1
    return occ


@njit(cache=True, parallel=True)
def run_chains_bitmask(masks, w_v, active, keys, steps, out):
    """Independent cold-start chains; final states as bitmasks (active <= 63)."""
    nchains = keys.shape[0]
    for i in prange(nchains):
        k = keys[i]
        occ = U64(0)
        for t in range(steps):
            tt = U64(t)
            u1 = _unit(k, _TWO * tt)
            u2 = _unit(k, _TWO * tt + _ONE)
            v = int(u1 * active)
            if v >= active:
                v = active - 1
            bit = _ONE << U64(v)
            if u2 * (1.0 + w_v[v]) < 1.0:
                occ &= ~bit
            elif masks[v] & occ == U64(0):
                occ |= bit
        out[i] = occ


@njit(cache=True, parallel=True)
def run_chains_unoccupied(masks, w_v, active, target, keys, steps, out):
    """Indicator of ``target`` being unoccupied at the end of each chain."""
    nchains = keys.shape[0]
    for i in prange(nchains):
        k = keys[i]
        occ = U64(0)
        for t in range(steps):
            tt = U64(t)
            u1 = _unit(k, _TWO * tt)
            u2 = _unit(k, _TWO * tt + _ONE)
            v = int(u1 * active)
            if v >= active:
                v = active - 1
            bit = _ONE << U64(v)
            if u2 * (1.0 + w_v[v]) < 1.0:
                occ &= ~bit
            elif masks[v] & occ == U64(0):
                occ |= bit
        out[i] = 0 if (occ >> U64(target)) & _ONE else 1


@njit(cache=True, parallel=True)
def run_chains_unoccupied_occ(offsets, neighbors, w_v, active, target, keys,
                              steps, out):
    """CSR variant of run_chains_unoccupied for graphs above 63 vertices."""
    nchains = keys.shape[0]
    for i in prange(nchains):
        k = keys[i]
        occ = np.zeros(active, np.uint8)
        for t in range(steps):
            tt = U64(t)
            u1 = _unit(k, _TWO * tt)
            u2 = _unit(k, _TWO * tt + _ONE)
            v = int(u1 * active)
            if v >= active:
                v = active - 1
            if u2 * (1.0 + w_v[v]) < 1.0:
                occ[v] = 0
            else:
                blocked = False
                for e in range(offsets[v], offsets[v + 1]):
                    u = neighbors[e]
                    if u < active and occ[u] == 1:
                        blocked = True
                        break
                if not blocked:
                    occ[v] = 1
        out[i] = 0 if occ[target] == 1 else 1


# ---------------------------------------------------------------------------
# Glauber chains on the implicit 1D grid (interval adjacency)


@njit(inline="always")
def _interval_step(pos, sigma2, w, occ, m, v, u2):
    """One update attempt at vertex ``v``; returns the new occupied count."""
    if u2 * (1.0 + w) < 1.0:
        lo, hi = 0, m
        while lo < hi:
            mid = (lo + hi) // 2
            if occ[mid] < v:
                lo = mid + 1
            else:
                hi = mid
        if lo < m and occ[lo] == v:
            for i in range(lo, m - 1):
                occ[i] = occ[i + 1]
            return m - 1
        return m
    lo, hi = 0, m
    while lo < hi:
        mid = (lo + hi) // 2
        if occ[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    if lo < m and occ[lo] == v:
        return m
    if lo > 0:
        diff = pos[v] - pos[occ[lo - 1]]
        if diff * diff < sigma2:
            return m
    if lo < m:
        diff = pos[occ[lo]] - pos[v]
        if diff * diff < sigma2:
            return m
    for i in range(m, lo, -1):
        occ[i] = occ[i - 1]
    occ[lo] = v
    return m + 1


@njit(cache=True)
def run_interval_chain(pos, sigma2, w, key, steps, occ):
    """Cold-start chain on the 1D grid; occupied set kept as a sorted buffer."""
    n = pos.shape[0]
    k = U64(key)
    m = 0
    for t in range(steps):
        tt = U64(t)
        u1 = _unit(k, _TWO * tt)
        u2 = _unit(k, _TWO * tt + _ONE)
        v = int(u1 * n)
        if v >= n:
            v = n - 1
        m = _interval_step(pos, sigma2, w, occ, m, v, u2)
    return m


@njit(cache=True, parallel=True)
def run_interval_streams(pos, sigma2, w, keys, burn_steps, spacing,
                         snaps_per_stream, counts_out, snaps_out):
    """Per-stream burn-in, then snapshots every ``spacing`` steps.

    snaps_out has shape (streams, snaps_per_stream, cap); counts_out holds the
    occupied counts. Streams are independent chains with their own keys.
    """
    n = pos.shape[0]
    nstreams = keys.shape[0]
    cap = snaps_out.shape[2]
    for s in prange(nstreams):
        k = keys[s]
        occ = np.empty(cap, np.int64)
        m = 0
        t = 0
        for _ in range(burn_steps):
            tt = U64(t)
            u1 = _unit(k, _TWO * tt)
            u2 = _unit(k, _TWO * tt + _ONE)
            t += 1
            v = int(u1 * n)
            if v >= n:
                v = n - 1
            m = _interval_step(pos, sigma2, w, occ, m, v, u2)
        for snap in range(snaps_per_stream):
            for _ in range(spacing):
                tt = U64(t)
                u1 = _unit(k, _TWO * tt)
                u2 = _unit(k, _TWO * tt + _ONE)
                t += 1
                v = int(u1 * n)
                if v >= n:
                    v = n - 1
                m = _interval_step(pos, sigma2, w, occ, m, v, u2)
            counts_out[s, snap] = m
            for i in range(m):
                snaps_out[s, snap, i] = occ[i]


# ---------------------------------------------------------------------------
# Truncated walk-tree occupation ratio with occupied/free pinning at revisits


@njit(cache=True)
def walk_tree_ratio(offsets, neighbors, w_v, active, root, depth, max_nodes):
    """Occupation ratio R(root) on the walk tree truncated at ``depth``.

    Children beyond the horizon contribute ratio 0. A step onto a vertex
    already on the current path is a pinned leaf: occupied (forcing the
    parent's ratio to 0) when the arriving vertex id exceeds the id by which
    the path left that vertex, free (factor 1) otherwise; adjacency lists are
    sorted by id so id order is edge order. Returns -1.0 once more than
    ``max_nodes`` tree nodes were expanded.
    """
    on_path = np.zeros(active, np.uint8)
    path_next = np.full(active, -1, np.int32)
    cap = depth + 2
    f_vert = np.empty(cap, np.int32)
    f_parent = np.empty(cap, np.int32)
    f_cptr = np.empty(cap, np.int64)
    f_cend = np.empty(cap, np.int64)
    f_prod = np.empty(cap, np.float64)
    f_dead = np.empty(cap, np.uint8)

    sp = 0
    f_vert[0] = root
    f_parent[0] = -1
    f_cptr[0] = offsets[root] if depth >= 1 else offsets[root + 1]
    f_cend[0] = offsets[root + 1]
    f_prod[0] = 1.0
    f_dead[0] = 0
    on_path[root] = 1
    nodes = 0

    while True:
        if f_dead[sp] == 1 or f_cptr[sp] >= f_cend[sp]:
            v = f_vert[sp]
            on_path[v] = 0
            r = 0.0 if f_dead[sp] == 1 else w_v[v] * f_prod[sp]
            sp -= 1
            if sp < 0:
                return r
            f_prod[sp] *= 1.0 / (1.0 + r)
            continue
        e = f_cptr[sp]
        f_cptr[sp] = e + 1
        c = neighbors[e]
        if c >= active or c == f_parent[sp]:
            continue
        if on_path[c] == 1:
            if f_vert[sp] > path_next[c]:
                f_dead[sp] = 1
            continue
        nodes += 1
        if nodes > max_nodes:
            return -1.0
        u = f_vert[sp]
        sp += 1
        f_vert[sp] = c
        f_parent[sp] = u
        f_cptr[sp] = offsets[c] if sp < depth else offsets[c + 1]
        f_cend[sp] = offsets[c + 1]
        f_prod[sp] = 1.0
        f_dead[sp] = 0
        on_path[c] = 1
        path_next[u] = c


# ---------------------------------------------------------------------------
# Exact references


@njit(cache=True)
def subset_enumeration_log_z(masks, weights):
    """ln of the weighted independent-set sum by brute force over all subsets."""
    n = masks.shape[0]
    total = 0.0
    for s in range(1 << n):
        su = U64(s)
        prod = 1.0
        ok = True
        for v in range(n):
            if (s >> v) & 1:
                if masks[v] & su != U64(0):
                    ok = False
                    break
                prod *= weights[v]
        if ok:
            total += prod
    return np.log(total)


@njit(cache=True)
def interval_log_z(pos, sigma2, log_w):
    """Log-space transfer recursion over sorted 1D positions.

    lz[k+1] = logaddexp(lz[k], log_w + lz[j(k)]) where j(k) counts prefix
    positions compatible with position k (squared-distance comparison kept
    identical to the graph edge rule).
    """
    n = pos.shape[0]
    lz = np.empty(n + 1, np.float64)
    lz[0] = 0.0
    jk = 0
    for k in range(n):
        while jk < k:
            diff = pos[k] - pos[jk]
            if diff * diff >= sigma2:
                jk += 1
            else:
                break
        la = lz[k]
        lb = log_w + lz[jk]
        if la < lb:
            la, lb = lb, la
        if lb == -np.inf:
            lz[k + 1] = la
        else:
            lz[k + 1] = la + np.log1p(np.exp(lb - la))
    return lz[n]
