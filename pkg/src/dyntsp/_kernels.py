"""Numba kernels for the abstraction builder and the reach-avoid solver.

Everything here operates on flat integer/float64 arrays (successor and
reverse-adjacency indices are int32); the surrounding modules own validation
and array layout.
"""

import numpy as np
from numba import njit

INF = np.inf


# -- successor enumeration ----------------------------------------------------

@njit(cache=True)
def successor_ranges(y, radius, lower, eta, counts, periodic):
    """Per-cell index ranges of the cells intersecting [y - r, y + r].

    ``radius`` has shape (C, n): the box half-width may vary per cell.
    Returns (li, m, sink, total): lower index and span per dimension
    (unwrapped for periodic dims), whether the box leaves the domain in a
    non-periodic dimension, and the in-domain successor count per cell.
    """
    C, n = y.shape
    li = np.empty((C, n), dtype=np.int64)
    m = np.empty((C, n), dtype=np.int64)
    sink = np.zeros(C, dtype=np.bool_)
    total = np.empty(C, dtype=np.int64)
    for c in range(C):
        cnt = 1
        for d in range(n):
            lo = y[c, d] - radius[c, d]
            hi = y[c, d] + radius[c, d]
            a = int(np.floor((lo - lower[d]) / eta[d]))
            b = int(np.floor((hi - lower[d]) / eta[d]))
            if periodic[d]:
                span = b - a + 1
                if span >= counts[d]:
                    a = 0
                    span = counts[d]
            else:
                if a < 0 or b >= counts[d]:
                    sink[c] = True
                if a < 0:
                    a = 0
                if b > counts[d] - 1:
                    b = counts[d] - 1
                span = b - a + 1
                if span < 0:  # box entirely outside the domain
                    span = 0
            li[c, d] = a
            m[c, d] = span
            cnt *= span
        total[c] = cnt
    return li, m, sink, total


@njit(cache=True)
def fill_successors(li, m, sink, counts, periodic, strides, offsets, sink_id, out):
    """Write successor indices per cell in deterministic odometer order."""
    C, n = li.shape
    idx = np.empty(n, dtype=np.int64)
    for c in range(C):
        pos = offsets[c]
        cnt = 1
        for d in range(n):
            cnt *= m[c, d]
        if cnt > 0:
            for d in range(n):
                idx[d] = 0
            while True:
                flat = 0
                for d in range(n):
                    v = li[c, d] + idx[d]
                    if periodic[d]:
                        v = v % counts[d]
                    flat += v * strides[d]
                out[pos] = flat
                pos += 1
                d = n - 1
                while d >= 0:
                    idx[d] += 1
                    if idx[d] < m[c, d]:
                        break
                    idx[d] = 0
                    d -= 1
                if d < 0:
                    break
        if sink[c]:
            out[pos] = sink_id
            pos += 1


# -- binary heap (lazy deletion) ----------------------------------------------

@njit(cache=True, inline="always")
def _heap_push(hv, hn, size, val, node):
    i = size
    hv[i] = val
    hn[i] = node
    while i > 0:
        parent = (i - 1) // 2
        if hv[parent] <= hv[i]:
            break
        hv[parent], hv[i] = hv[i], hv[parent]
        hn[parent], hn[i] = hn[i], hn[parent]
        i = parent
    return size + 1


@njit(cache=True, inline="always")
def _heap_pop(hv, hn, size):
    size -= 1
    hv[0] = hv[size]
    hn[0] = hn[size]
    i = 0
    while True:
        l = 2 * i + 1
        r = l + 1
        small = i
        if l < size and hv[l] < hv[small]:
            small = l
        if r < size and hv[r] < hv[small]:
            small = r
        if small == i:
            break
        hv[small], hv[i] = hv[i], hv[small]
        hn[small], hn[i] = hn[i], hn[small]
        i = small
    return size


# -- reach-avoid solvers ------------------------------------------------------

@njit(cache=True)
def minimax_dijkstra(num_states, num_inputs, offsets, succ, pcost, ecost, per_edge,
                     rev_off, rev_pair, rev_edge, terminal):
    """Label-setting solve of the worst-case (minimax) reach problem.

    A (state, input) hyperedge is relaxed once all its successors are
    finalized; its value is the max over successors of (edge cost + label).
    Requires every finite edge cost to be strictly positive.  Costs come from
    ``pcost`` (per pair) or, when ``per_edge``, from ``ecost[rev_edge[r]]``.
    """
    S = num_states
    M = num_inputs
    P = S * M
    V = np.full(S, INF)
    finalized = np.zeros(S, dtype=np.bool_)
    countdown = np.empty(P, dtype=np.int64)
    for p in range(P):
        countdown[p] = offsets[p + 1] - offsets[p]
    pairmax = np.full(P, -INF)
    cap = P + S + 2
    hv = np.empty(cap, dtype=np.float64)
    hn = np.empty(cap, dtype=np.int64)
    hs = 0
    for x in range(S):
        if terminal[x] < INF:
            hs = _heap_push(hv, hn, hs, terminal[x], x)
    while hs > 0:
        val = hv[0]
        x = hn[0]
        hs = _heap_pop(hv, hn, hs)
        if finalized[x]:
            continue
        finalized[x] = True
        V[x] = val
        for r in range(rev_off[x], rev_off[x + 1]):
            p = rev_pair[r]
            if per_edge:
                cand = ecost[rev_edge[r]] + val
            else:
                cand = pcost[p] + val
            if cand > pairmax[p]:
                pairmax[p] = cand
            countdown[p] -= 1
            if countdown[p] == 0:
                q = pairmax[p]
                if q < INF:
                    px = p // M
                    if not finalized[px]:
                        hs = _heap_push(hv, hn, hs, q, px)
    return V


@njit(cache=True)
def pair_values(offsets, succ, pcost, ecost, per_edge, V):
    """q[p] = max over stored edges of pair p of (edge cost + V[successor])."""
    P = offsets.shape[0] - 1
    q = np.empty(P, dtype=np.float64)
    for p in range(P):
        best = -INF
        for e in range(offsets[p], offsets[p + 1]):
            if per_edge:
                c = ecost[e] + V[succ[e]]
            else:
                c = V[succ[e]]
            if c > best:
                best = c
        if not per_edge:
            best = best + pcost[p]
        q[p] = best
    return q


@njit(cache=True)
def gauss_seidel_vi(num_states, num_inputs, offsets, succ, pcost, ecost, per_edge,
                    terminal, tol, max_sweeps):
    """Gauss-Seidel value iteration from above (V0 = terminal / inf)."""
    S = num_states
    M = num_inputs
    V = terminal.copy()
    for _ in range(max_sweeps):
        delta = 0.0
        for x in range(S):
            best = terminal[x]
            for u in range(M):
                p = x * M + u
                q = -INF
                for e in range(offsets[p], offsets[p + 1]):
                    if per_edge:
                        c = ecost[e] + V[succ[e]]
                    else:
                        c = V[succ[e]]
                    if c > q:
                        q = c
                if not per_edge:
                    q = q + pcost[p]
                if q < best:
                    best = q
            if best < V[x]:
                change = V[x] - best if V[x] < INF else INF
                if change > delta:
                    delta = change
                V[x] = best
        if delta <= tol:
            break
    return V


@njit(cache=True)
def policy_eval(num_states, num_inputs, offsets, succ, pcost, ecost, per_edge,
                policy, stop, terminal, tol, max_sweeps):
    """Worst-case performance of a fixed memoryless policy with stop flags.

    L(x) = terminal(x) where the policy stops, else
    max over successors under the chosen input of (edge cost + L).
    States with policy < 0 (undefined) evaluate to inf.
    """
    S = num_states
    M = num_inputs
    L = np.full(S, INF)
    for x in range(S):
        if stop[x]:
            L[x] = terminal[x]
    for _ in range(max_sweeps):
        delta = 0.0
        for x in range(S):
            if stop[x] or policy[x] < 0:
                continue
            p = x * M + policy[x]
            q = -INF
            for e in range(offsets[p], offsets[p + 1]):
                if per_edge:
                    c = ecost[e] + L[succ[e]]
                else:
                    c = L[succ[e]]
                if c > q:
                    q = c
            if not per_edge:
                q = q + pcost[p]
            if q < L[x]:
                change = L[x] - q if L[x] < INF else INF
                if change > delta:
                    delta = change
                L[x] = q
        if delta <= tol:
            break
    return L
