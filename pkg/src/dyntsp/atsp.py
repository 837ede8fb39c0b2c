"""Asymmetric TSP on an explicit cost matrix.

Cities are 1-based; a tour is the sequence (1, t2, ..., tN, 1) anchored at
the depot city 1.  Small instances are solved exactly by Held-Karp dynamic
programming over subsets; larger ones by nearest-neighbor construction
improved with direction-aware 2-opt and Or-opt moves.  TSPLIB file interop
allows bridging to external solvers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ParseError, UsageError

HELD_KARP_MAX = 16
TSPLIB_SCALE = 1000
TSPLIB_DIAGONAL = 10 ** 9


@dataclass(frozen=True)
class ATSPInstance:
    """N cities with an N x N nonnegative cost matrix; diagonal forbidden."""

    matrix: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.matrix, dtype=np.float64)
        if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] < 2:
            raise UsageError("cost matrix must be square with N >= 2")
        off = C[~np.eye(C.shape[0], dtype=bool)]
        if np.isnan(off).any() or (off < 0).any():
            raise UsageError("off-diagonal costs must be nonnegative")
        object.__setattr__(self, "matrix", C)

    @property
    def n(self):
        return self.matrix.shape[0]


def validate_tour(n, tour):
    tour = tuple(int(t) for t in tour)
    if len(tour) != n + 1 or tour[0] != 1 or tour[-1] != 1:
        raise UsageError(f"tour must be (1, t2, ..., t{n}, 1)")
    if sorted(tour[1:-1]) != list(range(2, n + 1)):
        raise UsageError("tour interior must be a permutation of 2..N")
    return tour


def tour_cost(inst: ATSPInstance, tour):
    tour = validate_tour(inst.n, tour)
    return float(sum(inst.matrix[tour[i] - 1, tour[i + 1] - 1] for i in range(inst.n)))


def _require_finite(inst):
    off = inst.matrix[~np.eye(inst.n, dtype=bool)]
    if not np.isfinite(off).all():
        raise UsageError("all off-diagonal costs must be finite")


def solve_exact(inst: ATSPInstance):
    """Optimal tour by Held-Karp dynamic programming (N <= 16)."""
    n = inst.n
    if n > HELD_KARP_MAX:
        raise CapacityError(f"N={n} exceeds the exact-solver limit {HELD_KARP_MAX}; "
                            f"use solve_heuristic")
    _require_finite(inst)
    if n == 2:
        return (1, 2, 1)
    C = inst.matrix
    m = n - 1  # cities 2..N as bits 0..m-1
    size = 1 << m
    dp = np.full((size, m), np.inf)
    parent = np.full((size, m), -1, dtype=np.int64)
    for j in range(m):
        dp[1 << j, j] = C[0, j + 1]
    for mask in range(size):
        row = dp[mask]
        for j in range(m):
            cost = row[j]
            if not np.isfinite(cost):
                continue
            for k in range(m):
                if mask & (1 << k):
                    continue
                nmask = mask | (1 << k)
                cand = cost + C[j + 1, k + 1]
                if cand < dp[nmask, k]:
                    dp[nmask, k] = cand
                    parent[nmask, k] = j
    full = size - 1
    closing = dp[full] + C[1:, 0]
    j = int(np.argmin(closing))
    order = []
    mask = full
    while j >= 0:
        order.append(j + 2)
        j, mask = parent[mask, j], mask ^ (1 << j)
    order.reverse()
    return validate_tour(n, (1, *order, 1))


def _nearest_neighbor(C, n, start):
    """Greedy cycle from 0-based ``start``; ties broken by lowest city index."""
    unvisited = list(range(n))
    unvisited.remove(start)
    order = [start]
    cur = start
    while unvisited:
        nxt = min(unvisited, key=lambda j: (C[cur, j], j))
        unvisited.remove(nxt)
        order.append(nxt)
        cur = nxt
    return order


def _cycle_cost(C, order):
    n = len(order)
    return float(sum(C[order[i], order[(i + 1) % n]] for i in range(n)))


def _two_opt_or_opt(C, order):
    """Local search to a joint 2-opt / Or-opt optimum (asymmetric aware).

    2-opt reverses a segment; since arc costs are directional the delta is
    recomputed from the full candidate cost.  Or-opt relocates segments of
    length 1-3 without reversal.
    """
    n = len(order)
    best = _cycle_cost(C, order)
    improved = True
    while improved:
        improved = False
        for i in range(1, n - 1):
            for j in range(i + 1, n):
                cand = order[:i] + order[i:j + 1][::-1] + order[j + 1:]
                cost = _cycle_cost(C, cand)
                if cost < best - 1e-12:
                    order, best, improved = cand, cost, True
        for seg in (1, 2, 3):
            for i in range(1, n - seg):
                piece = order[i:i + seg]
                rest = order[:i] + order[i + seg:]
                for k in range(1, len(rest) + 1):
                    if k == i:
                        continue
                    cand = rest[:k] + piece + rest[k:]
                    cost = _cycle_cost(C, cand)
                    if cost < best - 1e-12:
                        order, best, improved = cand, cost, True
                        break
                if improved:
                    break
    return order, best


def _anchor(order):
    i = order.index(0)
    order = order[i:] + order[:i]
    return tuple(c + 1 for c in order) + (1,)


def solve_heuristic(inst: ATSPInstance, seed=0):
    """Nearest-neighbor + 2-opt/Or-opt heuristic; deterministic per seed.

    Runs the local search from the depot nearest-neighbor tour plus up to 7
    seeded random-start tours; the depot start is always tried, so the
    returned cost never exceeds the plain nearest-neighbor tour cost.
    """
    _require_finite(inst)
    n = inst.n
    C = inst.matrix
    if n <= 3:
        return solve_exact(inst)
    rng = np.random.default_rng(seed)
    starts = [0]
    extra = rng.permutation(np.arange(1, n))[:min(7, n - 1)]
    starts.extend(int(s) for s in extra)
    best_order, best_cost = None, np.inf
    for s in starts:
        order, cost = _two_opt_or_opt(C, _nearest_neighbor(C, n, s))
        if cost < best_cost - 1e-12:
            best_order, best_cost = order, cost
    return validate_tour(n, _anchor(best_order))


# -- TSPLIB interop -----------------------------------------------------------

def export_tsplib(inst: ATSPInstance, path, name="dyntsp", scale=TSPLIB_SCALE):
    """Write an ATSP FULL_MATRIX problem file with integer-scaled weights.

    Reals are multiplied by ``scale`` and rounded to nearest; the diagonal is
    written as a large sentinel so self-visits are never selected.
    """
    _require_finite(inst)
    n = inst.n
    W = np.floor(inst.matrix * scale + 0.5).astype(np.int64)
    np.fill_diagonal(W, TSPLIB_DIAGONAL)
    lines = [
        f"NAME: {name}",
        "TYPE: ATSP",
        f"DIMENSION: {n}",
        "EDGE_WEIGHT_TYPE: EXPLICIT",
        "EDGE_WEIGHT_FORMAT: FULL_MATRIX",
        "EDGE_WEIGHT_SECTION",
    ]
    lines.extend(" ".join(str(int(w)) for w in row) for row in W)
    lines.append("EOF")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def import_tsplib(path):
    """Read an explicit FULL_MATRIX problem file back into an instance."""
    dimension = None
    weights = []
    in_section = False
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line == "EOF":
                in_section = False
                continue
            if in_section:
                try:
                    weights.extend(int(tok) for tok in line.split())
                except ValueError:
                    raise ParseError("non-integer weight", line=ln) from None
                continue
            if ":" in line:
                key, val = (part.strip() for part in line.split(":", 1))
                if key == "DIMENSION":
                    dimension = int(val)
            elif line == "EDGE_WEIGHT_SECTION":
                in_section = True
    if dimension is None or len(weights) != dimension * dimension:
        raise ParseError(f"expected {dimension}x{dimension} weights in {path}")
    W = np.asarray(weights, dtype=np.float64).reshape(dimension, dimension) / TSPLIB_SCALE
    np.fill_diagonal(W, 0.0)
    return ATSPInstance(W)


def export_tour(tour, path, name="dyntsp"):
    n = len(tour) - 1
    lines = [f"NAME: {name}", "TYPE: TOUR", f"DIMENSION: {n}", "TOUR_SECTION"]
    lines.extend(str(int(c)) for c in tour[:-1])
    lines.extend(["-1", "EOF"])
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def import_tour(path):
    """Read a TOUR file; the cyclic permutation is re-anchored at city 1."""
    cities = []
    in_section = False
    terminated = False
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line == "TOUR_SECTION":
                in_section = True
                continue
            if not in_section or line == "EOF":
                continue
            for tok in line.split():
                try:
                    c = int(tok)
                except ValueError:
                    raise ParseError(f"bad city index {tok!r}", line=ln) from None
                if c == -1:
                    terminated = True
                    break
                if terminated:
                    raise ParseError("cities after -1 terminator", line=ln)
                cities.append(c)
            if terminated:
                break
    if not terminated:
        raise ParseError(f"missing -1 terminator in tour file {path}")
    if 1 not in cities:
        raise ParseError("tour does not contain the depot city 1")
    i = cities.index(1)
    order = cities[i:] + cities[:i]
    return validate_tour(len(order), (*order, 1))
