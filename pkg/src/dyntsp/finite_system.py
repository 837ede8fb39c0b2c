"""Finite nondeterministic transition systems with worst-case running costs.

Transitions are stored in compressed form: one flat successor array plus an
offset table indexed by ``state * num_inputs + input``.  Step costs are either
per (state, input) pair (the common case for grid abstractions, where the cost
does not depend on the successor) or per stored edge (the general case, used
by the plain-text fixture format).

Successor and reverse-adjacency arrays are int32: grid abstractions routinely
reach 10^8 stored edges, where the narrower index type halves the resident
set; state and pair counts stay far below 2^31.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError, UsageError

INF = float("inf")


class StateSet:
    """Subset of the states of a finite system, stored as a boolean mask."""

    __slots__ = ("mask",)

    def __init__(self, mask):
        self.mask = np.ascontiguousarray(mask, dtype=bool)

    @classmethod
    def empty(cls, num_states):
        return cls(np.zeros(num_states, dtype=bool))

    @classmethod
    def full(cls, num_states):
        return cls(np.ones(num_states, dtype=bool))

    @classmethod
    def from_indices(cls, num_states, indices):
        mask = np.zeros(num_states, dtype=bool)
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= num_states):
            raise UsageError("state index out of range for StateSet")
        mask[idx] = True
        return cls(mask)

    @property
    def num_states(self):
        return self.mask.shape[0]

    def union(self, other):
        return StateSet(self.mask | other.mask)

    def intersection(self, other):
        return StateSet(self.mask & other.mask)

    def difference(self, other):
        return StateSet(self.mask & ~other.mask)

    def is_empty(self):
        return not self.mask.any()

    def contains(self, index):
        return bool(self.mask[index])

    def indices(self):
        return np.flatnonzero(self.mask)

    def copy(self):
        return StateSet(self.mask.copy())

    def __len__(self):
        return int(self.mask.sum())

    def __eq__(self, other):
        return isinstance(other, StateSet) and np.array_equal(self.mask, other.mask)

    def __repr__(self):
        return f"StateSet({len(self)}/{self.num_states})"


class FiniteSystem:
    """Strict finite transition system (X', U', F') with running-cost annotation.

    Parameters
    ----------
    num_states, num_inputs:
        Sizes of the finite state and input spaces.
    offsets:
        int64 array of length ``num_states * num_inputs + 1``; successors of
        pair ``p = x * num_inputs + u`` are ``successors_flat[offsets[p]:offsets[p+1]]``.
    successors_flat:
        int64 array of successor state indices; no duplicates within a pair.
    pair_cost:
        float64 array of per-(state, input) step costs, or None.
    edge_cost:
        float64 array of per-edge step costs aligned with ``successors_flat``,
        or None.  Exactly one of pair_cost / edge_cost must be given.
    """

    def __init__(self, num_states, num_inputs, offsets, successors_flat,
                 pair_cost=None, edge_cost=None, validate=True):
        self.num_states = int(num_states)
        self.num_inputs = int(num_inputs)
        if self.num_states * self.num_inputs >= 2 ** 31:
            raise UsageError("state-input pair count exceeds the int32 index range")
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        self.successors_flat = np.ascontiguousarray(successors_flat, dtype=np.int32)
        self.pair_cost = None if pair_cost is None else np.ascontiguousarray(pair_cost, dtype=np.float64)
        self._edge_cost = None if edge_cost is None else np.ascontiguousarray(edge_cost, dtype=np.float64)
        self._reverse_cache = None
        if validate:
            self._validate()

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_transitions(cls, num_states, num_inputs, transitions, costs):
        """Build from a ``{(x, u): [y, ...]}`` dict.

        ``costs`` maps either ``(x, u)`` or ``(x, u, y)`` to a nonnegative
        step cost; a plain number applies uniformly.
        """
        offsets = np.zeros(num_states * num_inputs + 1, dtype=np.int64)
        succ = []
        ecost = []
        per_edge = isinstance(costs, dict) and any(len(k) == 3 for k in costs)
        for x in range(num_states):
            for u in range(num_inputs):
                ys = transitions.get((x, u))
                if not ys:
                    raise UsageError(f"missing successors for state {x}, input {u} (F must be strict)")
                offsets[x * num_inputs + u + 1] = len(ys)
                for y in ys:
                    succ.append(y)
                    if isinstance(costs, dict):
                        c = costs[(x, u, y)] if per_edge else costs[(x, u)]
                    else:
                        c = costs
                    ecost.append(c)
        np.cumsum(offsets, out=offsets)
        return cls(num_states, num_inputs, offsets, np.asarray(succ, dtype=np.int32),
                   edge_cost=np.asarray(ecost, dtype=np.float64))

    def _validate(self):
        p = self.num_states * self.num_inputs
        if self.offsets.shape != (p + 1,):
            raise UsageError("offset table has wrong length")
        counts = np.diff(self.offsets)
        if (counts < 1).any():
            bad = int(np.argmax(counts < 1))
            raise UsageError(f"pair (state {bad // self.num_inputs}, input {bad % self.num_inputs}) "
                             f"has no successor (F must be strict)")
        if self.offsets[0] != 0 or self.offsets[-1] != self.successors_flat.shape[0]:
            raise UsageError("offset table inconsistent with successor array")
        if self.successors_flat.size:
            if self.successors_flat.min() < 0 or self.successors_flat.max() >= self.num_states:
                raise UsageError("successor index out of range")
        if (self.pair_cost is None) == (self._edge_cost is None):
            raise UsageError("exactly one of pair_cost / edge_cost must be provided")
        cost = self.pair_cost if self.pair_cost is not None else self._edge_cost
        if self.pair_cost is not None and cost.shape != (p,):
            raise UsageError("pair_cost has wrong length")
        if np.isnan(cost).any() or (cost < 0).any():
            raise UsageError("step costs must be nonnegative (possibly +inf)")

    # -- queries --------------------------------------------------------------

    def _check_indices(self, x, u):
        if not (0 <= x < self.num_states):
            raise UsageError(f"state index {x} out of range")
        if not (0 <= u < self.num_inputs):
            raise UsageError(f"input index {u} out of range")

    def successors(self, x, u):
        """Stored successor list of ``(x, u)`` (nonempty, no duplicates)."""
        self._check_indices(x, u)
        p = x * self.num_inputs + u
        return self.successors_flat[self.offsets[p]:self.offsets[p + 1]]

    def step_cost(self, x, y, u):
        self._check_indices(x, u)
        p = x * self.num_inputs + u
        if self.pair_cost is not None:
            return float(self.pair_cost[p])
        lo, hi = self.offsets[p], self.offsets[p + 1]
        hits = np.flatnonzero(self.successors_flat[lo:hi] == y)
        if hits.size == 0:
            raise UsageError(f"{y} is not a successor of ({x}, {u})")
        return float(self._edge_cost[lo + hits[0]])

    def worst_case_step_cost(self, x, u):
        """max over successors y of step_cost(x, y, u)."""
        self._check_indices(x, u)
        p = x * self.num_inputs + u
        if self.pair_cost is not None:
            return float(self.pair_cost[p])
        return float(self._edge_cost[self.offsets[p]:self.offsets[p + 1]].max())

    def edge_costs(self):
        """Per-edge cost array (expanded from pair_cost if needed, cached)."""
        if self._edge_cost is None:
            self._edge_cost = np.repeat(self.pair_cost, np.diff(self.offsets))
        return self._edge_cost

    def reverse_adjacency(self):
        """(rev_offsets, rev_pair, rev_edge): in-edges grouped by successor state.

        Used by the label-setting solver; computed once and cached.  For
        pair-cost systems the solver never needs the original edge position,
        so ``rev_edge`` is left empty to keep the cache small.
        """
        if self._reverse_cache is None:
            num_pairs = self.num_states * self.num_inputs
            pair_of_edge = np.repeat(np.arange(num_pairs, dtype=np.int32), np.diff(self.offsets))
            order = np.argsort(self.successors_flat, kind="stable")
            rev_counts = np.bincount(self.successors_flat, minlength=self.num_states)
            rev_offsets = np.zeros(self.num_states + 1, dtype=np.int64)
            np.cumsum(rev_counts, out=rev_offsets[1:])
            rev_pair = pair_of_edge[order]
            if self.pair_cost is not None:
                rev_edge = np.empty(0, dtype=np.int32)
            else:
                rev_edge = order.astype(np.int32)
            self._reverse_cache = (rev_offsets, rev_pair, rev_edge)
        return self._reverse_cache

    # -- plain-text fixture format -------------------------------------------

    @classmethod
    def from_text(cls, text):
        """Parse the fixture format: header ``states N inputs M``, then
        one transition per line: ``x u y cost``."""
        lines = text.splitlines()
        header = None
        transitions = {}
        costs = {}
        for ln, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if header is None:
                if len(parts) != 4 or parts[0] != "states" or parts[2] != "inputs":
                    raise ParseError("expected header 'states N inputs M'", line=ln)
                header = (int(parts[1]), int(parts[3]))
                continue
            if len(parts) != 4:
                raise ParseError("expected 'x u y cost'", line=ln)
            try:
                x, u, y = int(parts[0]), int(parts[1]), int(parts[2])
                c = float(parts[3])
            except ValueError as exc:
                raise ParseError(str(exc), line=ln) from None
            transitions.setdefault((x, u), []).append(y)
            costs[(x, u, y)] = c
        if header is None:
            raise ParseError("empty graph file")
        return cls.from_transitions(header[0], header[1], transitions, costs)

    def to_text(self):
        out = [f"states {self.num_states} inputs {self.num_inputs}"]
        ecost = self.edge_costs()
        for x in range(self.num_states):
            for u in range(self.num_inputs):
                p = x * self.num_inputs + u
                for e in range(self.offsets[p], self.offsets[p + 1]):
                    out.append(f"{x} {u} {self.successors_flat[e]} {float(ecost[e])!r}")
        return "\n".join(out) + "\n"

    def __repr__(self):
        return (f"FiniteSystem(states={self.num_states}, inputs={self.num_inputs}, "
                f"edges={self.successors_flat.shape[0]})")
