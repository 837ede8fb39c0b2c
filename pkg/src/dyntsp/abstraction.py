"""Finite abstraction (X', U', F') of a sampled system on a uniform grid.

For every non-sink cell c and input value u_k the successors are exactly the
cells intersecting the overapproximated one-step image of the cell box, with
periodic wrapping; any escape through a non-periodic face adds the absorbing
sink.  Step costs are per (cell, input): infinite for obstacle cells and the
sink, otherwise supplied by the scenario's running-cost rule.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .dynamics import GrowthBoundModel, VectorFieldSpec, integrate_nominal
from .errors import ParseError, UsageError
from .finite_system import FiniteSystem, StateSet
from .grid import UniformGrid

ABSTRACTION_MAGIC = b"DTSPABS1"


@dataclass(frozen=True)
class InputSample:
    """Ordered finite sample of the continuous input set."""

    values: np.ndarray  # (M, m)

    def __post_init__(self):
        vals = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if vals.shape[0] == 0:
            raise UsageError("input sample must be nonempty")
        object.__setattr__(self, "values", vals)

    @classmethod
    def grid(cls, lower, upper, counts):
        """Uniform sample: per-dimension linspace including both endpoints."""
        lower = np.atleast_1d(np.asarray(lower, dtype=np.float64))
        upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
        counts = np.atleast_1d(np.asarray(counts, dtype=np.int64))
        axes = [np.linspace(lower[d], upper[d], counts[d]) for d in range(lower.shape[0])]
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(np.stack([m.ravel() for m in mesh], axis=-1))

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class AbstractRunningCost:
    """Cell-wise running-cost rule.

    ``obstacle_test(lo, hi)`` flags cells whose closed box intersects the
    obstacle set (vectorized over cells).  ``finite_cost`` receives the cell
    box and the overapproximated successor box and must return a conservative
    upper bound of the concrete running cost for every behavior in the cell.
    """

    obstacle_test: Callable[[np.ndarray, np.ndarray], np.ndarray]
    finite_cost: Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _propagate_radius_matrix(L, r0, w_half, tau, substeps):
    """RK4 solve of  r' = L r + w_half  for a fixed, already-validated L."""
    r = np.asarray(r0, dtype=np.float64)
    h = tau / substeps

    def deriv(v):
        return L @ v + w_half

    for _ in range(substeps):
        k1 = deriv(r)
        k2 = deriv(r + 0.5 * h * k1)
        k3 = deriv(r + 0.5 * h * k2)
        k4 = deriv(r + h * k3)
        r = r + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return r


def build_abstraction(spec: VectorFieldSpec, model: GrowthBoundModel, grid: UniformGrid,
                      inputs: InputSample, cost: AbstractRunningCost) -> FiniteSystem:
    if spec.dimension != grid.dimension:
        raise UsageError("dynamics and grid dimensions disagree")
    C = grid.num_cells
    M = len(inputs)
    num_states = C + 1  # + sink
    centers = grid.all_centers()
    radius = 0.5 * grid.eta
    boxes_lo = centers - radius
    boxes_hi = centers + radius
    obstacle = np.asarray(cost.obstacle_test(boxes_lo, boxes_hi), dtype=bool)

    # cells sharing a growth-bound group share one radius-ODE solution
    if model.group_of_cells is None:
        group = np.zeros(C, dtype=np.int64)
    else:
        group = np.asarray(model.group_of_cells(boxes_lo, boxes_hi), dtype=np.int64)
    group_ids, group_first = np.unique(group, return_index=True)

    per_input = []
    pair_cost = np.empty((C, M), dtype=np.float64)
    for k in range(M):
        u = inputs.values[k]
        y = integrate_nominal(spec, centers, u)
        r1 = np.empty((C, grid.dimension), dtype=np.float64)
        for gid, first in zip(group_ids, group_first):
            sel = group == gid
            glo = boxes_lo[sel].min(axis=0)
            ghi = boxes_hi[sel].max(axis=0)
            L = model.for_box(u, glo, ghi)
            r1[sel] = _propagate_radius_matrix(L, radius, spec.w_half,
                                               spec.tau, spec.substeps)
        li, m, sink_flag, total = _kernels.successor_ranges(
            y, r1, grid.lower, grid.eta, grid.counts, grid.periodic)
        counts_k = total + sink_flag.astype(np.int64)
        if (counts_k < 1).any():
            raise AssertionError("empty successor set cannot occur for a nonempty box")
        off_k = np.zeros(C + 1, dtype=np.int64)
        np.cumsum(counts_k, out=off_k[1:])
        succ_k = np.empty(off_k[-1], dtype=np.int32)
        _kernels.fill_successors(li, m, sink_flag, grid.counts, grid.periodic,
                                 grid.strides, off_k, grid.sink, succ_k)
        per_input.append((counts_k, off_k, succ_k))
        fc = np.asarray(cost.finite_cost(boxes_lo, boxes_hi, y, r1, u), dtype=np.float64)
        pair_cost[:, k] = np.where(obstacle, np.inf, fc)

    # interleave per-input CSR blocks into (cell-major, input-minor) pair order
    all_counts = np.stack([pi[0] for pi in per_input], axis=1)  # (C, M)
    pair_counts = np.concatenate([all_counts.ravel(), np.ones(M, dtype=np.int64)])
    offsets = np.zeros(num_states * M + 1, dtype=np.int64)
    np.cumsum(pair_counts, out=offsets[1:])
    successors = np.empty(offsets[-1], dtype=np.int32)
    for k, (counts_k, off_k, succ_k) in enumerate(per_input):
        dest_start = offsets[np.arange(C, dtype=np.int64) * M + k]
        within = np.arange(succ_k.shape[0], dtype=np.int64) - np.repeat(off_k[:-1], counts_k)
        successors[np.repeat(dest_start, counts_k) + within] = succ_k
    successors[offsets[C * M]:] = grid.sink  # sink is absorbing under every input

    cost_flat = np.concatenate([pair_cost.ravel(), np.full(M, np.inf)])
    return FiniteSystem(num_states, M, offsets, successors, pair_cost=cost_flat)


# -- target / obstacle cell selection -----------------------------------------

def cells_inside_boxes(grid: UniformGrid, boxes, tol=1e-9) -> StateSet:
    """Inner approximation: cells whose closed box is contained in some box.

    ``boxes`` is a list of (lo, hi) pairs in state-space coordinates.
    """
    centers = grid.all_centers()
    r = 0.5 * grid.eta
    mask = np.zeros(grid.num_cells, dtype=bool)
    for lo, hi in boxes:
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        mask |= np.all((centers - r >= lo - tol) & (centers + r <= hi + tol), axis=1)
    full = np.zeros(grid.num_cells + 1, dtype=bool)
    full[:grid.num_cells] = mask
    return StateSet(full)


def boxes_intersection_test(boxes, tol=1e-9):
    """Vectorized predicate: does a cell box intersect any of ``boxes``?"""
    prepared = [(np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64))
                for lo, hi in boxes]

    def test(cells_lo, cells_hi):
        out = np.zeros(cells_lo.shape[0], dtype=bool)
        for lo, hi in prepared:
            out |= np.all((cells_hi >= lo + tol) & (cells_lo <= hi - tol), axis=1)
        return out

    return test


# -- binary cache -------------------------------------------------------------

def save_abstraction(path, grid: UniformGrid, inputs: InputSample, system: FiniteSystem):
    """Write the abstraction cache (magic DTSPABS1, little-endian)."""
    with open(path, "wb") as fh:
        fh.write(ABSTRACTION_MAGIC)
        n = grid.dimension
        fh.write(struct.pack("<q", n))
        fh.write(grid.lower.astype("<f8").tobytes())
        fh.write(grid.eta.astype("<f8").tobytes())
        fh.write(grid.counts.astype("<i8").tobytes())
        fh.write(grid.periodic.astype(np.uint8).tobytes())
        M, m = inputs.values.shape
        fh.write(struct.pack("<qq", M, m))
        fh.write(inputs.values.astype("<f8").tobytes())
        fh.write(struct.pack("<qq", system.num_states, system.successors_flat.shape[0]))
        fh.write(system.offsets.astype("<i8").tobytes())
        fh.write(system.successors_flat.astype("<i8").tobytes())
        has_pair = system.pair_cost is not None
        fh.write(struct.pack("<B", 1 if has_pair else 0))
        cost = system.pair_cost if has_pair else system.edge_costs()
        fh.write(cost.astype("<f8").tobytes())


def load_abstraction(path):
    """Read a cache written by save_abstraction; returns (grid, inputs, system)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != ABSTRACTION_MAGIC:
            raise ParseError(f"bad magic {magic!r} in abstraction cache {path}")
        (n,) = struct.unpack("<q", fh.read(8))
        lower = np.frombuffer(fh.read(8 * n), dtype="<f8")
        eta = np.frombuffer(fh.read(8 * n), dtype="<f8")
        counts = np.frombuffer(fh.read(8 * n), dtype="<i8")
        periodic = np.frombuffer(fh.read(n), dtype=np.uint8).astype(bool)
        grid = UniformGrid(lower, eta, counts, periodic)
        M, m = struct.unpack("<qq", fh.read(16))
        values = np.frombuffer(fh.read(8 * M * m), dtype="<f8").reshape(M, m)
        inputs = InputSample(values)
        S, E = struct.unpack("<qq", fh.read(16))
        offsets = np.frombuffer(fh.read(8 * (S * M + 1)), dtype="<i8")
        succ = np.frombuffer(fh.read(8 * E), dtype="<i8")
        (has_pair,) = struct.unpack("<B", fh.read(1))
        count = S * M if has_pair else E
        cost = np.frombuffer(fh.read(8 * count), dtype="<f8")
        if has_pair:
            system = FiniteSystem(S, M, offsets, succ, pair_cost=cost)
        else:
            system = FiniteSystem(S, M, offsets, succ, edge_cost=cost)
    return grid, inputs, system
