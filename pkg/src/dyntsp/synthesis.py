"""Coverage-controller synthesis: target shrinking, tour, chained controllers.

The pipeline fixes mutually reachable subsets A'_1..A'_N of the targets,
estimates the travel cost between them from the reach-avoid value functions,
solves the resulting classical ATSP and finally computes one controller per
tour position whose terminal cost is the value function of the next stop, so
that each leg already accounts for the leg after it.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .atsp import ATSPInstance, solve_exact, solve_heuristic, validate_tour
from .errors import RuntimeFault, UnsolvableError, UsageError
from .finite_system import FiniteSystem, StateSet
from .reach_avoid import (MemorylessController, ReachAvoidProblem,
                          policy_performance, restrict_infinite, solve)

RESULT_MAGIC = b"DTSPCTRL"
RESULT_VERSION = 1


def shrink_fixed_point(system: FiniteSystem, targets):
    """Greatest family A'_1..A'_N with every V_i finite on every A'_j.

    FIFO fixed-point iteration: whenever the value function of target i is
    infinite somewhere on another target j, those states are removed from
    A'_j and j is requeued.  Returns (shrunk sets, value functions).
    """
    n = len(targets)
    if n < 2:
        raise UsageError("need at least two target sets (depot + one target)")
    shrunk = [t.copy() for t in targets]
    for i, t in enumerate(shrunk):
        if t.is_empty():
            raise UnsolvableError(f"target {i + 1} maps to no grid cell")
    values = [None] * n
    queue = deque(range(n))
    queued = [True] * n
    while queue:
        i = queue.popleft()
        queued[i] = False
        problem = ReachAvoidProblem.with_zero_terminal(system, shrunk[i])
        values[i], _ = solve(problem)
        losing = restrict_infinite(values[i])
        for j in range(n):
            if j == i:
                continue
            reduced = shrunk[j].difference(losing)
            if reduced.is_empty():
                raise UnsolvableError(
                    f"target {j + 1} cannot be reached from anywhere in target {i + 1}",
                    emptied_by=(i + 1, j + 1))
            if len(reduced) != len(shrunk[j]):
                shrunk[j] = reduced
                if not queued[j]:
                    queue.append(j)
                    queued[j] = True
    return shrunk, values


def build_cost_matrix(shrunk, value_functions):
    """C[i, j] = min over cells p of A'_i of V_j(p); optimistic travel cost."""
    n = len(shrunk)
    C = np.zeros((n, n))
    for i in range(n):
        idx = shrunk[i].indices()
        for j in range(n):
            if i == j:
                continue
            C[i, j] = value_functions[j][idx].min()
    if not np.isfinite(C).all():
        raise AssertionError("infinite entry in cost matrix after fixed point")
    return C


@dataclass
class SynthesisResult:
    """Everything the runtime switching controller needs."""

    num_states: int
    num_inputs: int
    shrunk: list                 # StateSet per target, order 1..N
    tour: tuple                  # (1, t2, ..., tN, 1)
    controllers: list            # MemorylessController per tour position 1..N
    value_functions: list        # V_i per target (zero-terminal reach values)
    controller_values: list      # chained value per tour position
    cost_matrix: np.ndarray
    naive: bool = False
    grid_hash: bytes = b"\x00" * 8

    @property
    def n_targets(self):
        return len(self.shrunk)

    def controller_for_stage(self, stage):
        """Stage k in [1; N] uses the position-k controller; the return leg
        (stage N+1) reuses position 1, whose target is the depot."""
        n = self.n_targets
        if not 1 <= stage <= n + 1:
            raise UsageError(f"stage {stage} out of range")
        return self.controllers[0 if stage == n + 1 else stage - 1]

    def value_for_stage(self, stage):
        n = self.n_targets
        return self.controller_values[0 if stage == n + 1 else stage - 1]


@dataclass(frozen=True)
class SwitchingState:
    """Runtime memory of the switching controller (Fig-style global stage)."""

    stage: int = 1
    complete: bool = False


def synthesize(system: FiniteSystem, targets, tsp_backend="exact",
               naive=False, seed=0, grid_hash=b"\x00" * 8,
               external_solver=None) -> SynthesisResult:
    """Full synthesis: shrink, cost matrix, tour, chained controllers."""
    shrunk, values = shrink_fixed_point(system, targets)
    n = len(shrunk)
    C = build_cost_matrix(shrunk, values)
    inst = ATSPInstance(C)
    if tsp_backend == "exact":
        tour = solve_exact(inst)
    elif tsp_backend == "heuristic":
        tour = solve_heuristic(inst, seed=seed)
    elif tsp_backend.startswith("external:"):
        from .external import solve_external
        tour = solve_external(inst, tsp_backend.split(":", 1)[1])
    else:
        raise UsageError(f"unknown tsp backend {tsp_backend!r}")
    return synthesize_for_tour(system, shrunk, values, C, tour,
                               naive=naive, grid_hash=grid_hash)


def synthesize_for_tour(system, shrunk, values, cost_matrix, tour,
                        naive=False, grid_hash=b"\x00" * 8) -> SynthesisResult:
    """Chained controllers for a fixed tour (used for tour sweeps as well)."""
    n = len(shrunk)
    tour = validate_tour(n, tour)
    controllers = []
    controller_values = []
    for pos in range(1, n + 1):
        target = shrunk[tour[pos - 1] - 1]
        if naive:
            problem = ReachAvoidProblem.with_zero_terminal(system, target)
        else:
            v_next = values[tour[pos] - 1]
            terminal = np.where(target.mask, v_next, np.inf)
            problem = ReachAvoidProblem(system, target, terminal)
        V, mu = solve(problem)
        controllers.append(mu)
        controller_values.append(V)
    return SynthesisResult(system.num_states, system.num_inputs, shrunk, tour,
                           controllers, values, controller_values,
                           np.asarray(cost_matrix, dtype=np.float64),
                           naive=naive, grid_hash=grid_hash)


def switching_step(result: SynthesisResult, state: SwitchingState, cell):
    """One evaluation of the switching controller at an abstract cell.

    Returns (input index, overall stop flag v, new switching state).  The
    stage advances at most once per call; the overall stopping signal fires
    when the return-leg controller stops at the depot.
    """
    if state.complete:
        raise UsageError("switching controller already completed")
    n = result.n_targets
    stage = state.stage
    try:
        u, stop = result.controller_for_stage(stage).lookup(cell)
        if stop and stage <= n:
            stage += 1
            u, stop = result.controller_for_stage(stage).lookup(cell)
    except RuntimeFault as fault:
        raise RuntimeFault(f"left the winning domain at stage {stage}, cell {cell}",
                           stage=stage, cell=int(cell)) from None
    complete = bool(stop and stage == n + 1)
    return u, (1 if complete else 0), SwitchingState(stage, complete)


# -- worst-case analysis on the abstraction -----------------------------------

def adversarial_rollout(result: SynthesisResult, system: FiniteSystem, start_cell,
                        max_steps=100000):
    """Closed-loop run on the abstract system with an adversarial environment.

    The adversary always picks the successor with the largest remaining value
    of the active stage (ties: lowest index).  Returns a dict with the visited
    cells, per-target visit flags, termination flag and accumulated cost.
    """
    n = result.n_targets
    state = SwitchingState()
    cell = int(start_cell)
    cells = [cell]
    visited = np.zeros(n, dtype=bool)
    cost = 0.0
    terminated = False
    for _ in range(max_steps):
        for i in range(n):
            visited[i] |= result.shrunk[i].contains(cell)
        u, v, state = switching_step(result, state, cell)
        if v:
            terminated = True
            break
        succ = system.successors(cell, u)
        V = result.value_for_stage(state.stage)
        nxt = int(succ[np.argmax(V[succ])])
        cost += system.step_cost(cell, nxt, u)
        cell = nxt
        cells.append(cell)
    return {"cells": cells, "visited": visited, "terminated": terminated,
            "cost": cost, "final_cell": cell}


def chained_worst_case_bound(result: SynthesisResult, system: FiniteSystem):
    """Per-state upper bound on the total closed-loop cost from stage 1.

    Backward policy evaluation through the stage chain: the return leg ends
    with terminal cost 0, every earlier stage ends in the bound of the next.
    """
    n = result.n_targets
    bound = np.zeros(system.num_states)
    for stage in range(n + 1, 0, -1):
        mu = result.controller_for_stage(stage)
        terminal = np.where(mu.stop, 0.0 if stage == n + 1 else bound, np.inf)
        bound = policy_performance(system, mu, terminal)
    return bound


# -- persistence --------------------------------------------------------------

def _pack_bits(mask):
    return np.packbits(mask.astype(np.uint8), bitorder="little").tobytes()


def _unpack_bits(buf, n):
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8), bitorder="little")
    return bits[:n].astype(bool)


def save_result(result: SynthesisResult, path):
    """Binary persistence (magic DTSPCTRL); deterministic byte-for-byte."""
    S = result.num_states
    n = result.n_targets
    with open(path, "wb") as fh:
        fh.write(RESULT_MAGIC)
        fh.write(struct.pack("<I", RESULT_VERSION))
        fh.write(result.grid_hash)
        fh.write(struct.pack("<QQQB", S, result.num_inputs, n, 1 if result.naive else 0))
        fh.write(np.asarray(result.tour, dtype="<i8").tobytes())
        for t in result.shrunk:
            fh.write(_pack_bits(t.mask))
        for mu in result.controllers:
            fh.write(mu.input_index.astype("<u2").tobytes())
            flags = mu.stop.astype(np.uint8) | (mu.defined.astype(np.uint8) << 1)
            fh.write(flags.tobytes())
        fh.write(struct.pack("<B", 1))  # value functions present
        for V in result.value_functions:
            fh.write(np.asarray(V, dtype="<f8").tobytes())
        for V in result.controller_values:
            fh.write(np.asarray(V, dtype="<f8").tobytes())
        fh.write(result.cost_matrix.astype("<f8").tobytes())


def load_result(path) -> SynthesisResult:
    with open(path, "rb") as fh:
        if fh.read(8) != RESULT_MAGIC:
            raise UsageError(f"{path} is not a synthesis-result file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != RESULT_VERSION:
            raise UsageError(f"unsupported result version {version}")
        grid_hash = fh.read(8)
        S, M, n, naive = struct.unpack("<QQQB", fh.read(25))
        tour = tuple(int(t) for t in np.frombuffer(fh.read(8 * (n + 1)), dtype="<i8"))
        nbytes = (S + 7) // 8
        shrunk = [StateSet(_unpack_bits(fh.read(nbytes), S)) for _ in range(n)]
        controllers = []
        for _ in range(n):
            inputs = np.frombuffer(fh.read(2 * S), dtype="<u2").astype(np.int64)
            flags = np.frombuffer(fh.read(S), dtype=np.uint8)
            controllers.append(MemorylessController(inputs, (flags & 1).astype(bool),
                                                    ((flags >> 1) & 1).astype(bool)))
        (has_vf,) = struct.unpack("<B", fh.read(1))
        values = []
        controller_values = []
        if has_vf:
            values = [np.frombuffer(fh.read(8 * S), dtype="<f8").copy() for _ in range(n)]
            controller_values = [np.frombuffer(fh.read(8 * S), dtype="<f8").copy()
                                 for _ in range(n)]
        C = np.frombuffer(fh.read(8 * n * n), dtype="<f8").reshape(n, n).copy()
    return SynthesisResult(S, M, shrunk, tour, controllers, values,
                           controller_values, C, naive=bool(naive), grid_hash=grid_hash)
