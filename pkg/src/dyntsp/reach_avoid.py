"""Quantitative reach-avoid solver on finite systems.

Computes the worst-case optimal cost-to-go

    V(x) = min{ stop(x), min_u max_{y in F(x,u)} [ g(x,y,u) + V(y) ] }

with stop(x) equal to the terminal cost on the target set and +inf elsewhere,
together with a memoryless controller (input choice plus stop flag) achieving
it.  When every finite step cost is strictly positive a Dijkstra-style
label-setting pass is used; otherwise the solver falls back to Gauss-Seidel
value iteration from above.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import RuntimeFault, UsageError
from .finite_system import FiniteSystem, StateSet

FIXED_POINT_TOL = 1e-9
VI_TOL = 1e-12

_NO_COST = np.empty(0, dtype=np.float64)


def _cost_views(system):
    """(pair_cost, edge_cost, per_edge) triple for the numba kernels.

    Pair-cost systems never materialize the expanded per-edge cost array,
    which would dominate memory on large grid abstractions.
    """
    if system.pair_cost is not None:
        return system.pair_cost, _NO_COST, False
    return _NO_COST, system.edge_costs(), True


@dataclass
class ReachAvoidProblem:
    """Target set A plus terminal cost G0 (defined on A, +inf elsewhere)."""

    system: FiniteSystem
    target: StateSet
    terminal: np.ndarray

    def __post_init__(self):
        self.terminal = np.ascontiguousarray(self.terminal, dtype=np.float64)
        S = self.system.num_states
        if self.target.num_states != S or self.terminal.shape != (S,):
            raise UsageError("target / terminal size does not match the system")
        if self.target.is_empty():
            raise UsageError("target set must be nonempty")
        if np.isfinite(self.terminal[~self.target.mask]).any():
            raise UsageError("terminal cost must be +inf outside the target set")
        if not np.isfinite(self.terminal[self.target.mask]).any():
            raise UsageError("terminal cost must be finite on at least one target state")
        if (self.terminal < 0).any():
            raise UsageError("terminal cost must be nonnegative")

    @classmethod
    def with_zero_terminal(cls, system, target):
        terminal = np.full(system.num_states, np.inf)
        terminal[target.mask] = 0.0
        return cls(system, target, terminal)


@dataclass
class MemorylessController:
    """Per-state input choice and stop flag; defined wherever V is finite."""

    input_index: np.ndarray  # int64, arbitrary default where undefined
    stop: np.ndarray         # bool
    defined: np.ndarray      # bool

    def lookup(self, x):
        """(input index, stop flag) at state x; fault where undefined."""
        if not self.defined[x]:
            raise RuntimeFault(f"controller undefined at state {x} (outside winning domain)",
                               cell=int(x))
        return int(self.input_index[x]), bool(self.stop[x])

    @property
    def num_states(self):
        return self.input_index.shape[0]


def bellman_backup(problem: ReachAvoidProblem, V):
    """One Jacobi sweep of the worst-case Bellman operator."""
    sys_ = problem.system
    V = np.ascontiguousarray(V, dtype=np.float64)
    if V.shape != (sys_.num_states,):
        raise UsageError("value function has wrong length")
    pcost, ecost, per_edge = _cost_views(sys_)
    q = _kernels.pair_values(sys_.offsets, sys_.successors_flat, pcost, ecost, per_edge, V)
    qmin = q.reshape(sys_.num_states, sys_.num_inputs).min(axis=1)
    return np.minimum(problem.terminal, qmin)


def restrict_infinite(V) -> StateSet:
    """States where the value function is infinite (the losing domain)."""
    return StateSet(np.isinf(np.asarray(V)))


def _extract_controller(problem, V):
    sys_ = problem.system
    pcost, ecost, per_edge = _cost_views(sys_)
    q = _kernels.pair_values(sys_.offsets, sys_.successors_flat, pcost, ecost, per_edge, V)
    q = q.reshape(sys_.num_states, sys_.num_inputs)
    qmin = q.min(axis=1)
    best_u = np.argmin(q, axis=1).astype(np.int64)  # ties: lowest input index
    # stopping wins ties so closed loops terminate
    stop = problem.target.mask & (problem.terminal <= qmin + FIXED_POINT_TOL)
    defined = np.isfinite(V)
    stop &= defined
    return MemorylessController(np.where(defined & ~stop, best_u, 0).astype(np.int64),
                                stop, defined)


def solve(problem: ReachAvoidProblem, method="auto"):
    """Least fixed point of the Bellman backup plus an optimal controller.

    method: "auto" | "label-setting" | "value-iteration".
    """
    sys_ = problem.system
    pcost, ecost, per_edge = _cost_views(sys_)
    cost = ecost if per_edge else pcost
    finite = cost[np.isfinite(cost)]
    positive = finite.size == 0 or finite.min() > 0.0
    if method == "auto":
        method = "label-setting" if positive else "value-iteration"
    if method == "label-setting":
        if not positive:
            raise UsageError("label-setting requires strictly positive finite step costs")
        rev_off, rev_pair, rev_edge = sys_.reverse_adjacency()
        V = _kernels.minimax_dijkstra(sys_.num_states, sys_.num_inputs,
                                      sys_.offsets, sys_.successors_flat,
                                      pcost, ecost, per_edge,
                                      rev_off, rev_pair, rev_edge, problem.terminal)
    elif method == "value-iteration":
        max_sweeps = 10 * sys_.num_states + 1000
        V = _kernels.gauss_seidel_vi(sys_.num_states, sys_.num_inputs,
                                     sys_.offsets, sys_.successors_flat,
                                     pcost, ecost, per_edge,
                                     problem.terminal, VI_TOL, max_sweeps)
    else:
        raise UsageError(f"unknown solve method {method!r}")

    residual = bellman_backup(problem, V)
    with np.errstate(invalid="ignore"):
        drift = np.abs(residual - V)
    drift[np.isinf(residual) & np.isinf(V)] = 0.0
    if np.nanmax(drift, initial=0.0) > FIXED_POINT_TOL:
        raise RuntimeError(f"solver left a Bellman residual of {np.nanmax(drift):.3e}")
    return V, _extract_controller(problem, V)


def policy_performance(system: FiniteSystem, controller: MemorylessController,
                       terminal, max_sweeps=None):
    """Worst-case closed-loop cost of a fixed controller.

    At stop states the cost is ``terminal``; elsewhere the adversary picks the
    successor maximizing (step cost + remaining cost).  Used for the chained
    worst-case bounds checked against simulation.
    """
    terminal = np.ascontiguousarray(terminal, dtype=np.float64)
    policy = np.where(controller.defined, controller.input_index, -1).astype(np.int64)
    if max_sweeps is None:
        max_sweeps = 10 * system.num_states + 1000
    pcost, ecost, per_edge = _cost_views(system)
    return _kernels.policy_eval(system.num_states, system.num_inputs,
                                system.offsets, system.successors_flat,
                                pcost, ecost, per_edge, policy,
                                controller.stop & controller.defined,
                                terminal, VI_TOL, max_sweeps)
