"""Worst-case reach-avoid values and controllers on hand-checked systems."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyntsp import (FiniteSystem, ReachAvoidProblem, StateSet, UsageError,
                    bellman_backup, policy_performance, restrict_infinite, solve)


def chain(costs=1.0):
    transitions = {(0, 0): [1], (1, 0): [2], (2, 0): [2]}
    return FiniteSystem.from_transitions(3, 1, transitions, costs)


def test_chain_values_and_controller():
    sys_ = chain()
    problem = ReachAvoidProblem.with_zero_terminal(sys_, StateSet.from_indices(3, [2]))
    V, mu = solve(problem)
    assert V.tolist() == [2.0, 1.0, 0.0]
    assert not mu.lookup(0)[1] and not mu.lookup(1)[1]
    assert mu.lookup(2) == (0, True)  # stop at the target


def test_terminal_cost_vs_self_loop():
    # target state with a unit-cost self-loop and terminal cost 5:
    # waiting never helps, V = 5 and the controller stops immediately
    sys_ = chain()
    target = StateSet.from_indices(3, [2])
    terminal = np.array([np.inf, np.inf, 5.0])
    V, mu = solve(ReachAvoidProblem(sys_, target, terminal))
    assert V[2] == pytest.approx(5.0)
    assert V[0] == pytest.approx(7.0)
    assert mu.lookup(2) == (0, True)


def test_unreachable_states_are_infinite():
    # state 2 is absorbing, so nothing reaches target {0}
    sys_ = chain()
    V, mu = solve(ReachAvoidProblem.with_zero_terminal(sys_, StateSet.from_indices(3, [0])))
    assert V[0] == 0.0
    assert np.isinf(V[1]) and np.isinf(V[2])
    losing = restrict_infinite(V)
    assert losing.indices().tolist() == [1, 2]
    with pytest.raises(Exception):
        mu.lookup(1)


def test_controller_picks_cheaper_input():
    transitions = {(0, 0): [1], (0, 1): [1], (1, 0): [1], (1, 1): [1]}
    costs = {(0, 0): 10.0, (0, 1): 1.0, (1, 0): 1.0, (1, 1): 1.0}
    sys_ = FiniteSystem.from_transitions(2, 2, transitions, costs)
    V, mu = solve(ReachAvoidProblem.with_zero_terminal(sys_, StateSet.from_indices(2, [1])))
    assert V[0] == pytest.approx(1.0)
    assert mu.lookup(0) == (1, False)


def test_worst_case_maximizes_over_successors():
    # nondeterministic step to {1, 2} with V(1) = 1, V(2) = 3: pair value 1 + 3
    transitions = {(0, 0): [1, 2], (1, 0): [3], (2, 0): [3], (3, 0): [3]}
    costs = {(0, 0): 1.0, (1, 0): 1.0, (2, 0): 3.0, (3, 0): 1.0}
    sys_ = FiniteSystem.from_transitions(4, 1, transitions, costs)
    V, _ = solve(ReachAvoidProblem.with_zero_terminal(sys_, StateSet.from_indices(4, [3])))
    assert V[2] == pytest.approx(3.0)
    assert V[1] == pytest.approx(1.0)
    assert V[0] == pytest.approx(1.0 + 3.0)


def test_label_setting_requires_positive_costs():
    sys_ = chain(costs=0.0)
    problem = ReachAvoidProblem.with_zero_terminal(sys_, StateSet.from_indices(3, [2]))
    with pytest.raises(UsageError):
        solve(problem, method="label-setting")
    V, _ = solve(problem)  # auto falls back to value iteration
    assert V.tolist() == [0.0, 0.0, 0.0]


def test_solution_is_bellman_fixed_point():
    sys_ = chain()
    problem = ReachAvoidProblem.with_zero_terminal(sys_, StateSet.from_indices(3, [2]))
    V, _ = solve(problem)
    assert np.array_equal(bellman_backup(problem, V), V)


def test_policy_performance_of_optimal_controller_matches_value():
    sys_ = chain()
    problem = ReachAvoidProblem.with_zero_terminal(sys_, StateSet.from_indices(3, [2]))
    V, mu = solve(problem)
    L = policy_performance(sys_, mu, problem.terminal)
    assert np.allclose(L, V)


def test_terminal_validation():
    sys_ = chain()
    target = StateSet.from_indices(3, [2])
    with pytest.raises(UsageError):
        ReachAvoidProblem(sys_, target, np.array([1.0, np.inf, 0.0]))  # finite off-target
    with pytest.raises(UsageError):
        ReachAvoidProblem(sys_, target, np.array([np.inf, np.inf, -1.0]))
    with pytest.raises(UsageError):
        ReachAvoidProblem.with_zero_terminal(sys_, StateSet.empty(3))


def _random_system(rng, n, m):
    transitions = {}
    costs = {}
    for x in range(n):
        for u in range(m):
            k = int(rng.integers(1, 4))
            transitions[(x, u)] = list(rng.choice(n, size=k, replace=False))
            costs[(x, u)] = float(rng.uniform(0.1, 5.0))
    return FiniteSystem.from_transitions(n, m, transitions, costs)


def _brute_force_fixed_point(system, terminal, sweeps=10000, tol=1e-12):
    """Independent oracle: plain Jacobi iteration from above, no heaps."""
    S, M = system.num_states, system.num_inputs
    V = terminal.copy()
    for _ in range(sweeps):
        new = terminal.copy()
        for x in range(S):
            for u in range(M):
                q = -np.inf
                for y in system.successors(x, u):
                    q = max(q, system.step_cost(x, int(y), u) + V[int(y)])
                new[x] = min(new[x], q)
        with np.errstate(invalid="ignore"):
            if np.nanmax(np.where(np.isinf(new) & np.isinf(V), 0.0, np.abs(new - V)),
                         initial=0.0) <= tol:
                return new
        V = new
    return V


@settings(deadline=None, max_examples=15)
@given(st.integers(0, 10_000))
def test_solver_matches_jacobi_oracle(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(3, 15)), int(rng.integers(1, 4))
    sys_ = _random_system(rng, n, m)
    target = StateSet.from_indices(n, rng.choice(n, size=max(1, n // 4), replace=False))
    problem = ReachAvoidProblem.with_zero_terminal(sys_, target)
    V, _ = solve(problem)
    oracle = _brute_force_fixed_point(sys_, problem.terminal)
    both_inf = np.isinf(V) & np.isinf(oracle)
    assert np.allclose(V[~both_inf], oracle[~both_inf], atol=1e-9)


def test_monotone_in_terminal_cost():
    sys_ = chain()
    target = StateSet.from_indices(3, [2])
    lo, _ = solve(ReachAvoidProblem(sys_, target, np.array([np.inf, np.inf, 1.0])))
    hi, _ = solve(ReachAvoidProblem(sys_, target, np.array([np.inf, np.inf, 4.0])))
    assert (hi >= lo).all()
