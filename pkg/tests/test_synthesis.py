"""Target shrinking, cost matrices, chained controllers and switching logic."""

import numpy as np
import pytest

from dyntsp import (FiniteSystem, RuntimeFault, StateSet, SwitchingState,
                    UnsolvableError, UsageError, adversarial_rollout,
                    build_cost_matrix, chained_worst_case_bound, load_result,
                    save_result, shrink_fixed_point, switching_step,
                    synthesize, synthesize_for_tour)


def ring(n=6, cost=1.0):
    """Unidirectional ring 0 -> 1 -> ... -> n-1 -> 0 plus a wait input."""
    transitions = {}
    for x in range(n):
        transitions[(x, 0)] = [(x + 1) % n]
        transitions[(x, 1)] = [x]
    return FiniteSystem.from_transitions(n, 2, transitions, cost)


def test_shrink_keeps_mutually_reachable_singletons():
    sys_ = ring()
    targets = [StateSet.from_indices(6, [0]), StateSet.from_indices(6, [2]),
               StateSet.from_indices(6, [4])]
    shrunk, values = shrink_fixed_point(sys_, targets)
    for t, s in zip(targets, shrunk):
        assert s == t
    assert values[1][0] == pytest.approx(2.0)  # 0 -> 2 along the ring
    assert values[0][4] == pytest.approx(2.0)


def test_shrink_removes_stranded_cells():
    # 0 <-> 1 cycle, 2 absorbing; target B = {1, 2} must drop cell 2
    # because target A = {0} is unreachable from there
    transitions = {(0, 0): [1], (1, 0): [0], (2, 0): [2], (3, 0): [0], (4, 0): [4]}
    sys_ = FiniteSystem.from_transitions(5, 1, transitions, 1.0)
    targets = [StateSet.from_indices(5, [0]), StateSet.from_indices(5, [1, 2])]
    shrunk, _ = shrink_fixed_point(sys_, targets)
    assert shrunk[0].indices().tolist() == [0]
    assert shrunk[1].indices().tolist() == [1]  # absorbing 2 cannot return


def test_shrink_unsolvable_when_target_empties():
    # target 2 = {2} is absorbing and cannot reach target 1
    transitions = {(0, 0): [1], (1, 0): [0], (2, 0): [2]}
    sys_ = FiniteSystem.from_transitions(3, 1, transitions, 1.0)
    targets = [StateSet.from_indices(3, [0]), StateSet.from_indices(3, [2])]
    with pytest.raises(UnsolvableError):
        shrink_fixed_point(sys_, targets)


def test_shrink_needs_two_targets():
    sys_ = ring()
    with pytest.raises(UsageError):
        shrink_fixed_point(sys_, [StateSet.from_indices(6, [0])])


def test_cost_matrix_on_ring():
    sys_ = ring()
    targets = [StateSet.from_indices(6, [0]), StateSet.from_indices(6, [2]),
               StateSet.from_indices(6, [4])]
    shrunk, values = shrink_fixed_point(sys_, targets)
    C = build_cost_matrix(shrunk, values)
    assert np.allclose(np.diag(C), 0.0)
    assert C[0, 1] == pytest.approx(2.0)   # 0 -> 2
    assert C[1, 0] == pytest.approx(4.0)   # 2 -> 0 the long way round
    assert C[1, 2] == pytest.approx(2.0)


def test_cost_matrix_shrinks_monotonically():
    # restricting A'_i can only increase the best-entry cost min
    sys_ = ring()
    targets = [StateSet.from_indices(6, [0, 1]), StateSet.from_indices(6, [3])]
    shrunk, values = shrink_fixed_point(sys_, targets)
    C_full = build_cost_matrix(shrunk, values)
    C_sub = build_cost_matrix([StateSet.from_indices(6, [0]), shrunk[1]], values)
    assert (C_sub + 1e-12 >= C_full).all()


def test_synthesize_ring_tour_and_values():
    sys_ = ring()
    targets = [StateSet.from_indices(6, [0]), StateSet.from_indices(6, [2]),
               StateSet.from_indices(6, [4])]
    result = synthesize(sys_, targets, tsp_backend="exact")
    assert result.tour == (1, 2, 3, 1)  # following the ring is optimal
    # position-2 value at the depot = leg to stop 2 plus stop 2's value of
    # the next stop: 2 + 2
    assert result.value_for_stage(2)[0] == pytest.approx(4.0)
    # return-leg controller is the position-1 controller
    assert result.controller_for_stage(4) is result.controllers[0]


def test_naive_chaining_values_are_per_leg():
    sys_ = ring()
    targets = [StateSet.from_indices(6, [0]), StateSet.from_indices(6, [2]),
               StateSet.from_indices(6, [4])]
    chained = synthesize(sys_, targets, tsp_backend="exact", naive=False)
    naive = synthesize(sys_, targets, tsp_backend="exact", naive=True)
    assert naive.naive and not chained.naive
    assert naive.value_for_stage(2)[0] == pytest.approx(2.0)   # just this leg
    assert chained.value_for_stage(2)[0] == pytest.approx(4.0)  # + next leg's value


def test_switching_walkthrough_on_ring():
    sys_ = ring()
    targets = [StateSet.from_indices(6, [0]), StateSet.from_indices(6, [2]),
               StateSet.from_indices(6, [4])]
    result = synthesize(sys_, targets, tsp_backend="exact")
    state = SwitchingState()
    cell = 0
    seen = []
    for _ in range(20):
        u, v, state = switching_step(result, state, cell)
        seen.append((cell, state.stage))
        if v:
            break
        cell = int(sys_.successors(cell, u)[0])
    assert state.complete
    # the stage advances within the call that reaches each stop
    assert (2, 3) in seen and (4, 4) in seen
    assert seen[-1] == (0, 4)
    with pytest.raises(UsageError):
        switching_step(result, state, 0)


def test_switching_faults_outside_winning_domain():
    transitions = {(0, 0): [1], (1, 0): [0], (2, 0): [2]}
    sys_ = FiniteSystem.from_transitions(3, 1, transitions, 1.0)
    targets = [StateSet.from_indices(3, [0]), StateSet.from_indices(3, [1])]
    result = synthesize(sys_, targets, tsp_backend="exact")
    with pytest.raises(RuntimeFault):
        switching_step(result, SwitchingState(), 2)


def test_adversarial_rollout_covers_and_matches_bound():
    sys_ = ring()
    targets = [StateSet.from_indices(6, [0]), StateSet.from_indices(6, [2]),
               StateSet.from_indices(6, [4])]
    result = synthesize(sys_, targets, tsp_backend="exact")
    roll = adversarial_rollout(result, sys_, 0)
    assert roll["terminated"]
    assert roll["visited"].all()
    bound = chained_worst_case_bound(result, sys_)
    assert roll["cost"] <= bound[0] + 1e-9
    assert bound[0] == pytest.approx(6.0)


def test_result_save_load_roundtrip(tmp_path):
    sys_ = ring()
    targets = [StateSet.from_indices(6, [0]), StateSet.from_indices(6, [2]),
               StateSet.from_indices(6, [4])]
    result = synthesize(sys_, targets, tsp_backend="exact", grid_hash=b"12345678")
    p1, p2 = tmp_path / "a.ctrl", tmp_path / "b.ctrl"
    save_result(result, p1)
    save_result(result, p2)
    assert p1.read_bytes() == p2.read_bytes()
    back = load_result(p1)
    assert back.tour == result.tour
    assert back.grid_hash == b"12345678"
    assert back.naive == result.naive
    for a, b in zip(back.shrunk, result.shrunk):
        assert a == b
    for a, b in zip(back.controllers, result.controllers):
        assert np.array_equal(a.input_index[b.defined], b.input_index[b.defined])
        assert np.array_equal(a.stop, b.stop)
        assert np.array_equal(a.defined, b.defined)
    for a, b in zip(back.controller_values, result.controller_values):
        assert np.array_equal(a, b)
    assert np.array_equal(back.cost_matrix, result.cost_matrix)


def test_synthesize_for_tour_rejects_bad_tour():
    sys_ = ring()
    targets = [StateSet.from_indices(6, [0]), StateSet.from_indices(6, [2])]
    shrunk, values = shrink_fixed_point(sys_, targets)
    C = build_cost_matrix(shrunk, values)
    with pytest.raises(UsageError):
        synthesize_for_tour(sys_, shrunk, values, C, (1, 1, 2))
