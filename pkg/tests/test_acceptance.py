"""Acceptance suite: one test per release criterion, one printed verdict each.

Criteria 1-3 run on seeded random instances against independent brute-force
oracles; 4-9 run on the shipped uav-mini / truck-mini scenarios (the
session-scoped fixtures in conftest.py share the expensive abstraction and
synthesis work).
"""

import itertools
import time

import numpy as np

from dyntsp import (ATSPInstance, DisturbanceSignal, FiniteSystem,
                    ReachAvoidProblem, StateSet, TrajectoryRecord,
                    check_condition_star, disturbance_vertices,
                    evaluate_total_cost, integrate_nominal, simulate_closed_loop,
                    solve, solve_exact, solve_heuristic, tour_cost)
from dyntsp.synthesis import save_result, synthesize, synthesize_for_tour


# -- criterion 1: reach-avoid solver equivalence -------------------------------

def _random_finite_system(rng):
    n = int(rng.integers(5, 201))
    m = int(rng.integers(1, 6))
    transitions = {}
    costs = {}
    for x in range(n):
        for u in range(m):
            k = int(rng.integers(1, 5))
            transitions[(x, u)] = list(rng.choice(n, size=k, replace=False))
            costs[(x, u)] = float(rng.uniform(1e-6, 10.0))
    return FiniteSystem.from_transitions(n, m, transitions, costs)


def test_criterion_1_reach_avoid_equivalence(verdict):
    t0 = time.time()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        sys_ = _random_finite_system(rng)
        n = sys_.num_states
        target = StateSet.from_indices(
            n, rng.choice(n, size=max(1, n // 5), replace=False))
        problem = ReachAvoidProblem.with_zero_terminal(sys_, target)
        V_ls, _ = solve(problem, method="label-setting")
        V_vi, _ = solve(problem, method="value-iteration")
        both_inf = np.isinf(V_ls) & np.isinf(V_vi)
        with np.errstate(invalid="ignore"):
            diff = np.abs(V_ls - V_vi)
        diff[both_inf] = 0.0
        assert not (np.isinf(V_ls) ^ np.isinf(V_vi)).any()
        worst = max(worst, float(np.nanmax(diff, initial=0.0)))
    elapsed = time.time() - t0
    ok = worst <= 1e-9 and elapsed < 10.0
    verdict(1, ok, f"100 systems, max |V_ls - V_vi| = {worst:.2e}, {elapsed:.1f} s")


# -- criterion 2: exact ATSP vs enumeration ------------------------------------

def test_criterion_2_held_karp_vs_enumeration(verdict):
    t0 = time.time()
    for seed in range(50):
        rng = np.random.default_rng(2000 + seed)
        n = int(rng.integers(4, 9))
        C = rng.uniform(0.0, 100.0, size=(n, n))
        np.fill_diagonal(C, 0.0)
        inst = ATSPInstance(C)
        hk = tour_cost(inst, solve_exact(inst))
        brute = min(tour_cost(inst, (1, *perm, 1))
                    for perm in itertools.permutations(range(2, n + 1)))
        assert hk == brute, f"seed {seed}: {hk} != {brute}"
    elapsed = time.time() - t0
    ok = elapsed < 5.0
    verdict(2, ok, f"50 instances N in 4..8 match enumeration, {elapsed:.1f} s")


# -- criterion 3: heuristic quality --------------------------------------------

def test_criterion_3_heuristic_quality(verdict):
    within = 0
    for seed in range(100):
        rng = np.random.default_rng(3000 + seed)
        C = rng.uniform(0.0, 100.0, size=(12, 12))
        np.fill_diagonal(C, 0.0)
        inst = ATSPInstance(C)
        opt = tour_cost(inst, solve_exact(inst))
        heur = tour_cost(inst, solve_heuristic(inst, seed=seed))
        assert heur >= opt - 1e-9, f"seed {seed}: heuristic beat the optimum"
        if heur <= 1.15 * opt + 1e-9:
            within += 1
    ok = within >= 95
    verdict(3, ok, f"heuristic within 1.15x of exact in {within}/100 N=12 instances")


# -- criterion 4: abstraction soundness ----------------------------------------

def _soundness_violations(scenario, system, samples, seed):
    rng = np.random.default_rng(seed)
    grid = scenario.grid
    spec = scenario.spec
    violations = 0
    for _ in range(samples):
        c = int(rng.integers(0, grid.num_cells))
        k = int(rng.integers(0, len(scenario.inputs)))
        box = grid.cell_box(c)
        x = rng.uniform(box.lower, box.upper)
        w = rng.uniform(spec.w_lower, spec.w_upper)
        y = integrate_nominal(spec, x, scenario.inputs.values[k], w=w)
        target_cell = grid.quantize(y)
        if target_cell not in system.successors(c, k):
            violations += 1
    return violations


def test_criterion_4_abstraction_soundness(verdict, uav_scenario, uav_system,
                                           truck_scenario, truck_system):
    v_uav = _soundness_violations(uav_scenario, uav_system, 10_000, seed=4)
    v_truck = _soundness_violations(truck_scenario, truck_system, 10_000, seed=44)
    ok = v_uav == 0 and v_truck == 0
    verdict(4, ok, f"violations in 10^4 sampled transitions: "
                    f"uav-mini {v_uav}, truck-mini {v_truck}")


# -- criterion 5: coverage from every shrunk depot cell ------------------------

def test_criterion_5_uav_coverage_from_every_depot_cell(verdict, uav_scenario, uav_synthesis):
    sc = uav_scenario
    spec = sc.spec
    signals = [DisturbanceSignal.zero(spec.w_lower, spec.w_upper)]
    signals += [DisturbanceSignal.constant(w, spec.w_lower, spec.w_upper)
                for w in disturbance_vertices(spec.w_lower, spec.w_upper)]
    cells = uav_synthesis.shrunk[0].indices()
    runs = 0
    for c in cells:
        x0 = sc.grid.cell_box(int(c)).center
        for dist in signals:
            traj = simulate_closed_loop(uav_synthesis, sc, x0, dist)
            J = evaluate_total_cost(traj, sc)
            assert traj.terminated and traj.fault is None, \
                f"cell {c}: no termination ({traj.fault})"
            assert check_condition_star(traj, sc), f"cell {c}: coverage failed"
            assert np.isfinite(J), f"cell {c}: infinite J"
            runs += 1
    verdict(5, True, f"{runs} runs ({len(cells)} depot cells x {len(signals)} "
                      f"disturbances) all terminate with coverage and finite J")


# -- criterion 6: chaining beats naive chaining --------------------------------

def test_criterion_6_chaining_improvement(verdict, uav_scenario, uav_system, uav_shrunk,
                                          uav_synthesis):
    sc = uav_scenario
    shrunk, values = uav_shrunk
    naive = synthesize_for_tour(uav_system, shrunk, values,
                                uav_synthesis.cost_matrix, uav_synthesis.tour,
                                naive=True, grid_hash=uav_synthesis.grid_hash)
    dist = DisturbanceSignal.zero(sc.spec.w_lower, sc.spec.w_upper)
    worse = 0
    improvements = []
    for c in uav_synthesis.shrunk[0].indices():
        x0 = sc.grid.cell_box(int(c)).center
        J_chained = evaluate_total_cost(simulate_closed_loop(uav_synthesis, sc, x0, dist), sc)
        J_naive = evaluate_total_cost(simulate_closed_loop(naive, sc, x0, dist), sc)
        if J_chained > J_naive + 1e-9:
            worse += 1
        improvements.append(J_naive - J_chained)
    mean_gain = float(np.mean(improvements))
    ok = worse == 0
    verdict(6, ok, f"chained J <= naive J at all {len(improvements)} start cells "
                    f"({worse} exceptions), mean improvement {mean_gain:.3f}")


# -- criterion 7: heuristic tour is simulated-J optimal over all 24 tours ------

def _worst_case_J(result, scenario, x0):
    """Deterministic disturbance battery: nominal, all W vertices, 3 seeds."""
    spec = scenario.spec
    signals = [DisturbanceSignal.zero(spec.w_lower, spec.w_upper)]
    signals += [DisturbanceSignal.constant(w, spec.w_lower, spec.w_upper)
                for w in disturbance_vertices(spec.w_lower, spec.w_upper)]
    signals += [DisturbanceSignal.random(spec.w_lower, spec.w_upper, seed=s)
                for s in range(3)]
    worst = -np.inf
    for dist in signals:
        traj = simulate_closed_loop(result, scenario, x0, dist)
        worst = max(worst, evaluate_total_cost(traj, scenario))
    return worst


def test_criterion_7_truck_tour_optimality(verdict, truck_scenario, truck_system,
                                           truck_shrunk, truck_synthesis):
    t0 = time.time()
    sc = truck_scenario
    shrunk, values = truck_shrunk
    x0 = sc.start_state
    J_heur = _worst_case_J(truck_synthesis, sc, x0)
    costs = {}
    for perm in itertools.permutations(range(2, 6)):
        tour = (1, *perm, 1)
        if tour == truck_synthesis.tour:
            costs[tour] = J_heur
            continue
        result = synthesize_for_tour(truck_system, shrunk, values,
                                     truck_synthesis.cost_matrix, tour)
        costs[tour] = _worst_case_J(result, sc, x0)
    best = min(costs.values())
    elapsed = time.time() - t0
    ok = np.isfinite(J_heur) and J_heur <= best + 1e-9 and elapsed < 1800
    verdict(7, ok, f"heuristic tour {truck_synthesis.tour} J = {J_heur:.3f}, "
                    f"24-tour minimum = {best:.3f}, {elapsed / 60:.1f} min")


# -- criterion 8: cost-functional semantics ------------------------------------

def test_criterion_8_cost_semantics(verdict, truck_scenario, truck_synthesis, tmp_path):
    sc = truck_scenario
    dist = DisturbanceSignal.zero(sc.spec.w_lower, sc.spec.w_upper)
    x0 = sc.start_state

    # (a) v never raised (truncated run): J must be infinite
    short = simulate_closed_loop(truck_synthesis, sc, x0, dist, max_steps=3)
    assert not short.terminated
    assert (short.stops == 0).all()
    j_unterminated = evaluate_total_cost(short, sc)

    # (b) terminated but coverage violated: J must be infinite
    full = simulate_closed_loop(truck_synthesis, sc, x0, dist)
    assert full.terminated
    T = full.termination_time
    skipping = TrajectoryRecord(np.repeat(full.states[:1], T + 1, axis=0),
                                full.inputs[:T + 1], full.stops[:T + 1],
                                full.stages[:T + 1], full.step_costs[:T + 1],
                                terminated=True)
    j_no_coverage = evaluate_total_cost(skipping, sc)
    assert not check_condition_star(skipping, sc)

    # (c) CSV re-accumulation is bit-exact
    j_mem = evaluate_total_cost(full, sc)
    path = tmp_path / "truck.csv"
    full.to_csv(path)
    back = TrajectoryRecord.from_csv(path)
    j_csv = evaluate_total_cost(back, sc)
    last_acc = float(path.read_text().strip().splitlines()[-1].rsplit(",", 1)[1])

    ok = (np.isinf(j_unterminated) and np.isinf(j_no_coverage)
          and j_csv == j_mem and last_acc == j_mem)
    verdict(8, ok, f"J(v==0) = {j_unterminated}, J(no coverage) = {j_no_coverage}, "
                    f"CSV re-accumulation {j_csv!r} == in-memory {j_mem!r}")


# -- criterion 9: determinism --------------------------------------------------

def test_criterion_9_determinism(verdict, truck_scenario, truck_synthesis, tmp_path):
    sc = truck_scenario
    # independent second pipeline run from the config: rebuild everything
    system2 = sc.build_abstraction()
    result2 = synthesize(system2, sc.target_state_sets(),
                         tsp_backend=sc.tsp_backend, seed=sc.seed,
                         grid_hash=sc.grid.metadata_hash())
    p1, p2 = tmp_path / "run1.ctrl", tmp_path / "run2.ctrl"
    save_result(truck_synthesis, p1)
    save_result(result2, p2)
    same_ctrl = p1.read_bytes() == p2.read_bytes()

    dist1 = DisturbanceSignal.random(sc.spec.w_lower, sc.spec.w_upper, seed=sc.seed)
    dist2 = DisturbanceSignal.random(sc.spec.w_lower, sc.spec.w_upper, seed=sc.seed)
    c1, c2 = tmp_path / "t1.csv", tmp_path / "t2.csv"
    simulate_closed_loop(truck_synthesis, sc, sc.start_state, dist1).to_csv(c1)
    simulate_closed_loop(result2, sc, sc.start_state, dist2).to_csv(c2)
    same_csv = c1.read_bytes() == c2.read_bytes()

    ok = same_ctrl and same_csv
    verdict(9, ok, f"controller files identical: {same_ctrl}, "
                    f"trajectory CSVs identical: {same_csv}")
