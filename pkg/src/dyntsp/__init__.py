"""Correct-by-construction coverage (TSP) controllers for disturbed vehicles.

Pipeline: uniform-grid abstraction of the sampled dynamics, worst-case
reach-avoid value functions, asymmetric-TSP tour over the mutually reachable
target subsets, chained per-leg controllers and a runtime switching policy
with a guaranteed finite total cost.
"""

from .abstraction import (AbstractRunningCost, InputSample, build_abstraction,
                          cells_inside_boxes, load_abstraction, save_abstraction)
from .atsp import (ATSPInstance, export_tour, export_tsplib, import_tour,
                   import_tsplib, solve_exact, solve_heuristic, tour_cost,
                   validate_tour)
from .dynamics import (GrowthBoundModel, IntervalBox, VectorFieldSpec,
                       integrate_nominal, overapprox_successor, propagate_radius)
from .errors import (CapacityError, ConfigError, DynTspError, NumericError,
                     ParseError, RuntimeFault, UnsolvableError, UsageError)
from .finite_system import FiniteSystem, StateSet
from .grid import UniformGrid
from .reach_avoid import (MemorylessController, ReachAvoidProblem,
                          bellman_backup, policy_performance, restrict_infinite,
                          solve)
from .scenarios import BUILTIN_SCENARIOS, Scenario, load_scenario, parse_scenario
from .simulate import (DisturbanceSignal, TrajectoryRecord, check_condition_star,
                       disturbance_vertices, estimate_performance,
                       evaluate_total_cost, render_svg, simulate_closed_loop)
from .synthesis import (SwitchingState, SynthesisResult, adversarial_rollout,
                        build_cost_matrix, chained_worst_case_bound, load_result,
                        save_result, shrink_fixed_point, switching_step,
                        synthesize, synthesize_for_tour)

__version__ = "0.1.0"
