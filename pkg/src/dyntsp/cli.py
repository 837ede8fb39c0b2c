"""Command-line front end: abstract, synth, simulate, tour, export.

Exit codes: 0 success, 2 coverage problem unsolvable, 3 runtime fault in the
closed loop, 4 malformed configuration or input file.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .abstraction import load_abstraction, save_abstraction
from .atsp import (ATSPInstance, export_tour, export_tsplib, import_tsplib,
                   solve_exact, solve_heuristic, tour_cost)
from .errors import (ConfigError, DynTspError, ParseError, RuntimeFault,
                     UnsolvableError, UsageError)
from .finite_system import FiniteSystem, StateSet
from .scenarios import load_scenario
from .simulate import (DisturbanceSignal, estimate_performance, render_svg,
                       simulate_closed_loop)
from .synthesis import load_result, save_result, synthesize

EXIT_OK = 0
EXIT_UNSOLVABLE = 2
EXIT_RUNTIME_FAULT = 3
EXIT_CONFIG = 4


def _out_dir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_system(args):
    """Scenario + finite system, from a config (cached or fresh build) or a
    plain-text graph fixture with explicit target cell lists."""
    if args.graph:
        system = FiniteSystem.from_text(Path(args.graph).read_text())
        if not args.targets:
            raise ConfigError("graph mode needs --targets \"c1,c2;c3;...\"")
        targets = []
        for part in args.targets.split(";"):
            idx = [int(tok) for tok in part.replace(",", " ").split()]
            targets.append(StateSet.from_indices(system.num_states, idx))
        return None, system, targets, b"\x00" * 8
    if not args.config:
        raise ConfigError("either --config or --graph is required")
    scenario = load_scenario(args.config)
    cache = getattr(args, "abstraction", None)
    if cache and Path(cache).exists():
        grid, inputs, system = load_abstraction(cache)
        if grid != scenario.grid:
            raise ConfigError(f"abstraction cache {cache} was built on a different grid")
    else:
        system = scenario.build_abstraction()
    return scenario, system, scenario.target_state_sets(), scenario.grid.metadata_hash()


def _pick_start(scenario, result, args):
    if getattr(args, "start", None):
        x0 = np.asarray([float(t) for t in args.start.replace(",", " ").split()])
    elif scenario.start_state is not None:
        x0 = scenario.start_state
    else:
        # fall back to the best depot cell of the synthesized controller
        idx = result.shrunk[0].indices()
        best = idx[np.argmin(result.value_for_stage(1)[idx])]
        x0 = scenario.grid.cell_box(int(best)).center
    cell = scenario.grid.quantize(x0)
    if cell == scenario.grid.sink or not result.shrunk[0].contains(cell):
        raise UsageError(f"start state {x0.tolist()} does not quantize into the "
                         "shrunk depot; pass --start with a state inside it")
    return x0


def _make_disturbance(scenario, args):
    spec = scenario.spec
    mode = args.disturbance
    if mode == "zero":
        return DisturbanceSignal.zero(spec.w_lower, spec.w_upper)
    if mode == "random":
        return DisturbanceSignal.random(spec.w_lower, spec.w_upper, seed=args.seed)
    if mode.startswith("const:"):
        w = np.asarray([float(t) for t in mode[6:].replace(",", " ").split()])
        return DisturbanceSignal.constant(w, spec.w_lower, spec.w_upper)
    raise ConfigError(f"unknown disturbance mode {mode!r}")


# -- subcommands ---------------------------------------------------------------

def cmd_abstract(args):
    scenario = load_scenario(args.config)
    system = scenario.build_abstraction()
    out = _out_dir(args) / f"{scenario.name}.abs"
    save_abstraction(out, scenario.grid, scenario.inputs, system)
    edges = system.successors_flat.shape[0]
    print(f"abstraction: {system.num_states} states ({scenario.grid}), "
          f"{system.num_inputs} inputs, {edges} transitions")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_synth(args):
    scenario, system, targets, grid_hash = _load_system(args)
    result = synthesize(system, targets, tsp_backend=args.tsp_backend,
                        naive=args.naive_chaining, seed=args.seed,
                        grid_hash=grid_hash)
    name = scenario.name if scenario else Path(args.graph).stem
    out = _out_dir(args) / f"{name}{'-naive' if args.naive_chaining else ''}.ctrl"
    save_result(result, out)
    print(f"tour: {result.tour}  (matrix cost "
          f"{tour_cost(ATSPInstance(result.cost_matrix), result.tour):.6g})")
    for i, t in enumerate(result.shrunk):
        print(f"  A'_{i + 1}: {len(t)} cells")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_simulate(args):
    scenario = load_scenario(args.config)
    result = load_result(args.controller)
    if result.grid_hash != scenario.grid.metadata_hash():
        raise ConfigError("controller was synthesized for a different grid")
    x0 = _pick_start(scenario, result, args)
    out = _out_dir(args)
    if args.trials > 0:
        est = estimate_performance(result, scenario, x0, trials=args.trials,
                                   seed=args.seed, max_steps=args.max_steps)
        print(f"estimated worst-case J over {args.trials} random trials "
              f"+ vertex sweep: {est:.6g}")
    dist = _make_disturbance(scenario, args)
    traj = simulate_closed_loop(result, scenario, x0, dist, max_steps=args.max_steps)
    csv_path = out / f"{scenario.name}-trajectory.csv"
    traj.to_csv(csv_path)
    svg_path = out / f"{scenario.name}-trajectory.svg"
    render_svg(traj, scenario, svg_path)
    from .simulate import evaluate_total_cost
    J = evaluate_total_cost(traj, scenario)
    print(f"wrote {csv_path} and {svg_path}")
    if traj.fault:
        print(f"fault: {traj.fault}", file=sys.stderr)
        return EXIT_RUNTIME_FAULT
    print(f"terminated at T={traj.termination_time}, total cost J={J:.6g}")
    return EXIT_OK


def cmd_tour(args):
    inst = import_tsplib(args.problem)
    if args.tsp_backend == "exact":
        tour = solve_exact(inst)
    elif args.tsp_backend == "heuristic":
        tour = solve_heuristic(inst, seed=args.seed)
    elif args.tsp_backend.startswith("external:"):
        from .external import solve_external
        tour = solve_external(inst, args.tsp_backend.split(":", 1)[1])
    else:
        raise ConfigError(f"unknown tsp backend {args.tsp_backend!r}")
    print(f"tour: {tour}  cost {tour_cost(inst, tour):.6g}")
    if args.out:
        export_tour(tour, args.out, name=Path(args.problem).stem)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_export(args):
    result = load_result(args.controller)
    out = _out_dir(args)
    name = Path(args.controller).stem
    problem = out / f"{name}.atsp"
    export_tsplib(ATSPInstance(result.cost_matrix), problem, name=name)
    tour_file = out / f"{name}.tour"
    export_tour(result.tour, tour_file, name=name)
    print(f"wrote {problem} and {tour_file}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="dyntsp",
                                description="Correct-by-construction coverage "
                                            "controllers for disturbed vehicles")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out-dir", default=".")

    sp = sub.add_parser("abstract", help="build and cache the finite abstraction")
    sp.add_argument("--config", required=True)
    common(sp)
    sp.set_defaults(func=cmd_abstract)

    sp = sub.add_parser("synth", help="synthesize the switching controller")
    sp.add_argument("--config")
    sp.add_argument("--graph", help="plain-text finite system instead of a scenario")
    sp.add_argument("--targets", help="graph mode: cell lists 'c1,c2;c3;...' depot first")
    sp.add_argument("--abstraction", help="reuse a cached .abs file")
    sp.add_argument("--tsp-backend", default="exact",
                    help="exact | heuristic | external:<path>")
    sp.add_argument("--naive-chaining", action="store_true",
                    help="terminal cost 0 per leg instead of the next leg's value")
    common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("simulate", help="closed-loop run of a synthesized controller")
    sp.add_argument("--config", required=True)
    sp.add_argument("--controller", required=True)
    sp.add_argument("--start", help="start state components (default: config / best depot cell)")
    sp.add_argument("--disturbance", default="zero", help="zero | random | const:w1,...")
    sp.add_argument("--trials", type=int, default=0,
                    help="additionally estimate worst-case J over this many random signals")
    sp.add_argument("--max-steps", type=int, default=2000)
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("tour", help="solve a TSPLIB ATSP instance")
    sp.add_argument("problem")
    sp.add_argument("--tsp-backend", default="exact")
    sp.add_argument("--out", help="write the tour file here")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_tour)

    sp = sub.add_parser("export", help="export a controller's ATSP instance and tour")
    sp.add_argument("--controller", required=True)
    common(sp)
    sp.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UnsolvableError as exc:
        print(f"unsolvable: {exc}", file=sys.stderr)
        return EXIT_UNSOLVABLE
    except RuntimeFault as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME_FAULT
    except (ConfigError, ParseError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DynTspError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
