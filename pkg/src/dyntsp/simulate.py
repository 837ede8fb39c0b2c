"""Closed-loop simulation, total-cost evaluation and trajectory exports.

The concrete plant integrates the disturbed vector field with the disturbance
held piecewise-constant over each sampling interval; the controller side sees
only the quantized cell.  The total cost J uses the concrete running cost and
is infinite unless the run terminates and the coverage condition (depot at
both ends, every target visited in between) holds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .dynamics import integrate_nominal
from .errors import ParseError, RuntimeFault, UsageError
from .synthesis import SwitchingState, switching_step


class DisturbanceSignal:
    """Per-step disturbance values, all confined to the box W."""

    def __init__(self, mode, w_lower, w_upper, value=None, seed=0, script=None):
        self.mode = mode
        self.w_lower = np.asarray(w_lower, dtype=np.float64)
        self.w_upper = np.asarray(w_upper, dtype=np.float64)
        self._value = None if value is None else np.asarray(value, dtype=np.float64)
        self.seed = seed
        self._script = None if script is None else [np.asarray(w, dtype=np.float64) for w in script]
        self._cache = []
        self._rng = np.random.default_rng(seed) if mode == "random" else None
        if self._value is not None and not self._inside(self._value):
            raise UsageError("constant disturbance lies outside W")
        if self._script is not None and not all(self._inside(w) for w in self._script):
            raise UsageError("scripted disturbance leaves W")

    def _inside(self, w, tol=1e-12):
        return bool(np.all(w >= self.w_lower - tol) and np.all(w <= self.w_upper + tol))

    @classmethod
    def constant(cls, w, w_lower, w_upper):
        return cls("constant", w_lower, w_upper, value=w)

    @classmethod
    def zero(cls, w_lower, w_upper):
        return cls("constant", w_lower, w_upper,
                   value=0.5 * (np.asarray(w_lower) + np.asarray(w_upper)))

    @classmethod
    def random(cls, w_lower, w_upper, seed):
        return cls("random", w_lower, w_upper, seed=seed)

    @classmethod
    def scripted(cls, script, w_lower, w_upper):
        return cls("scripted", w_lower, w_upper, script=script)

    def value(self, t):
        if self.mode == "constant":
            return self._value
        if self.mode == "scripted":
            if t >= len(self._script):
                return 0.5 * (self.w_lower + self.w_upper)
            return self._script[t]
        while len(self._cache) <= t:
            self._cache.append(self._rng.uniform(self.w_lower, self.w_upper))
        return self._cache[t]


def disturbance_vertices(w_lower, w_upper):
    """Vertices of W, collapsing zero-width components (2^k points)."""
    w_lower = np.asarray(w_lower, dtype=np.float64)
    w_upper = np.asarray(w_upper, dtype=np.float64)
    axes = [(lo,) if hi <= lo else (lo, hi) for lo, hi in zip(w_lower, w_upper)]
    return [np.asarray(v, dtype=np.float64) for v in itertools.product(*axes)]


@dataclass
class TrajectoryRecord:
    """Time-indexed closed-loop log; row t holds x(t), u(t), v(t), stage, g_t."""

    states: np.ndarray       # (T+1, n) recorded states
    inputs: np.ndarray       # (T+1, m) applied input (last row: unused input)
    stops: np.ndarray        # (T+1,) stopping signal v
    stages: np.ndarray       # (T+1,) active stage after switching
    step_costs: np.ndarray   # (T+1,) concrete g per step (0 at the stop row)
    terminated: bool
    fault: str | None = None

    @property
    def termination_time(self):
        hits = np.flatnonzero(self.stops == 1)
        return int(hits[0]) if hits.size else np.inf

    @property
    def accumulated_cost(self):
        # sequential summation, bit-identical to the CSV acc_cost column
        T = self.termination_time
        upto = self.step_costs if np.isinf(T) else self.step_costs[:T]
        acc = 0.0
        for c in upto:
            acc += float(c)
        return acc

    @property
    def num_steps(self):
        return self.states.shape[0]

    # -- CSV ------------------------------------------------------------------

    def to_csv(self, path):
        n = self.states.shape[1]
        m = self.inputs.shape[1]
        header = (["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
                  + ["v", "stage", "step_cost", "acc_cost"])
        lines = [",".join(header)]
        acc = 0.0
        for t in range(self.num_steps):
            if not self.stops[t]:
                acc += float(self.step_costs[t])
            row = ([str(t)] + [repr(float(v)) for v in self.states[t]]
                   + [repr(float(v)) for v in self.inputs[t]]
                   + [str(int(self.stops[t])), str(int(self.stages[t])),
                      repr(float(self.step_costs[t])), repr(acc)])
            lines.append(",".join(row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        if not lines:
            raise ParseError(f"empty trajectory file {path}")
        header = lines[0].split(",")
        n = sum(1 for h in header if h.startswith("x"))
        m = sum(1 for h in header if h.startswith("u"))
        rows = []
        for ln, line in enumerate(lines[1:], start=2):
            parts = line.split(",")
            if len(parts) != len(header):
                raise ParseError("wrong column count", line=ln)
            rows.append(parts)
        T = len(rows)
        states = np.empty((T, n))
        inputs = np.empty((T, m))
        stops = np.empty(T, dtype=np.int64)
        stages = np.empty(T, dtype=np.int64)
        costs = np.empty(T)
        for t, parts in enumerate(rows):
            states[t] = [float(v) for v in parts[1:1 + n]]
            inputs[t] = [float(v) for v in parts[1 + n:1 + n + m]]
            stops[t] = int(parts[1 + n + m])
            stages[t] = int(parts[2 + n + m])
            costs[t] = float(parts[3 + n + m])
        return cls(states, inputs, stops, stages, costs,
                   terminated=bool(stops.size and stops[-1] == 1))


def simulate_closed_loop(result, scenario, x0, dist: DisturbanceSignal,
                         max_steps=2000):
    """Run the refined switching controller on the concrete plant.

    The start state must quantize into the shrunk depot A'_1.  A winning-
    domain exit is recorded as a fault instead of raising, so disturbance
    sweeps can report it.
    """
    grid = scenario.grid
    x = np.asarray(x0, dtype=np.float64)
    start_cell = grid.quantize(x)
    if start_cell == grid.sink or not result.shrunk[0].contains(start_cell):
        raise UsageError(f"start state {x0} does not quantize into the shrunk depot")
    sw = SwitchingState()
    states, inputs, stops, stages, costs = [], [], [], [], []
    fault = None
    terminated = False
    for t in range(max_steps + 1):
        cell = grid.quantize(x)
        try:
            u_idx, v, sw = switching_step(result, sw, cell)
        except RuntimeFault as exc:
            fault = str(exc)
            break
        u = scenario.inputs.values[u_idx]
        states.append(x.copy())
        inputs.append(u.copy())
        stops.append(v)
        stages.append(sw.stage)
        if v:
            costs.append(0.0)
            terminated = True
            break
        w = dist.value(t)
        x_next = integrate_nominal(scenario.spec, x, u, w=w)
        costs.append(scenario.running_cost(x, x_next, u))
        x = x_next
    return TrajectoryRecord(np.asarray(states), np.asarray(inputs),
                            np.asarray(stops, dtype=np.int64),
                            np.asarray(stages, dtype=np.int64),
                            np.asarray(costs), terminated, fault)


def check_condition_star(traj: TrajectoryRecord, scenario):
    """Coverage condition: depot at both ends, every target visited once.

    Membership is evaluated against the concrete target sets at sampling
    instants only.
    """
    T = traj.termination_time
    if np.isinf(T):
        return False
    n_targets = len(scenario.target_boxes)
    if not scenario.in_target(traj.states[0], 0):
        return False
    if not scenario.in_target(traj.states[T], 0):
        return False
    for i in range(1, n_targets):
        if not any(scenario.in_target(traj.states[t], i) for t in range(T + 1)):
            return False
    return True


def evaluate_total_cost(traj: TrajectoryRecord, scenario):
    """Total cost J: inf without termination or coverage, else the running sum."""
    if np.isinf(traj.termination_time) or not check_condition_star(traj, scenario):
        return np.inf
    return traj.accumulated_cost


def estimate_performance(result, scenario, x0, trials=20, seed=0, max_steps=2000):
    """Sampled lower bound on the worst-case performance at x0.

    Maximum of J over the disturbance-vertex sweep plus ``trials`` seeded
    random disturbance signals; monotone in the number of trials.
    """
    if trials < 1:
        raise UsageError("need at least one trial")
    spec = scenario.spec
    worst = -np.inf
    for w in disturbance_vertices(spec.w_lower, spec.w_upper):
        traj = simulate_closed_loop(result, scenario, x0,
                                    DisturbanceSignal.constant(w, spec.w_lower, spec.w_upper),
                                    max_steps=max_steps)
        worst = max(worst, evaluate_total_cost(traj, scenario))
    for k in range(trials):
        traj = simulate_closed_loop(result, scenario, x0,
                                    DisturbanceSignal.random(spec.w_lower, spec.w_upper,
                                                             seed=seed + k),
                                    max_steps=max_steps)
        worst = max(worst, evaluate_total_cost(traj, scenario))
    return worst


# -- SVG rendering ------------------------------------------------------------

def render_svg(traj: TrajectoryRecord, scenario, path, size=640):
    """Plan-view drawing: domain, obstacles grey, targets orange, depot green,
    trajectory as a black polyline (one vertex per recorded step)."""
    grid = scenario.grid
    lo = grid.lower[:2]
    hi = grid.upper[:2]
    span = hi - lo
    scale = size / span.max()
    W, H = span[0] * scale, span[1] * scale

    def sx(v):
        return (v - lo[0]) * scale

    def sy(v):
        return H - (v - lo[1]) * scale  # flip y for screen coordinates

    def rect(blo, bhi, color):
        x0, y0 = sx(max(blo[0], lo[0])), sy(min(bhi[1], hi[1]))
        w = (min(bhi[0], hi[0]) - max(blo[0], lo[0])) * scale
        h = (min(bhi[1], hi[1]) - max(blo[1], lo[1])) * scale
        return (f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{w:.2f}" height="{h:.2f}" '
                f'fill="{color}" stroke="none"/>')

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" '
             f'viewBox="0 0 {W:.2f} {H:.2f}">',
             f'<rect x="0" y="0" width="{W:.2f}" height="{H:.2f}" fill="white" stroke="black"/>']
    for blo, bhi in scenario.obstacle_boxes:
        parts.append(rect(blo, bhi, "#9e9e9e"))
    for i, (blo, bhi) in enumerate(scenario.target_boxes):
        parts.append(rect(blo, bhi, "#2e9e46" if i == 0 else "#f28c28"))
    if traj.num_steps:
        pts = " ".join(f"{sx(p[0]):.2f},{sy(p[1]):.2f}" for p in traj.states)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
