"""Scenario definitions: vehicle dynamics, cost rules and config parsing.

A scenario bundles everything the pipeline needs: the disturbed vector field
with its growth bound, the state grid, the finite input sample, target and
obstacle geometry, and the running-cost rule in both its concrete form (used
by the simulator) and its conservative cell-wise form (used by the
abstraction).  Scenarios are described by INI-style config files; four named
configs ship with the package.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .abstraction import (AbstractRunningCost, InputSample, boxes_intersection_test,
                          build_abstraction, cells_inside_boxes)
from .dynamics import GrowthBoundModel, VectorFieldSpec
from .errors import ConfigError, UsageError
from .finite_system import StateSet
from .grid import UniformGrid

BUILTIN_SCENARIOS = ("uav-mini", "truck-mini", "uav-full", "truck-full")


# -- vehicle dynamics ---------------------------------------------------------

def dubins_rhs(x, u):
    """Planar unicycle: velocity and turn rate inputs."""
    out = np.empty_like(x)
    out[..., 0] = u[0] * np.cos(x[..., 2])
    out[..., 1] = u[0] * np.sin(x[..., 2])
    out[..., 2] = u[1]
    return out


def dubins_growth(u):
    L = np.zeros((3, 3))
    L[0, 2] = L[1, 2] = abs(u[0])
    return L


def truck_rhs(x, u):
    """Single-track truck: acceleration and steering-angle inputs."""
    alpha = np.arctan(np.tan(u[1]) / 2.0)
    beta = 1.0 / np.cos(alpha)
    out = np.empty_like(x)
    out[..., 0] = x[..., 3] * np.cos(alpha + x[..., 2]) * beta
    out[..., 1] = x[..., 3] * np.sin(alpha + x[..., 2]) * beta
    out[..., 2] = x[..., 3] * np.tan(u[1])
    out[..., 3] = u[0]
    return out


def truck_growth_factory(v_max):
    def growth(u):
        alpha = np.arctan(np.tan(u[1]) / 2.0)
        beta = 1.0 / np.cos(alpha)
        L = np.zeros((4, 4))
        L[0, 2] = L[1, 2] = v_max * beta
        L[0, 3] = L[1, 3] = beta
        L[2, 3] = abs(np.tan(u[1]))
        return L
    return growth


def truck_growth_local_factory(tau, w_acc):
    """Velocity-local planar coupling: within one sampling period the speed
    cannot exceed the cell's upper bound plus (|acceleration| + w) * tau, so
    that value replaces the global speed cap in the growth matrix."""
    def local(u, lo, hi):
        alpha = np.arctan(np.tan(u[1]) / 2.0)
        beta = 1.0 / np.cos(alpha)
        v_cap = hi[3] + (abs(u[0]) + w_acc) * tau
        L = np.zeros((4, 4))
        L[0, 2] = L[1, 2] = v_cap * beta
        L[0, 3] = L[1, 3] = beta
        L[2, 3] = abs(np.tan(u[1]))
        return L
    return local


def _velocity_groups(lo, hi):
    """Group cells by their speed interval (growth bounds agree within one)."""
    return np.unique(np.round(lo[:, 3], 9), return_inverse=True)[1]


def _segment_distance(points, segments):
    """Min Euclidean distance from planar points (C, 2) to line segments (K, 4)."""
    p = points[:, None, :]                      # (C, 1, 2)
    a = segments[None, :, 0:2]                  # (1, K, 2)
    b = segments[None, :, 2:4]
    ab = b - a
    denom = np.maximum((ab * ab).sum(-1), 1e-300)
    t = np.clip(((p - a) * ab).sum(-1) / denom, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.sqrt(((p - closest) ** 2).sum(-1)).min(axis=1)


# -- scenario object ----------------------------------------------------------

@dataclass
class Scenario:
    name: str
    kind: str                     # dubins | truck | custom-graph
    grid: UniformGrid
    spec: VectorFieldSpec
    model: GrowthBoundModel
    inputs: InputSample
    target_boxes: list            # [(lo, hi)] full-dimension, depot first
    obstacle_boxes: list = field(default_factory=list)
    allowed_boxes: list = field(default_factory=list)   # traffic rules (truck)
    axis_segments: np.ndarray | None = None             # roadway axes (truck)
    angular_weight: float = 1.0
    tsp_backend: str = "exact"
    seed: int = 0
    start_state: np.ndarray | None = None

    # -- membership -----------------------------------------------------------

    def _in_box(self, p, lo, hi, tol=1e-9):
        p = self.grid.wrap(p)
        return bool(np.all(p >= lo - tol) and np.all(p <= hi + tol))

    def in_target(self, p, i):
        lo, hi = self.target_boxes[i]
        return self._in_box(p, lo, hi)

    def in_obstacle(self, p):
        return any(self._in_box(p, lo, hi) for lo, hi in self.obstacle_boxes)

    def in_domain(self, p):
        g = self.grid
        p = g.wrap(p)
        free = ~g.periodic
        return bool(np.all(p[free] >= g.lower[free]) and np.all(p[free] <= g.upper[free]))

    def rules_satisfied(self, p):
        if not self.allowed_boxes:
            return True
        return any(self._in_box(p, lo, hi) for lo, hi in self.allowed_boxes)

    # -- running cost ---------------------------------------------------------

    def running_cost(self, x, y, u):
        """Concrete g(x, y, u); infinite on obstacle / rule violations at x."""
        if not self.in_domain(x) or self.in_obstacle(x) or not self.rules_satisfied(x):
            return np.inf
        g = self.spec.tau + self.angular_weight * float(u[1]) ** 2
        if self.axis_segments is not None and self.axis_segments.size:
            g += float(_segment_distance(np.asarray(y, dtype=np.float64)[None, :2],
                                         self.axis_segments)[0])
        return g

    def abstract_cost_rule(self) -> AbstractRunningCost:
        """Cell-wise conservative version of running_cost.

        A cell counts as obstacle when its box intersects an obstacle box or
        is not contained in the allowed-region union (checked against single
        allowed boxes; the shipped rule sets are box-aligned so this is not
        over-conservative).  The roadway-distance term is bounded from above
        through the successor-box center plus its half diagonal (the min-of-
        distances field is 1-Lipschitz).
        """
        obstacle_hit = boxes_intersection_test(self.obstacle_boxes) if self.obstacle_boxes else None
        allowed = self.allowed_boxes
        segments = self.axis_segments
        tau = self.spec.tau
        weight = self.angular_weight

        def obstacle_test(lo, hi):
            bad = np.zeros(lo.shape[0], dtype=bool)
            if obstacle_hit is not None:
                bad |= obstacle_hit(lo, hi)
            if allowed:
                inside = np.zeros(lo.shape[0], dtype=bool)
                for alo, ahi in allowed:
                    inside |= np.all((lo >= alo - 1e-9) & (hi <= ahi + 1e-9), axis=1)
                bad |= ~inside
            return bad

        def finite_cost(cell_lo, cell_hi, succ_center, succ_radius, u):
            g = np.full(cell_lo.shape[0], tau + weight * float(u[1]) ** 2)
            if segments is not None and segments.size:
                half_diag = np.linalg.norm(succ_radius[:, :2], axis=1)
                g += _segment_distance(succ_center[:, :2], segments) + half_diag
            return g

        return AbstractRunningCost(obstacle_test, finite_cost)

    # -- abstraction ----------------------------------------------------------

    def build_abstraction(self):
        return build_abstraction(self.spec, self.model, self.grid, self.inputs,
                                 self.abstract_cost_rule())

    def target_state_sets(self):
        """Inner-approximated grid StateSets of the targets, depot first."""
        sets = []
        for lo, hi in self.target_boxes:
            sets.append(cells_inside_boxes(self.grid, [(lo, hi)]))
        return sets


# -- config parsing -----------------------------------------------------------

def _floats(text):
    vals = []
    for tok in text.replace(",", " ").split():
        t = tok.lower()
        if t in ("inf", "+inf"):
            vals.append(np.inf)
        elif t == "-inf":
            vals.append(-np.inf)
        elif t == "pi":
            vals.append(np.pi)
        elif t == "2pi":
            vals.append(2 * np.pi)
        else:
            vals.append(float(tok))
    return np.asarray(vals, dtype=np.float64)


def _ints(text):
    return np.asarray([int(tok) for tok in text.replace(",", " ").split()], dtype=np.int64)


def _boxes(text, n, lower, upper):
    boxes = []
    for line in text.strip().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        vals = _floats(line)
        if vals.shape[0] != 2 * n:
            raise ConfigError(f"box line needs {2 * n} numbers, got {vals.shape[0]}: {line!r}")
        lo = np.maximum(vals[0::2], lower)
        hi = np.minimum(vals[1::2], upper)
        if (lo > hi).any():
            raise ConfigError(f"empty box after clamping to the domain: {line!r}")
        boxes.append((lo, hi))
    return boxes


def parse_scenario(text, name_hint="scenario") -> Scenario:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    try:
        sc = cp["scenario"]
        kind = sc.get("dynamics")
        if kind not in ("dubins", "truck", "custom-graph"):
            raise ConfigError(f"unknown dynamics selector {kind!r}")
        if kind == "custom-graph":
            raise ConfigError("custom-graph scenarios are driven through the CLI "
                              "graph options, not parse_scenario")
        dom = cp["domain"]
        lower = _floats(dom.get("lower"))
        upper = _floats(dom.get("upper"))
        counts = _ints(dom.get("counts"))
        periodic = _ints(dom.get("periodic", "0 " * lower.shape[0])).astype(bool)
        n = lower.shape[0]
        if not (upper.shape[0] == counts.shape[0] == periodic.shape[0] == n):
            raise ConfigError("domain arrays disagree in dimension")
        grid = UniformGrid.from_box(lower, upper, counts, periodic)

        ins = cp["inputs"]
        in_lower = _floats(ins.get("lower"))
        in_upper = _floats(ins.get("upper"))
        in_counts = _ints(ins.get("counts"))
        inputs = InputSample.grid(in_lower, in_upper, in_counts)

        smp = cp["sampling"]
        tau = smp.getfloat("tau")
        substeps = smp.getint("substeps", 5)

        dst = cp["disturbance"]
        w_lower = _floats(dst.get("lower"))
        w_upper = _floats(dst.get("upper"))

        expected_dim = {"dubins": 3, "truck": 4}[kind]
        if n != expected_dim:
            raise ConfigError(f"{kind} dynamics needs a {expected_dim}-dimensional domain")
        spec_args = dict(w_lower=w_lower, w_upper=w_upper, tau=tau, substeps=substeps)
        if kind == "dubins":
            spec = VectorFieldSpec(n, in_lower.shape[0], dubins_rhs, **spec_args)
            model = GrowthBoundModel(dubins_growth)
        else:
            spec = VectorFieldSpec(n, in_lower.shape[0], truck_rhs, **spec_args)
            w_acc = max(abs(float(w_lower[3])), abs(float(w_upper[3])))
            model = GrowthBoundModel(
                truck_growth_factory(float(upper[3])),
                local_matrix=truck_growth_local_factory(tau, w_acc),
                group_of_cells=_velocity_groups)

        targets = _boxes(cp["targets"].get("boxes"), n, lower, upper)
        if len(targets) < 2:
            raise ConfigError("need a depot plus at least one further target")
        obstacles = _boxes(cp["obstacles"].get("boxes"), n, lower, upper) \
            if cp.has_section("obstacles") else []
        allowed = _boxes(cp["rules"].get("boxes"), n, lower, upper) \
            if cp.has_section("rules") else []
        segments = None
        if cp.has_section("axes"):
            rows = [_floats(line) for line in cp["axes"].get("segments").strip().splitlines()
                    if line.strip()]
            segments = np.vstack(rows)
            if segments.shape[1] != 4:
                raise ConfigError("axis segments need 4 numbers per line: x1 y1 x2 y2")

        weight = cp["cost"].getfloat("angular_weight", 1.0) if cp.has_section("cost") else 1.0
        start = _floats(sc.get("start")) if sc.get("start") else None

        return Scenario(
            name=sc.get("name", name_hint), kind=kind, grid=grid, spec=spec,
            model=model, inputs=inputs, target_boxes=targets,
            obstacle_boxes=obstacles, allowed_boxes=allowed, axis_segments=segments,
            angular_weight=weight, tsp_backend=sc.get("tsp_backend", "exact"),
            seed=sc.getint("seed", 0), start_state=start)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid scenario config: {exc!r}") from None


def load_scenario(name_or_path) -> Scenario:
    """Load a shipped scenario by name or any config file by path."""
    path = Path(name_or_path)
    if path.exists():
        return parse_scenario(path.read_text(), name_hint=path.stem)
    if name_or_path in BUILTIN_SCENARIOS:
        text = resources.files("dyntsp.configs").joinpath(f"{name_or_path}.cfg").read_text()
        return parse_scenario(text, name_hint=name_or_path)
    raise ConfigError(f"no such scenario: {name_or_path!r} "
                      f"(builtins: {', '.join(BUILTIN_SCENARIOS)})")
