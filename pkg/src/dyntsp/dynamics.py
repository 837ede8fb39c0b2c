"""Continuous-time vector fields and rigorous one-step overapproximation.

The sampled system moves for one sampling period under a constant input and
an additive disturbance confined to an axis-aligned box W.  A cell of the
state-space grid is propagated as an interval box: its center follows the
nominal flow (classical fixed-step RK4) while its radius follows the linear
growth ODE  r' = L(u) r + w_half,  whose matrix L(u) is a scenario-supplied
bound on the componentwise Jacobian of the right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericError, UsageError


@dataclass(frozen=True)
class IntervalBox:
    """Axis-aligned box given by center and (componentwise) radius."""

    center: np.ndarray
    radius: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        object.__setattr__(self, "radius", np.asarray(self.radius, dtype=np.float64))
        if (self.radius < 0).any():
            raise UsageError("box radius must be nonnegative")

    @property
    def lower(self):
        return self.center - self.radius

    @property
    def upper(self):
        return self.center + self.radius

    def contains(self, p, tol=0.0):
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(np.abs(p - self.center) <= self.radius + tol))


@dataclass(frozen=True)
class VectorFieldSpec:
    """Right-hand side f, disturbance box W and sampling period tau.

    ``rhs(x, u)`` must accept states of shape (..., dimension) and broadcast;
    ``w_lower``/``w_upper`` bound the additive disturbance componentwise.
    """

    dimension: int
    input_dimension: int
    rhs: Callable[[np.ndarray, np.ndarray], np.ndarray]
    w_lower: np.ndarray
    w_upper: np.ndarray
    tau: float
    substeps: int = 5

    def __post_init__(self):
        object.__setattr__(self, "w_lower", np.asarray(self.w_lower, dtype=np.float64))
        object.__setattr__(self, "w_upper", np.asarray(self.w_upper, dtype=np.float64))
        if self.w_lower.shape != (self.dimension,) or self.w_upper.shape != (self.dimension,):
            raise UsageError("disturbance bounds must have one entry per state dimension")
        if (self.w_lower > self.w_upper).any():
            raise UsageError("disturbance bounds must be ordered componentwise")
        if not self.tau > 0:
            raise UsageError("sampling period must be positive")
        if self.substeps < 1:
            raise UsageError("need at least one integration substep")

    @property
    def w_center(self):
        return 0.5 * (self.w_lower + self.w_upper)

    @property
    def w_half(self):
        return 0.5 * (self.w_upper - self.w_lower)


@dataclass(frozen=True)
class GrowthBoundModel:
    """Growth-bound matrix L(u) with nonnegative off-diagonal entries.

    ``matrix(u)`` is the bound valid on the whole domain.  Scenarios whose
    Jacobian bound depends strongly on one coordinate (the truck's velocity)
    may additionally supply ``local_matrix(u, box_lo, box_hi)``, a tighter
    bound valid for starts inside the given box; the abstraction groups cells
    sharing the same local bound via ``group_of_cells(lo, hi)``.
    """

    matrix: Callable[[np.ndarray], np.ndarray]
    local_matrix: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None
    group_of_cells: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __call__(self, u):
        return self._checked(self.matrix(np.asarray(u, dtype=np.float64)))

    def for_box(self, u, box_lo, box_hi):
        if self.local_matrix is None:
            return self(u)
        return self._checked(self.local_matrix(np.asarray(u, dtype=np.float64),
                                               np.asarray(box_lo, dtype=np.float64),
                                               np.asarray(box_hi, dtype=np.float64)))

    @staticmethod
    def _checked(L):
        L = np.asarray(L, dtype=np.float64)
        off = L - np.diag(np.diag(L))
        if (off < 0).any():
            raise UsageError("growth-bound matrix must have nonnegative off-diagonal entries")
        return L


def _rk4(deriv, x0, h, steps):
    x = np.asarray(x0, dtype=np.float64)
    for _ in range(steps):
        k1 = deriv(x)
        k2 = deriv(x + 0.5 * h * k1)
        k3 = deriv(x + 0.5 * h * k2)
        k4 = deriv(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def integrate_nominal(spec: VectorFieldSpec, x, u, w=None):
    """Integrate  x' = f(x, u) + w  over one sampling period.

    ``w`` defaults to the midpoint of W (zero for centered disturbance sets).
    ``x`` may carry leading batch dimensions.  Deterministic for fixed inputs.
    """
    u = np.asarray(u, dtype=np.float64)
    w = spec.w_center if w is None else np.asarray(w, dtype=np.float64)

    def deriv(state):
        return np.asarray(spec.rhs(state, u), dtype=np.float64) + w

    out = _rk4(deriv, x, spec.tau / spec.substeps, spec.substeps)
    if not np.isfinite(out).all():
        bad = np.asarray(x)[~np.isfinite(out).all(axis=-1)] if np.ndim(x) > 1 else x
        raise NumericError(f"non-finite state after integration, starting from {bad}")
    return out


def propagate_radius(model: GrowthBoundModel, r0, u, w_half, tau, substeps=5):
    """Integrate the radius ODE  r' = L(u) r + w_half  over [0, tau].

    Result is nonnegative componentwise and monotone in r0 and w_half.
    """
    r0 = np.asarray(r0, dtype=np.float64)
    w_half = np.asarray(w_half, dtype=np.float64)
    if (r0 < 0).any() or (w_half < 0).any():
        raise UsageError("radius and disturbance half-width must be nonnegative")
    L = model(u)

    def deriv(r):
        return L @ r + w_half

    return _rk4(deriv, r0, tau / substeps, substeps)


def overapprox_successor(spec: VectorFieldSpec, model: GrowthBoundModel,
                         cell: IntervalBox, u) -> IntervalBox:
    """Sound one-step successor box of ``cell`` under input ``u``.

    Contains every solution of the disturbed sampled dynamics starting in the
    cell (soundness is validated statistically in the test suite).
    """
    center = integrate_nominal(spec, cell.center, u)
    L = model.for_box(u, cell.lower, cell.upper)

    def deriv(r):
        return L @ r + spec.w_half

    radius = _rk4(deriv, cell.radius, spec.tau / spec.substeps, spec.substeps)
    return IntervalBox(center, radius)
