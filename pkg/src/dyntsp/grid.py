"""Uniform hyper-rectangular grid with periodic dimensions and a sink cell.

Cells are half-open translations of [0, eta_1) x ... x [0, eta_n).  Indexing
is row-major over dimensions in declaration order; the sink (everything
outside the domain in a non-periodic dimension) gets the extra index
``num_cells``.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .dynamics import IntervalBox
from .errors import UsageError


class UniformGrid:

    def __init__(self, lower, eta, counts, periodic=None):
        self.lower = np.asarray(lower, dtype=np.float64)
        self.eta = np.asarray(eta, dtype=np.float64)
        self.counts = np.asarray(counts, dtype=np.int64)
        n = self.lower.shape[0]
        if periodic is None:
            periodic = np.zeros(n, dtype=bool)
        self.periodic = np.asarray(periodic, dtype=bool)
        if not (self.eta.shape == (n,) and self.counts.shape == (n,) and self.periodic.shape == (n,)):
            raise UsageError("grid parameter arrays must all have the same dimension")
        if (self.counts < 1).any():
            raise UsageError("cell counts must be >= 1")
        if (self.eta <= 0).any():
            raise UsageError("grid parameter eta must be positive")
        self.dimension = n
        self.num_cells = int(np.prod(self.counts))
        self.sink = self.num_cells
        # row-major strides
        self.strides = np.ones(n, dtype=np.int64)
        for d in range(n - 2, -1, -1):
            self.strides[d] = self.strides[d + 1] * self.counts[d + 1]

    @classmethod
    def from_box(cls, lower, upper, counts, periodic=None):
        lower = np.asarray(lower, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        counts = np.asarray(counts, dtype=np.int64)
        if (upper <= lower).any():
            raise UsageError("domain box must have positive extent")
        return cls(lower, (upper - lower) / counts, counts, periodic)

    @property
    def upper(self):
        return self.lower + self.eta * self.counts

    @property
    def period(self):
        return self.eta * self.counts

    # -- coordinate maps ------------------------------------------------------

    def wrap(self, p):
        """Wrap periodic coordinates of ``p`` into [lower, lower + period)."""
        p = np.array(p, dtype=np.float64, copy=True)
        per = self.periodic
        if per.any():
            span = (self.period)[per]
            p[..., per] = self.lower[per] + np.mod(p[..., per] - self.lower[per], span)
        return p

    def quantize(self, p):
        """Cell index of point(s) ``p``; sink for out-of-domain points.

        Accepts a single point or a batch of shape (..., n).
        """
        p = self.wrap(p)
        idx = np.floor((p - self.lower) / self.eta).astype(np.int64)
        # periodic coordinates may still land on counts due to float wrap
        idx[..., self.periodic] = np.mod(idx[..., self.periodic], self.counts[self.periodic])
        inside = np.all((idx >= 0) & (idx < self.counts), axis=-1)
        flat = np.sum(np.clip(idx, 0, self.counts - 1) * self.strides, axis=-1)
        flat = np.where(inside, flat, self.sink)
        if flat.ndim == 0:
            return int(flat)
        return flat

    def multi_index(self, c):
        if not (0 <= c < self.num_cells):
            raise UsageError(f"cell index {c} out of range")
        idx = np.empty(self.dimension, dtype=np.int64)
        for d in range(self.dimension):
            idx[d] = c // self.strides[d]
            c = c % self.strides[d]
        return idx

    def cell_box(self, c) -> IntervalBox:
        """Closed box of a non-sink cell; quantize(center) round-trips to c."""
        if c == self.sink:
            raise UsageError("the sink cell has no box")
        idx = self.multi_index(c)
        center = self.lower + (idx + 0.5) * self.eta
        return IntervalBox(center, 0.5 * self.eta)

    def all_centers(self):
        """(num_cells, n) array of cell centers, row-major order."""
        axes = [self.lower[d] + (np.arange(self.counts[d]) + 0.5) * self.eta[d]
                for d in range(self.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    # -- persistence helpers --------------------------------------------------

    def metadata_bytes(self):
        parts = [struct.pack("<q", self.dimension)]
        parts.append(self.lower.tobytes())
        parts.append(self.eta.tobytes())
        parts.append(self.counts.tobytes())
        parts.append(self.periodic.astype(np.uint8).tobytes())
        return b"".join(parts)

    def metadata_hash(self):
        return hashlib.sha256(self.metadata_bytes()).digest()[:8]

    def __eq__(self, other):
        return isinstance(other, UniformGrid) and self.metadata_bytes() == other.metadata_bytes()

    def __repr__(self):
        shape = "x".join(str(int(c)) for c in self.counts)
        return f"UniformGrid({shape} cells + sink)"
