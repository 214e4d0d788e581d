"""Right-continuous piecewise-constant functions on a time axis.

Every estimator in this package is represented exactly as a step function:
knots are the observed event times, evaluation never interpolates, and
integrals are exact rectangle sums.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StepFunction:
    """A right-continuous step function.

    The function equals ``initial_value`` on ``[start, times[0])`` and
    ``values[i]`` on ``[times[i], times[i+1])``.  Knot times are strictly
    increasing and not smaller than ``start``.
    """

    start: float
    times: np.ndarray
    values: np.ndarray
    initial_value: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if t.size and (np.any(np.diff(t) <= 0) or t[0] < self.start):
            raise ValueError("knot times must be strictly increasing and >= start")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.start):
            raise ValueError(f"evaluation before start {self.start}")
        if self.times.size == 0:
            out = np.full(t.shape, self.initial_value)
        else:
            idx = np.searchsorted(self.times, t, side="right") - 1
            out = np.where(idx < 0, self.initial_value, self.values[np.maximum(idx, 0)])
        return float(out) if out.ndim == 0 else out

    def left_limit(self, t: float) -> float:
        """Value just before ``t`` (equals ``self(t)`` unless ``t`` is a knot)."""
        idx = np.searchsorted(self.times, t, side="left") - 1
        return self.initial_value if idx < 0 else float(self.values[idx])

    def integrate(self, a: float, b: float) -> float:
        """Exact integral over ``[a, b]`` of the step representation."""
        if b < a:
            raise ValueError("integration bounds out of order")
        if b == a:
            return 0.0
        cuts = np.concatenate(([a], self.times[(self.times > a) & (self.times < b)], [b]))
        return float(np.sum(self(cuts[:-1]) * np.diff(cuts)))

    @property
    def knots(self):
        """Knots as ``(time, value)`` pairs."""
        return list(zip(self.times.tolist(), self.values.tolist()))

    @staticmethod
    def constant(start: float, value: float) -> "StepFunction":
        return StepFunction(start, np.empty(0), np.empty(0), initial_value=value)

    @staticmethod
    def from_grid(start: float, grid, values) -> "StepFunction":
        """Build from grid-aligned values; ``grid[0]`` may equal ``start``."""
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.size and grid[0] == start:
            return StepFunction(start, grid[1:], values[1:], initial_value=float(values[0]))
        return StepFunction(start, grid, values, initial_value=float(values[0]) if values.size else 0.0)
