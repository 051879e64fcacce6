"""Folded-contour grid and the shared simplex trapezoid weights.

Grid points are indexed ``p = 0 .. 2L+1``. Indices ``0..L`` are the backward
branch ``-L dt .. 0-`` and ``L+1..2L+1`` the forward branch ``0+ .. L dt``.
The step between ``0-`` and ``0+`` has zero length.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class ContourGrid:
    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if int(self.n_steps) < 1:
            raise ValueError("n_steps must be >= 1")

    @property
    def n_points(self) -> int:
        return 2 * self.n_steps + 2

    @property
    def zero_minus(self) -> int:
        return self.n_steps

    @property
    def zero_plus(self) -> int:
        return self.n_steps + 1

    @cached_property
    def sign(self) -> np.ndarray:
        s = np.ones(self.n_points, dtype=np.int64)
        s[: self.n_steps + 1] = -1
        return s

    @cached_property
    def abs_index(self) -> np.ndarray:
        """|t_p| / dt as integers."""
        p = np.arange(self.n_points)
        return np.where(p <= self.n_steps, self.n_steps - p, p - self.n_steps - 1)

    @cached_property
    def times(self) -> np.ndarray:
        return self.sign * self.abs_index * self.dt

    @cached_property
    def spacing(self) -> np.ndarray:
        """Length of each step ``p -> p+1``."""
        h = np.full(self.n_points - 1, self.dt)
        h[self.n_steps] = 0.0
        return h

    def window(self, l: int) -> tuple[int, int]:
        """Grid indices of ``[-l dt, l dt]``; ``l = 0`` is ``[0-, 0+]``."""
        if not 0 <= l <= self.n_steps:
            raise ValueError(f"time index {l} outside grid of {self.n_steps} steps")
        return self.n_steps - l, self.n_steps + 1 + l

    def step_of_time(self, t: float) -> int:
        l = int(round(t / self.dt))
        if abs(l * self.dt - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= l <= self.n_steps:
            raise ValueError(f"time {t} is not on the grid")
        return l


def trapezoid_weight(h: np.ndarray, q: int, lo: int, hi: int) -> float:
    """Trapezoid weight of node ``q`` on the interval ``[lo, hi]``."""
    w = 0.0
    if q > lo:
        w += h[q - 1]
    if q < hi:
        w += h[q]
    return 0.5 * w


def simplex_weight(h: np.ndarray, nodes, lo: int, hi: int) -> float:
    """Iterated trapezoid weight of ``lo <= nodes[0] <= ... <= nodes[-1] <= hi``.

    Each coordinate is integrated with the trapezoid rule on
    ``[lo, next coordinate]``, which gives boundary weight one half on every
    simplex facet.
    """
    w = 1.0
    n = len(nodes)
    for m in range(n):
        upper = nodes[m + 1] if m + 1 < n else hi
        w *= trapezoid_weight(h, nodes[m], lo, upper)
        if w == 0.0:
            break
    return w


def sequence_weights(h: np.ndarray, positions: np.ndarray, lengths: np.ndarray,
                     lo: int, hi: int) -> np.ndarray:
    """Vectorised ``simplex_weight`` for padded rows of positions."""
    positions = np.asarray(positions)
    lengths = np.asarray(lengths)
    s = positions.shape[0]
    w = np.ones(s)
    if positions.shape[1] == 0:
        return w
    hp = np.concatenate([[0.0], h, [0.0]])
    for m in range(positions.shape[1]):
        active = lengths > m
        q = positions[:, m]
        nxt = positions[:, m + 1] if m + 1 < positions.shape[1] else np.full(s, hi)
        upper = np.where(lengths > m + 1, nxt, hi)
        left = np.where(q > lo, hp[np.clip(q, 0, len(h))], 0.0)
        right = np.where(q < upper, hp[np.clip(q + 1, 0, len(h) + 1)], 0.0)
        w = np.where(active, w * 0.5 * (left + right), w)
    return w
