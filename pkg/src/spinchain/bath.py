"""Harmonic bath: mode discretization, contour correlations and Wick pairings."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class SpectralDensity:
    """Ohmic-like density with exponential cutoff sampled by ``n_modes`` oscillators."""

    xi: float
    omega_c: float
    omega_max: float
    n_modes: int

    def __post_init__(self):
        if not self.omega_c > 0 or not self.omega_max > 0:
            raise ValueError("omega_c and omega_max must be positive")
        if int(self.n_modes) < 1:
            raise ValueError("n_modes must be >= 1")
        if self.xi < 0:
            raise ValueError("xi must be non-negative")


def discretize_modes(sd: SpectralDensity) -> tuple[np.ndarray, np.ndarray]:
    """Log-spaced frequencies and couplings of the discrete bath.

    Returns
    -------
    omega, c : ndarray
        ``omega_l = -omega_c ln(1 - l/L (1 - exp(-omega_max/omega_c)))`` and
        ``c_l = omega_l sqrt(xi omega_c / L (1 - exp(-omega_max/omega_c)))``
        for ``l = 1..L``.
    """
    n = int(sd.n_modes)
    l = np.arange(1, n + 1, dtype=float)
    a = -np.expm1(-sd.omega_max / sd.omega_c)
    omega = -sd.omega_c * np.log1p(-(l / n) * a)
    if n >= 1:
        omega[-1] = sd.omega_max
    c = omega * np.sqrt(sd.xi * sd.omega_c / n * a)
    return omega, c


def bstar(sd: SpectralDensity, beta: float, dtau) -> np.ndarray | complex:
    """Mode sum sum_l c_l^2/(2 w_l) [coth(beta w_l/2) cos(w_l dtau) - i sin(w_l dtau)]."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    omega, c = discretize_modes(sd)
    amp = c * c / (2.0 * omega)
    coth = 1.0 / np.tanh(0.5 * beta * omega)
    x = np.asarray(dtau, dtype=float)
    phase = np.multiply.outer(x, omega)
    val = (np.cos(phase) * (amp * coth)).sum(-1) - 1j * (np.sin(phase) * amp).sum(-1)
    if np.ndim(dtau) == 0:
        return complex(val)
    return val


def correlation(sd: SpectralDensity, beta: float, tau_i: float, tau_j: float,
                branch_i: int | None = None, branch_j: int | None = None) -> complex:
    """Two-point correlation B(tau_i, tau_j) on the folded contour, tau_i <= tau_j.

    Same-branch pairs take conj(B*), opposite-branch pairs take B*, with
    ``dtau = |tau_i| - |tau_j|``. ``branch_*`` (+1 / -1) disambiguates points
    sitting at zero; otherwise the sign of the time is used.
    """
    si = branch_i if branch_i is not None else (1 if tau_i > 0 else -1)
    sj = branch_j if branch_j is not None else (1 if tau_j > 0 else -1)
    b = bstar(sd, beta, abs(tau_i) - abs(tau_j))
    return b.conjugate() if si == sj else b


class CorrelationTable:
    """B* sampled on the integer lattice ``dtau = m dt`` for ``|m| <= 2 n_steps``.

    Parameters
    ----------
    sd : SpectralDensity
    beta : float
    dt : float
    n_steps : int
    """

    def __init__(self, sd: SpectralDensity, beta: float, dt: float, n_steps: int):
        self.sd = sd
        self.beta = float(beta)
        self.dt = float(dt)
        self.n_steps = int(n_steps)
        m = np.arange(-2 * self.n_steps, 2 * self.n_steps + 1)
        self.offsets = m
        self.samples = np.asarray(bstar(sd, beta, m * self.dt), dtype=complex).reshape(m.shape)
        # enforce the exact conjugate symmetry of the sum
        mid = 2 * self.n_steps
        self.samples[:mid] = np.conj(self.samples[mid + 1:][::-1])
        self.samples[mid] = self.samples[mid].real

    def bstar_at(self, m: int) -> complex:
        return complex(self.samples[int(m) + 2 * self.n_steps])

    def pair(self, abs_i: int, branch_i: int, abs_j: int, branch_j: int) -> complex:
        """Correlation between grid times ``branch * abs * dt``."""
        b = self.bstar_at(abs_i - abs_j)
        return b.conjugate() if branch_i == branch_j else b

    def matrix(self, abs_idx: np.ndarray, branch: np.ndarray) -> np.ndarray:
        """Dense matrix ``B[p, q]`` over grid points, valid for ``p <= q``."""
        abs_idx = np.asarray(abs_idx)
        branch = np.asarray(branch)
        b = self.samples[abs_idx[:, None] - abs_idx[None, :] + 2 * self.n_steps]
        same = branch[:, None] == branch[None, :]
        return np.where(same, np.conj(b), b)


def _matchings(items: tuple) -> list:
    if not items:
        return [()]
    first, rest = items[0], items[1:]
    out = []
    for k, partner in enumerate(rest):
        remaining = rest[:k] + rest[k + 1:]
        for sub in _matchings(remaining):
            out.append(((first, partner),) + sub)
    return out


@lru_cache(maxsize=None)
def enumerate_pairings(m: int) -> tuple:
    """All perfect matchings of {1..m} as tuples of (i, j) with i < j."""
    if m < 0:
        raise ValueError("m must be non-negative")
    if m % 2:
        return ()
    return tuple(_matchings(tuple(range(1, m + 1))))


def is_connected(pairing: Sequence, m: int | None = None) -> bool:
    """True when the arcs of ``pairing`` form one linked cluster.

    Two arcs are linked when they cross (``a < c < b < d``). Nested or disjoint
    arcs are reducible: they are already generated by the bold propagators of
    the sub-windows.
    """
    arcs = list(pairing)
    if not arcs:
        return False
    parent = list(range(len(arcs)))

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, (a, b) in enumerate(arcs):
        for j in range(i + 1, len(arcs)):
            c, d = arcs[j]
            if a < c < b < d or c < a < d < b:
                parent[root(i)] = root(j)
    return len({root(i) for i in range(len(arcs))}) == 1


@lru_cache(maxsize=None)
def enumerate_connected_pairings(m: int) -> tuple:
    if m < 2 or m % 2:
        raise ValueError("connected pairings need an even m >= 2")
    return tuple(q for q in enumerate_pairings(m) if is_connected(q))


def bath_influence(taus: Sequence, corr: Callable) -> complex:
    """Sum over all Wick pairings of products of ``corr(tau_i, tau_j)``."""
    m = len(taus)
    if m % 2:
        return 0.0j
    total = 0.0j
    for q in enumerate_pairings(m):
        prod = 1.0 + 0.0j
        for a, b in q:
            prod *= corr(taus[a - 1], taus[b - 1])
        total += prod
    return total


def connected_bath_influence(taus: Sequence, corr: Callable) -> complex:
    """Sum over connected pairings; ``taus`` includes the final point."""
    m = len(taus)
    total = 0.0j
    for q in enumerate_connected_pairings(m):
        prod = 1.0 + 0.0j
        for a, b in q:
            prod *= corr(taus[a - 1], taus[b - 1])
        total += prod
    return total
