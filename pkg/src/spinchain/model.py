"""Chain Hamiltonian pieces, coupling factorization and interaction-picture operators.

Conventions
-----------
sigma_z = diag(1, -1), sigma_x = [[0, 1], [1, 0]], sigma_y = [[0, -1j], [1j, 0]].
Basis states |+1> = (1, 0) and |-1> = (0, 1).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bath import SpectralDensity

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


@dataclass(frozen=True)
class SpinParams:
    """Bias ``epsilon`` and tunneling ``delta`` of one spin."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and np.isfinite(self.delta)):
            raise ValueError("spin parameters must be finite")


@dataclass(frozen=True)
class CouplingTerm:
    label: str
    strength: float
    axis: str

    def __post_init__(self):
        if self.axis not in PAULI:
            raise ValueError(f"unknown axis {self.axis!r}")
        if not np.isfinite(self.strength):
            raise ValueError(f"non-finite coupling strength for {self.label!r}")


@dataclass(frozen=True)
class CouplingSpec:
    """Nearest-neighbour coupling sum_a J_a sigma_a (x) sigma_a."""

    terms: tuple = ()

    def __post_init__(self):
        terms = tuple(t if isinstance(t, CouplingTerm) else CouplingTerm(*t) for t in self.terms)
        labels = [t.label for t in terms]
        if len(set(labels)) != len(labels):
            raise ValueError("coupling labels must be distinct")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def heisenberg(cls, jx: float = 0.0, jy: float = 0.0, jz: float = 0.0) -> "CouplingSpec":
        """Build from axis strengths, dropping zero terms."""
        terms = [(ax, j, ax) for ax, j in (("x", jx), ("y", jy), ("z", jz)) if j != 0.0]
        return cls(tuple(terms))

    @property
    def labels(self) -> list:
        return [t.label for t in self.terms]


@dataclass(frozen=True)
class SpinBosonUnit:
    """One spin with its own harmonic bath and initial pure state."""

    spin: SpinParams
    bath: SpectralDensity
    beta: float
    initial_state: tuple = (1.0, 0.0)

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        psi = np.asarray(self.initial_state, dtype=complex)
        if psi.shape != (2,):
            raise ValueError("initial state must be a 2-vector")
        if abs(np.vdot(psi, psi).real - 1.0) > 1e-12:
            raise ValueError("initial state is not normalized")
        object.__setattr__(self, "initial_state", tuple(complex(z) for z in psi))


@dataclass(frozen=True)
class ChainConfig:
    units: tuple
    couplings: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        object.__setattr__(self, "couplings", tuple(self.couplings))
        if len(self.units) < 1:
            raise ValueError("chain needs at least one spin")
        if len(self.couplings) != len(self.units) - 1:
            raise ValueError(
                f"expected {len(self.units) - 1} couplings, got {len(self.couplings)}")

    @property
    def n_spins(self) -> int:
        return len(self.units)


def system_hamiltonian(p: SpinParams) -> np.ndarray:
    """Return ``epsilon * sigma_z + delta * sigma_x``."""
    return p.epsilon * SIGMA_Z + p.delta * SIGMA_X


def pauli_decompose(h: np.ndarray) -> tuple:
    """Coefficients (h0, hx, hy, hz) with h = h0 I + h.sigma."""
    h = np.asarray(h, dtype=complex)
    h0 = 0.5 * (h[0, 0] + h[1, 1])
    hx = 0.5 * (h[0, 1] + h[1, 0])
    hy = 0.5j * (h[0, 1] - h[1, 0])
    hz = 0.5 * (h[0, 0] - h[1, 1])
    return h0, hx, hy, hz


def propagator(h: np.ndarray, t: float) -> np.ndarray:
    """Closed form of exp(-i h t) for a 2x2 Hermitian ``h``."""
    h0, hx, hy, hz = (c.real for c in pauli_decompose(h))
    r = np.sqrt(hx * hx + hy * hy + hz * hz)
    c = np.cos(r * t)
    # sin(rt)/r with the r -> 0 limit
    s = np.sin(r * t) / r if r > 1e-300 else t
    u = c * SIGMA_I - 1j * s * (hx * SIGMA_X + hy * SIGMA_Y + hz * SIGMA_Z)
    return np.exp(-1j * h0 * t) * u


def interaction_picture(h: np.ndarray, o: np.ndarray, t: float) -> np.ndarray:
    """Return exp(i h |t|) o exp(-i h |t|).

    The absolute value reflects the folded contour: both branches see the
    same rotation.
    """
    u = propagator(h, abs(t))
    return u.conj().T @ np.asarray(o, dtype=complex) @ u


def coupling_factors(c: CouplingSpec) -> list:
    """Split each term into identical single-spin factors ``sqrt(J) sigma``.

    Returns a list of ``(label, V)`` pairs; the principal square root is used
    for negative strengths.
    """
    out = []
    for term in c.terms:
        if not np.isfinite(term.strength):
            raise ValueError(f"non-finite strength for {term.label!r}")
        out.append((term.label, np.sqrt(complex(term.strength)) * PAULI[term.axis]))
    return out


def dense_coupling(c: CouplingSpec) -> np.ndarray:
    """4x4 matrix sum_a J_a sigma_a (x) sigma_a."""
    v = np.zeros((4, 4), dtype=complex)
    for term in c.terms:
        v += term.strength * np.kron(PAULI[term.axis], PAULI[term.axis])
    return v


def initial_reduced_density(u: SpinBosonUnit) -> np.ndarray:
    psi = np.asarray(u.initial_state, dtype=complex)
    if abs(np.vdot(psi, psi).real - 1.0) > 1e-12:
        raise ValueError("initial state is not normalized")
    return np.outer(psi, psi.conj())


def chain_hamiltonian(chain: ChainConfig) -> np.ndarray:
    """Dense system Hamiltonian of the whole chain (no bath)."""
    k = chain.n_spins
    dim = 2 ** k
    h = np.zeros((dim, dim), dtype=complex)
    for i, u in enumerate(chain.units):
        h += _embed(system_hamiltonian(u.spin), i, 1, k)
    for i, c in enumerate(chain.couplings):
        h += _embed(dense_coupling(c), i, 2, k)
    return h


def _embed(op: np.ndarray, start: int, width: int, k: int) -> np.ndarray:
    left = np.eye(2 ** start)
    right = np.eye(2 ** (k - start - width))
    return np.kron(np.kron(left, op), right)


def product_density(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out
