"""Transfer tensors: memory-truncated propagation of chain dynamical maps.

Everything here accepts either dense ``ndarray`` superoperators (and
vectorised densities) or tensor trains with the site ordering used by
:mod:`spinchain.summation`.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import tensornet as tn
from .contour import ContourGrid
from .inchworm import Truncation
from .model import ChainConfig
from .summation import ChainTables, chain_state, to_schrodinger


@dataclass
class DynamicalMap:
    n: int
    map: object
    dt_ttm: float


@dataclass
class TransferTensorSet:
    tensors: list
    dt_ttm: float

    @property
    def k_max(self) -> int:
        return len(self.tensors)


@dataclass
class StepDiagnostics:
    step: int
    frobenius_T: float
    max_bond_E: int
    max_bond_T: int
    trace_re: float
    trace_im: float


@dataclass
class Trajectory:
    states: list
    diagnostics: list = field(default_factory=list)


def _is_tt(x) -> bool:
    return isinstance(x, tn.TensorTrain)


def _compose(a, b):
    return tn.apply(a, b) if _is_tt(a) else a @ b


def _sub(a, b):
    return tn.add(a, tn.scale(b, -1.0)) if _is_tt(a) else a - b


def _norm(x) -> float:
    return tn.frobenius_norm(x) if _is_tt(x) else float(np.linalg.norm(x))


def _bond(x) -> int:
    return tn.max_bond(x) if _is_tt(x) else 1


def _maybe_compress(x, policy):
    if policy is None or not _is_tt(x):
        return x
    return tn.compress(x, policy)


def dynamical_maps(chain: ChainConfig, grid: ContourGrid, trunc: Truncation,
                   policy: tn.CompressionPolicy | None, n_max: int, stride: int = 1,
                   n_threads: int = 1, solver=None, cache_dir=None,
                   tables: ChainTables | None = None) -> list:
    """Schrodinger-picture maps ``E_0..E_{n_max}`` on the step ``stride * dt``.

    Maps are subsampled from the summation grid; ``n_max * stride`` must not
    exceed the grid length.
    """
    if stride < 1:
        raise ValueError("stride must be a positive integer")
    if n_max * stride > grid.n_steps:
        raise ValueError("grid too short for the requested maps")
    if tables is None:
        tables = ChainTables(chain, grid, trunc, "map", n_threads, solver, cache_dir)
    elif tables.mode != "map":
        raise ValueError("dynamical maps need map-mode tables")
    out = []
    for n in range(n_max + 1):
        cs = to_schrodinger(chain_state(tables, n * stride, policy), chain)
        op = cs.rho if policy is None else tn.compress(cs.rho, policy)
        out.append(DynamicalMap(n, op, stride * grid.dt))
    return out


def extract_transfer(maps, k_max: int | None = None,
                     policy: tn.CompressionPolicy | None = None) -> TransferTensorSet:
    """Solve ``E_k = sum_{m<k} T_{k-m} E_m`` forward for ``T_1..T_{k_max}``."""
    ops = [m.map if isinstance(m, DynamicalMap) else m for m in maps]
    dt = maps[0].dt_ttm if isinstance(maps[0], DynamicalMap) else 1.0
    k_max = len(ops) - 1 if k_max is None else k_max
    if k_max < 1 or len(ops) < k_max + 1:
        raise ValueError("maps must cover n = 0..k_max")
    ts = []
    for k in range(1, k_max + 1):
        acc = ops[k]
        for m in range(1, k):
            acc = _maybe_compress(_sub(acc, _compose(ts[k - m - 1], ops[m])), policy)
        ts.append(acc)
    return TransferTensorSet(ts, dt)


def reconstruct(tts: TransferTensorSet, maps, k: int):
    """``sum_{m=0}^{k-1} T_{k-m} E_m``."""
    ops = [m.map if isinstance(m, DynamicalMap) else m for m in maps]
    total = None
    for m in range(k):
        term = _compose(tts.tensors[k - m - 1], ops[m])
        total = term if total is None else (tn.add(total, term) if _is_tt(term) else total + term)
    return total


def propagate(tts: TransferTensorSet, history, steps: int,
              policy: tn.CompressionPolicy | None = None) -> Trajectory:
    """Extend ``history`` (states ``rho_0..rho_h``) to ``steps`` total steps.

    ``rho_m = sum_{k=1}^{K} T_k rho_{m-k}`` for every ``m > h``; terms with
    ``m - k < 0`` are absent. States may be dense vectors or vector trains.
    """
    history = list(history)
    if not history:
        raise ValueError("empty history")
    kmax = tts.k_max
    buf = deque(history[-kmax:], maxlen=kmax) if kmax else deque(maxlen=1)
    states = list(history)
    diags = []
    t_norm = sum(_norm(t) for t in tts.tensors)
    t_bond = max((_bond(t) for t in tts.tensors), default=0)
    for m in range(len(history), steps + 1):
        new = None
        recent = list(buf)[::-1]  # recent[0] = rho_{m-1}
        for k in range(1, min(kmax, len(recent)) + 1):
            term = _compose(tts.tensors[k - 1], recent[k - 1])
            new = term if new is None else (tn.add(new, term) if _is_tt(term) else new + term)
        if new is None:
            new = tn.scale(history[0], 0.0) if _is_tt(history[0]) else np.zeros_like(history[0])
        new = _maybe_compress(new, policy)
        states.append(new)
        buf.append(new)
        tr = _trace(new)
        diags.append(StepDiagnostics(m, t_norm, _bond(new), t_bond, tr.real, tr.imag))
    return Trajectory(states, diags)


def _trace(x) -> complex:
    if _is_tt(x):
        ident = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex)
        return tn.contract_sites(x, [ident] * x.n_sites)
    k = int(round(np.log(x.size) / np.log(4)))
    ident = np.array([1.0, 0.0, 0.0, 1.0])
    vec = np.ones(1)
    for _ in range(k):
        vec = np.kron(vec, ident)
    return complex(vec @ x)


def transfer_norm_decay(tts: TransferTensorSet) -> list:
    """Frobenius norm of each transfer tensor."""
    return [_norm(t) for t in tts.tensors]


def apply_map(op, rho):
    return _compose(op, rho)


def markovian_family(e1: np.ndarray, n: int) -> list:
    """``E_k = E_1^k`` for ``k = 0..n`` (dense)."""
    out = [np.eye(e1.shape[0], dtype=complex)]
    for _ in range(n):
        out.append(e1 @ out[-1])
    return out
