"""Single-spin decorated propagators on every grid window and cross sequence.

The table for one spin holds ``Phi(a, s, b)`` for all windows ``[a, b]`` of the
contour grid and all cross sequences ``s`` with at most ``n_bar`` crosses inside
the window. Entries are produced by extending the window end one grid step at
a time with a Heun step, with the discontinuity rule when the end meets the
last cross and the jump rule at ``0- -> 0+``.

In density mode a single column propagates ``rho_s(0)``. In map mode four
columns propagate the basis matrices ``E_ab`` (column ``2a + b``) so that the
table yields the vectorised single-spin dynamical map.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import backend as _backend
from ._kernels_py import _kernel
from .bath import CorrelationTable, enumerate_connected_pairings
from .contour import ContourGrid
from .errors import DependencyError
from .model import (SIGMA_Z, CouplingSpec, SpinBosonUnit, coupling_factors,
                    initial_reduced_density, interaction_picture, system_hamiltonian)
from .sequences import SequenceRegistry

SQRT_MINUS_I = np.exp(-0.25j * np.pi)
SQRT_PLUS_I = np.exp(0.25j * np.pi)
CACHE_MAGIC = b"SPCHTBL\0"
CACHE_VERSION = 1


@dataclass(frozen=True)
class Truncation:
    """Kernel order cap ``m_bar`` (odd orders used) and cross cap ``n_bar``."""

    m_bar: int
    n_bar: int

    def __post_init__(self):
        if self.m_bar < 1:
            raise ValueError("m_bar must be >= 1")
        if self.n_bar < 0:
            raise ValueError("n_bar must be >= 0")


def spin_labels(left: CouplingSpec | None, right: CouplingSpec | None):
    """Distinct cross operators of one spin and the label maps of its couplings.

    Returns
    -------
    ops : list of ndarray
        Distinct single-spin factors ``sqrt(J) sigma``.
    left_map, right_map : list of int
        Table label of each term of the left / right coupling.
    """
    ops: list = []

    def find(v):
        for i, o in enumerate(ops):
            if np.array_equal(o, v):
                return i
        ops.append(v)
        return len(ops) - 1

    left_map = [find(v) for _, v in coupling_factors(left)] if left is not None else []
    right_map = [find(v) for _, v in coupling_factors(right)] if right is not None else []
    return ops, left_map, right_map


def basis_columns(mode: str, rho0: np.ndarray) -> np.ndarray:
    if mode == "density":
        return rho0[None].astype(complex)
    if mode == "map":
        cols = np.zeros((4, 2, 2), dtype=complex)
        for a in range(2):
            for b in range(2):
                cols[2 * a + b, a, b] = 1.0
        return cols
    raise ValueError(f"unknown mode {mode!r}")


def apply_discontinuity(phi: np.ndarray, v_interaction: np.ndarray, sign: int) -> np.ndarray:
    """Append a cross at the window end: ``sqrt(-i sgn) V_I(s_N) Phi``."""
    if sign == 0:
        raise ValueError("cross time must carry a branch sign")
    root = SQRT_MINUS_I if sign > 0 else SQRT_PLUS_I
    return root * (np.asarray(v_interaction) @ np.asarray(phi))


def apply_jump(phi: np.ndarray, rho0: np.ndarray) -> np.ndarray:
    """Cross the origin: ``Phi(., 0+) = rho_s(0) Phi(., 0-)``."""
    return np.asarray(rho0) @ np.asarray(phi)


class PropagatorTable:
    """Decorated propagators of one spin.

    Attributes
    ----------
    grid : ContourGrid
    ops : list of ndarray
        Cross operators indexed by table label.
    mode : str
        ``"density"`` or ``"map"``.
    free : bool
        Bath-free table; values are produced in closed form on demand.
    count : int
        Integrand evaluations spent building the table.
    """

    def __init__(self, unit, grid, trunc, ops, mode, free):
        self.unit = unit
        self.grid = grid
        self.trunc = trunc
        self.ops = ops
        self.mode = mode
        self.free = free
        n = grid.n_points
        h_s = system_hamiltonian(unit.spin)
        times = grid.times
        self.W = np.stack([interaction_picture(h_s, SIGMA_Z, t) for t in times])
        root = np.where(grid.sign > 0, SQRT_MINUS_I, SQRT_PLUS_I)
        if ops:
            self.V = np.stack([[root[p] * interaction_picture(h_s, o, times[p]) for o in ops]
                               for p in range(n)])
        else:
            self.V = np.zeros((n, 0, 2, 2), dtype=complex)
        self.rho0 = initial_reduced_density(unit)
        self.init = basis_columns(mode, self.rho0)
        self.ncol = self.init.shape[0]
        self.registry = None
        self.phi = None
        self.done = None
        self.count = 0

    @property
    def n_labels(self) -> int:
        return len(self.ops)

    def _allocate(self):
        n_bar = self.trunc.n_bar if self.ops else 0
        self.registry = SequenceRegistry(self.grid.n_points, self.n_labels, n_bar)
        self.phi = np.zeros((self.registry.n_entries, self.ncol, 2, 2), dtype=complex)
        self.done = np.zeros(self.registry.n_entries, dtype=np.uint8)

    def window_values(self, a: int, b: int, codes: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        """Propagators on ``[a, b]`` for padded rows of table codes.

        Returns an array of shape ``(rows, ncol, 2, 2)``.
        """
        codes = np.asarray(codes, dtype=np.int64)
        lengths = np.asarray(lengths, dtype=np.int64)
        if codes.ndim == 1:
            codes = codes.reshape(len(lengths), -1)
        if len(lengths) and lengths.max(initial=0) > self.trunc.n_bar:
            raise KeyError("sequence longer than the cross budget")
        if self.free:
            return self._free_values(a, b, codes, lengths)
        width = self.registry.codes.shape[1]
        if codes.shape[1] < width:
            pad = np.full((codes.shape[0], width - codes.shape[1]), -1, dtype=np.int64)
            codes = np.concatenate([codes, pad], axis=1)
        codes = codes[:, :max(width, 0)] if width else codes[:, :0]
        ids = self.registry.lookup(codes, lengths) if width else np.zeros(len(lengths), dtype=np.int64)
        if np.any(self.registry.p_first[ids] < a) or np.any(self.registry.p_last[ids] > b):
            raise KeyError("cross outside the requested window")
        ent = self.registry.entry_indices(ids, a, b)
        if not self.done[ent].all():
            raise DependencyError("requested propagator was never computed")
        return self.phi[ent]

    def _free_values(self, a, b, codes, lengths):
        zm, zp = self.grid.zero_minus, self.grid.zero_plus
        rows = len(lengths)
        nl = max(self.n_labels, 1)
        out = np.broadcast_to(np.eye(2, dtype=complex), (rows, self.ncol, 2, 2)).copy()
        has_zero = a <= zm and b >= zp
        pending = np.full(rows, has_zero)
        for j in range(codes.shape[1]):
            act = lengths > j
            if not act.any():
                continue
            p = codes[:, j] // nl
            if np.any(act & ((p < a) | (p > b))):
                raise KeyError("cross outside the requested window")
            jump = act & pending & (p >= zp)
            if jump.any():
                out[jump] = self.init[None] @ out[jump]
                pending &= ~jump
            idx = np.nonzero(act)[0]
            v = self.V[p[idx], codes[idx, j] % nl]
            out[idx] = v[:, None] @ out[idx]
        if pending.any():
            out[pending] = self.init[None] @ out[pending]
        return out

    def get(self, a: int, crosses=(), b: int | None = None) -> np.ndarray:
        """Single propagator for crosses given as ``(p, label)`` pairs."""
        crosses = list(crosses)
        nb = max(len(crosses), 1)
        row = np.full((1, nb), -1, dtype=np.int64)
        for i, (p, lab) in enumerate(crosses):
            row[0, i] = p * max(self.n_labels, 1) + lab
        val = self.window_values(a, b, row, np.array([len(crosses)]))[0]
        return val[0] if self.mode == "density" else val


def _pairing_tables(m_bar: int) -> dict:
    out = {}
    for m in range(1, m_bar + 1, 2):
        out[m] = [tuple((i - 1, j - 1) for i, j in q) for q in enumerate_connected_pairings(m + 1)]
    return out


def solve_tables(unit: SpinBosonUnit, left: CouplingSpec | None, right: CouplingSpec | None,
                 grid: ContourGrid, trunc: Truncation, mode: str = "density",
                 solver=None, free: bool | None = None) -> PropagatorTable:
    """Build the propagator table of one spin.

    Parameters
    ----------
    unit : SpinBosonUnit
    left, right : CouplingSpec or None
        Couplings to the neighbouring spins; their factors become the cross labels.
    grid : ContourGrid
    trunc : Truncation
    mode : {"density", "map"}
    solver : module, optional
        Backend module; defaults to the import-time choice.
    free : bool, optional
        Use closed-form bath-free propagators. Defaults to ``xi == 0``.

    Returns
    -------
    PropagatorTable
    """
    ops, _, _ = spin_labels(left, right)
    if free is None:
        free = unit.bath.xi == 0.0
    table = PropagatorTable(unit, grid, trunc, ops, mode, bool(free))
    if table.free:
        return table
    table._allocate()
    corr = CorrelationTable(unit.bath, unit.beta, grid.dt, grid.n_steps)
    bm = np.ascontiguousarray(corr.matrix(grid.abs_index, grid.sign))
    reg = table.registry
    solver = solver or _backend.get()
    table.count = solver.solve_levels(
        grid.n_points, grid.n_steps, np.ascontiguousarray(grid.spacing),
        grid.sign.astype(float), np.ascontiguousarray(table.W), np.ascontiguousarray(table.V),
        bm, np.ascontiguousarray(table.init), reg.lengths, np.ascontiguousarray(reg.positions),
        np.ascontiguousarray(reg.labels), np.ascontiguousarray(reg.slice_id), reg.p_first,
        reg.p_last, reg.entry_base, _pairing_tables(trunc.m_bar), trunc.m_bar,
        table.phi, table.done)
    table.correlation = bm
    return table


def kernel(table: PropagatorTable, a: int, crosses, f: int) -> np.ndarray:
    """Evaluate the kernel integral on ``[a, f]`` from an existing table."""
    if table.free:
        return np.zeros((table.ncol, 2, 2), dtype=complex)
    reg = table.registry
    s = reg.index(crosses)
    val, _ = _kernel(a, s, f, -1, table.grid.n_points, table.grid.spacing,
                     table.grid.sign.astype(float), table.W, table.correlation, reg.lengths,
                     reg.positions, reg.slice_id, reg.p_last, reg.entry_base,
                     _pairing_tables(table.trunc.m_bar), table.trunc.m_bar, table.phi, table.done)
    return val


def rho_from_table(table: PropagatorTable, t: float, crosses=()) -> np.ndarray:
    """Full-window propagator ``Phi(-t, crosses, t)``."""
    l = table.grid.step_of_time(t)
    a, b = table.grid.window(l)
    return table.get(a, crosses, b)


def table_key(unit: SpinBosonUnit, left, right, grid: ContourGrid, trunc: Truncation,
              mode: str) -> str:
    # tables depend on the couplings only through the distinct cross operators
    ops, _, _ = spin_labels(left, right)
    h = hashlib.sha256(repr((unit, grid.dt, grid.n_steps, trunc, mode, CACHE_VERSION)).encode())
    for o in ops:
        h.update(np.ascontiguousarray(o, dtype=complex).tobytes())
    return h.hexdigest()


def save_table(table: PropagatorTable, path, key: str) -> None:
    """Write a versioned header followed by flat ``(seq, a, b, values)`` records."""
    if table.free:
        raise ValueError("closed-form tables are not cached")
    reg = table.registry
    rec = np.zeros(reg.n_entries, dtype=[("seq", "<i8"), ("a", "<i4"), ("b", "<i4"),
                                         ("val", "<c16", (table.ncol, 4))])
    n = table.grid.n_points
    seq_of = np.repeat(np.arange(len(reg)), (reg.p_first + 1) * (n - reg.p_last))
    local = np.arange(reg.n_entries) - reg.entry_base[seq_of]
    width = n - reg.p_last[seq_of]
    rec["seq"] = seq_of
    rec["a"] = local // width
    rec["b"] = local % width + reg.p_last[seq_of]
    rec["val"] = table.phi.reshape(reg.n_entries, table.ncol, 4)
    valid = table.done.astype(bool)
    rec = rec[valid]
    header = json.dumps({"key": key, "records": int(len(rec)), "ncol": table.ncol,
                         "count": int(table.count)}).encode()
    with open(Path(path), "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<IQ", CACHE_VERSION, len(header)))
        fh.write(header)
        fh.write(rec.tobytes())


def load_table(path, unit, left, right, grid, trunc, mode, key: str) -> PropagatorTable | None:
    """Read a cached table; returns None when the file does not match ``key``."""
    path = Path(path)
    if not path.exists():
        return None
    with open(path, "rb") as fh:
        if fh.read(len(CACHE_MAGIC)) != CACHE_MAGIC:
            return None
        version, hlen = struct.unpack("<IQ", fh.read(12))
        if version != CACHE_VERSION:
            return None
        header = json.loads(fh.read(hlen))
        if header.get("key") != key:
            return None
        ops, _, _ = spin_labels(left, right)
        table = PropagatorTable(unit, grid, trunc, ops, mode, False)
        table._allocate()
        dtype = np.dtype([("seq", "<i8"), ("a", "<i4"), ("b", "<i4"),
                          ("val", "<c16", (table.ncol, 4))])
        rec = np.frombuffer(fh.read(), dtype=dtype, count=header["records"])
    ent = table.registry.entry_indices(rec["seq"], rec["a"].astype(np.int64), rec["b"].astype(np.int64))
    table.phi[ent] = rec["val"].reshape(-1, table.ncol, 2, 2)
    table.done[ent] = 1
    table.count = header["count"]
    corr = CorrelationTable(unit.bath, unit.beta, grid.dt, grid.n_steps)
    table.correlation = np.ascontiguousarray(corr.matrix(grid.abs_index, grid.sign))
    return table
