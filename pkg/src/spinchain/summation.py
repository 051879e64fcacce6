"""Chain assembly from single-spin propagator tables.

Spins are absorbed left to right. After ``k`` spins the partial result is a
tensor train over spins ``1..k`` whose last bond is contracted with a carry
matrix indexed by the cross sequences of coupling ``k`` (the open right
edge). Absorbing spin ``k+1`` sums over the sequences of coupling ``k``
weighted by the simplex trapezoid rule, merging them with each right-edge
sequence of coupling ``k+1`` inside the propagator of spin ``k+1``.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import tensornet as tn
from .contour import ContourGrid, sequence_weights
from .errors import BudgetError
from .inchworm import PropagatorTable, Truncation, solve_tables, spin_labels, table_key
from .model import ChainConfig, coupling_factors, propagator, system_hamiltonian
from .sequences import enumerate_codes

ROW_CHUNK = 200_000
IDENTITY_VEC = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex)


@dataclass
class EdgeSequences:
    """Cross sequences of one coupling on the window ``[a, b]``."""

    positions: np.ndarray
    labels: np.ndarray
    lengths: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.lengths)


def edge_sequences(n_labels: int, grid: ContourGrid, l: int, n_bar: int) -> EdgeSequences:
    """Sequences with nonzero quadrature weight on ``[-l dt, l dt]``."""
    a, b = grid.window(l)
    codes, lengths = enumerate_codes(a, b, n_labels, n_bar if n_labels else 0)
    nl = max(n_labels, 1)
    pos = np.where(codes >= 0, codes // nl, -1)
    lab = np.where(codes >= 0, codes % nl, -1)
    w = sequence_weights(grid.spacing, pos, lengths, a, b)
    keep = w != 0.0
    return EdgeSequences(pos[keep], lab[keep], lengths[keep], w[keep])


@dataclass
class PartialChain:
    """Spins ``1..k`` absorbed; ``carry[:, j]`` closes the train for edge sequence ``j``.

    The carry already includes the quadrature weight of each edge sequence.
    """

    k: int
    sites: list
    phys: list
    carry: np.ndarray
    edge: EdgeSequences
    kind: str

    def entry(self, j: int) -> tn.TensorTrain:
        """Chain operator for right-edge sequence ``j`` (weight removed)."""
        cores = [c.copy() for c in self.sites]
        col = self.carry[:, j] / self.edge.weights[j]
        cores[-1] = np.tensordot(cores[-1], col, axes=([2], [0]))[:, :, None]
        return tn.TensorTrain(cores, self.phys, self.kind)


@dataclass
class ChainState:
    """Chain density (vector train) or dynamical map (operator train) at time ``t``."""

    t: float
    rho: tn.TensorTrain
    picture: str = "interaction"

    @property
    def kind(self) -> str:
        return "density" if self.rho.kind == "vector" else "map"

    def dense(self) -> np.ndarray:
        """``2^K x 2^K`` density, or ``4^K x 4^K`` site-ordered map."""
        if self.rho.kind == "operator":
            return tn.to_dense(self.rho)
        k = self.rho.n_sites
        t = tn.to_dense(self.rho).reshape([2] * (2 * k))
        order = list(range(0, 2 * k, 2)) + list(range(1, 2 * k, 2))
        return t.transpose(order).reshape(2 ** k, 2 ** k)

    def trace(self) -> complex:
        if self.rho.kind != "vector":
            raise ValueError("trace is defined for densities")
        return tn.contract_sites(self.rho, [IDENTITY_VEC] * self.rho.n_sites)


def _phys_of(table: PropagatorTable):
    return (4,) if table.mode == "density" else (4, 4)


def _flatten(vals: np.ndarray, mode: str) -> np.ndarray:
    """(rows, C, 2, 2) propagators -> (rows, P) site vectors / operators."""
    rows = vals.shape[0]
    if mode == "density":
        return vals.reshape(rows, 4)
    # element [out, in] with out = 2i + j and in = column index
    return vals.reshape(rows, 4, 4).transpose(0, 2, 1).reshape(rows, 16)


def _table_codes(edge: EdgeSequences, rows: np.ndarray, n: int, label_map, n_table: int):
    pos = edge.positions[rows, :n]
    lab = edge.labels[rows, :n]
    if n == 0:
        return pos, pos
    lmap = np.asarray(label_map, dtype=np.int64)
    return pos, pos * max(n_table, 1) + lmap[lab]


def _single_values(table, edge: EdgeSequences, label_map, a, b):
    """Propagators of an end spin for every edge sequence."""
    nb = edge.positions.shape[1]
    codes = np.full((len(edge), max(nb, 1)), -1, dtype=np.int64)
    if nb:
        lmap = np.asarray(label_map, dtype=np.int64) if len(label_map) else np.zeros(1, np.int64)
        valid = edge.positions >= 0
        codes[:, :nb] = np.where(valid, edge.positions * max(table.n_labels, 1)
                                 + lmap[np.clip(edge.labels, 0, None)], -1)
    return _flatten(table.window_values(a, b, codes, edge.lengths), table.mode)


def _shuffles(n1: int, n2: int) -> list:
    out = []
    for slots in itertools.combinations(range(n1 + n2), n1):
        src = []
        il = ir = 0
        for s in range(n1 + n2):
            if s in slots:
                src.append((0, il))
                il += 1
            else:
                src.append((1, ir))
                ir += 1
        out.append(src)
    return out


def merged_rows(left: EdgeSequences, lmap, right: EdgeSequences, rmap, n_table: int,
                n_bar: int, chunk: int = ROW_CHUNK):
    """Yield ``(i, j, codes, lengths, weight)`` blocks of merged sequences.

    Pairs with ``len(i) + len(j) > n_bar`` are skipped. Crosses of the two
    couplings sharing a grid point are averaged over all their interleavings;
    other pairs have a unique time-ordered merge.
    """
    width = max(n_bar, 1)
    for n1 in range(0, n_bar + 1):
        li = np.nonzero(left.lengths == n1)[0]
        if len(li) == 0:
            continue
        for n2 in range(0, n_bar - n1 + 1):
            rj = np.nonzero(right.lengths == n2)[0]
            if len(rj) == 0:
                continue
            step = max(1, chunk // len(rj))
            for start in range(0, len(li), step):
                ii = np.repeat(li[start:start + step], len(rj))
                jj = np.tile(rj, min(step, len(li) - start))
                lp, lc = _table_codes(left, ii, n1, lmap, n_table)
                rp, rc = _table_codes(right, jj, n2, rmap, n_table)
                n = n1 + n2
                rows = len(ii)
                if n == 0:
                    codes = np.full((rows, width), -1, dtype=np.int64)
                    yield ii, jj, codes, np.zeros(rows, np.int64), np.ones(rows)
                    continue
                pos = np.concatenate([lp, rp], axis=1)
                cod = np.concatenate([lc, rc], axis=1)
                side = np.concatenate([np.zeros_like(lp), np.ones_like(rp)], axis=1)
                order = np.argsort(pos * 2 + side, axis=1, kind="stable")
                base = np.take_along_axis(cod, order, axis=1)
                if n1 and n2:
                    tie = (lp[:, :, None] == rp[:, None, :]).any(axis=(1, 2))
                else:
                    tie = np.zeros(rows, dtype=bool)
                clean = ~tie
                codes = np.full((int(clean.sum()), width), -1, dtype=np.int64)
                codes[:, :n] = base[clean]
                yield ii[clean], jj[clean], codes, np.full(len(codes), n, np.int64), np.ones(len(codes))
                if not tie.any():
                    continue
                tl, tr = lc[tie], rc[tie]
                tlp, trp = lp[tie], rp[tie]
                cands, valid = [], []
                for pattern in _shuffles(n1, n2):
                    c = np.stack([(tl if s == 0 else tr)[:, k] for s, k in pattern], axis=1)
                    p = np.stack([(tlp if s == 0 else trp)[:, k] for s, k in pattern], axis=1)
                    cands.append(c)
                    valid.append(np.all(np.diff(p, axis=1) >= 0, axis=1))
                valid = np.stack(valid)
                count = valid.sum(axis=0)
                ti, tj = ii[tie], jj[tie]
                for c, ok in zip(cands, valid):
                    if not ok.any():
                        continue
                    codes = np.full((int(ok.sum()), width), -1, dtype=np.int64)
                    codes[:, :n] = c[ok]
                    yield ti[ok], tj[ok], codes, np.full(len(codes), n, np.int64), 1.0 / count[ok]


def _truncate(mat: np.ndarray, policy: tn.CompressionPolicy):
    """SVD split ``mat = U @ R`` with the eta budget applied to the discarded tail."""
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    keep = int(np.sum(s > 0.0)) or 1
    if policy.eta > 0.0:
        total = float(np.sum(s * s))
        tail = np.cumsum((s * s)[::-1])[::-1]
        budget = (policy.eta ** 2) * total * 0.98
        while keep > 1 and tail[keep - 1] <= budget:
            keep -= 1
    if policy.max_bond is not None:
        keep = min(keep, policy.max_bond)
    return u[:, :keep], s[:keep, None] * vh[:keep]


def seed_chain(table: PropagatorTable, label_map, n_labels: int, grid: ContourGrid, l: int,
               n_bar: int, policy: tn.CompressionPolicy | None = None) -> PartialChain:
    """Spin 1 with every cross sequence of coupling 1 on ``[-t, t]`` open."""
    policy = policy or tn.CompressionPolicy()
    a, b = grid.window(l)
    edge = edge_sequences(n_labels, grid, l, n_bar)
    vals = _single_values(table, edge, label_map, a, b)  # (S, P)
    mat = (vals * edge.weights[:, None]).T  # (P, S)
    u, carry = _truncate(mat, policy)
    phys = [_phys_of(table)]
    return PartialChain(1, [u.reshape(1, u.shape[0], u.shape[1])], phys, carry, edge,
                        "vector" if table.mode == "density" else "operator")


def absorb_spin(p: PartialChain, table: PropagatorTable, lmap, rmap, n_labels_right: int,
                grid: ContourGrid, l: int, n_bar: int,
                policy: tn.CompressionPolicy | None = None, counter: dict | None = None) -> PartialChain:
    """Contract a middle spin: sum over left-edge sequences, open its right edge."""
    policy = policy or tn.CompressionPolicy()
    a, b = grid.window(l)
    right = edge_sequences(n_labels_right, grid, l, n_bar)
    r = p.carry.shape[0]
    pdim = 4 if table.mode == "density" else 16
    acc = np.zeros((len(right), r * pdim), dtype=complex)
    for ii, jj, codes, lengths, w in merged_rows(p.edge, lmap, right, rmap, table.n_labels, n_bar):
        if len(ii) == 0:
            continue
        if counter is not None:
            counter["terms"] = counter.get("terms", 0) + len(ii)
        vals = _flatten(table.window_values(a, b, codes, lengths), table.mode)
        x = (p.carry[:, ii].T * w[:, None])[:, :, None] * vals[:, None, :]
        sel = sparse.csr_matrix((np.ones(len(jj)), (jj, np.arange(len(jj)))),
                                shape=(len(right), len(jj)))
        acc += sel @ x.reshape(len(ii), r * pdim)
    acc *= right.weights[:, None]
    mat = acc.T  # (r * P, S_right)
    u, carry = _truncate(mat, policy)
    sites = p.sites + [u.reshape(r, pdim, u.shape[1])]
    return PartialChain(p.k + 1, sites, p.phys + [_phys_of(table)], carry, right, p.kind)


def finalize_chain(p: PartialChain, table: PropagatorTable, lmap, grid: ContourGrid, l: int,
                   policy: tn.CompressionPolicy | None = None) -> ChainState:
    """Close the chain with the last spin."""
    a, b = grid.window(l)
    vals = _single_values(table, p.edge, lmap, a, b)  # (S, P)
    last = p.carry @ vals  # (r, P)
    cores = p.sites + [last[:, :, None]]
    rho = tn.TensorTrain(cores, p.phys + [_phys_of(table)], p.kind)
    if policy is not None and (policy.eta > 0 or policy.max_bond):
        rho = tn.compress(rho, policy)
    return ChainState(l * grid.dt, rho, "interaction")


def single_spin_state(table: PropagatorTable, grid: ContourGrid, l: int) -> ChainState:
    a, b = grid.window(l)
    vals = _flatten(table.window_values(a, b, np.full((1, 1), -1), np.zeros(1, np.int64)), table.mode)
    kind = "vector" if table.mode == "density" else "operator"
    rho = tn.TensorTrain([vals.reshape(1, -1, 1)], [_phys_of(table)], kind)
    return ChainState(l * grid.dt, rho, "interaction")


def site_rotation(unit, t: float) -> np.ndarray:
    """Superoperator ``U (x) conj(U)`` of the free spin evolution over ``t``."""
    u = propagator(system_hamiltonian(unit.spin), t)
    return np.kron(u, u.conj())


def to_schrodinger(cs: ChainState, chain: ChainConfig) -> ChainState:
    """Undo the per-spin interaction-picture rotation on the output side."""
    if cs.picture == "schrodinger":
        return cs
    cores = []
    for k, (c, unit) in enumerate(zip(cs.rho.cores, chain.units)):
        rot = site_rotation(unit, cs.t)
        if cs.rho.kind == "vector":
            cores.append(np.einsum("op,lpr->lor", rot, c))
        else:
            core = cs.rho.core(k)
            cores.append(np.einsum("op,lpir->loir", rot, core).reshape(c.shape))
    return ChainState(cs.t, tn.TensorTrain(cores, cs.rho.phys, cs.rho.kind), "schrodinger")


def observable(cs: ChainState, k: int, op: np.ndarray) -> complex:
    """``tr(O_k rho)``; the caller reports the real part."""
    if cs.rho.kind != "vector":
        raise ValueError("observables need a density state")
    covs = [IDENTITY_VEC] * cs.rho.n_sites
    covs = list(covs)
    covs[k] = np.asarray(op, dtype=complex).T.reshape(-1)
    return tn.contract_sites(cs.rho, covs)


class ChainTables:
    """Propagator tables for every spin, shared between identical spins."""

    def __init__(self, chain: ChainConfig, grid: ContourGrid, trunc: Truncation,
                 mode: str = "density", n_threads: int = 1, solver=None, cache_dir=None):
        self.chain = chain
        self.grid = grid
        self.trunc = trunc
        self.mode = mode
        k = chain.n_spins
        self.label_maps = []
        keys = []
        for i in range(k):
            left = chain.couplings[i - 1] if i > 0 else None
            right = chain.couplings[i] if i < k - 1 else None
            self.label_maps.append(spin_labels(left, right))
            keys.append((table_key(chain.units[i], left, right, grid, trunc, mode), left, right))
        unique = {}
        for i, (key, left, right) in enumerate(keys):
            unique.setdefault(key, (i, left, right))

        def build(item):
            key, (i, left, right) = item
            unit = chain.units[i]
            if cache_dir is not None and unit.bath.xi != 0.0:
                from .inchworm import load_table, save_table
                from pathlib import Path
                path = Path(cache_dir) / f"{key[:32]}.tbl"
                cached = load_table(path, unit, left, right, grid, trunc, mode, key)
                if cached is not None:
                    return key, cached
                table = solve_tables(unit, left, right, grid, trunc, mode, solver=solver)
                Path(cache_dir).mkdir(parents=True, exist_ok=True)
                save_table(table, path, key)
                return key, table
            return key, solve_tables(unit, left, right, grid, trunc, mode, solver=solver)

        items = list(unique.items())
        if n_threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=n_threads) as pool:
                built = dict(pool.map(build, items))
        else:
            built = dict(build(it) for it in items)
        self.tables = [built[key] for key, _, _ in keys]
        self.n_unique = len(built)

    @property
    def integrand_evaluations(self) -> int:
        seen = {}
        for t in self.tables:
            seen[id(t)] = t.count
        return int(sum(seen.values()))


def chain_state(tables: ChainTables, l: int, policy: tn.CompressionPolicy | None = None,
                counter: dict | None = None) -> ChainState:
    """Interaction-picture chain state at ``t = l dt``."""
    chain, grid, n_bar = tables.chain, tables.grid, tables.trunc.n_bar
    k = chain.n_spins
    if k == 1:
        return single_spin_state(tables.tables[0], grid, l)
    n_labels = [len(coupling_factors(c)) for c in chain.couplings]
    ops0, _, r0 = tables.label_maps[0]
    part = seed_chain(tables.tables[0], r0, n_labels[0], grid, l, n_bar, policy)
    for i in range(1, k - 1):
        _, lm, rm = tables.label_maps[i]
        part = absorb_spin(part, tables.tables[i], lm, rm, n_labels[i], grid, l, n_bar, policy,
                           counter)
    _, lm, _ = tables.label_maps[k - 1]
    return finalize_chain(part, tables.tables[k - 1], lm, grid, l, policy)


def evolve(chain: ChainConfig, grid: ContourGrid, trunc: Truncation,
           policy: tn.CompressionPolicy | None = None, mode: str = "density",
           steps=None, n_threads: int = 1, solver=None, cache_dir=None,
           tables: ChainTables | None = None) -> list:
    """Schrodinger-picture chain states at ``t = l dt`` for ``l`` in ``steps``."""
    if tables is None:
        tables = ChainTables(chain, grid, trunc, mode, n_threads, solver, cache_dir)
    steps = range(0, grid.n_steps + 1) if steps is None else steps
    return [to_schrodinger(chain_state(tables, l, policy), chain) for l in steps]


def check_budget(lengths_left: np.ndarray, lengths_right: np.ndarray, n_bar: int) -> None:
    if np.any(np.add.outer(lengths_left, lengths_right) > n_bar):
        raise BudgetError("cross budget exceeded")


def product_density_train(chain: ChainConfig) -> tn.TensorTrain:
    """Bond-1 train of the initial product density."""
    from .model import initial_reduced_density
    return tn.product_vector([initial_reduced_density(u).reshape(-1) for u in chain.units])
