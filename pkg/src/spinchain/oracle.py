"""Brute-force references.

Nothing here reuses the quadrature, pairing or summation code of the main
modules; the point is to catch correlated mistakes.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy import integrate, linalg

from .bath import SpectralDensity, discretize_modes
from .model import (PAULI, ChainConfig, SpinBosonUnit, chain_hamiltonian, coupling_factors,
                    initial_reduced_density, system_hamiltonian)

MAX_DENSE_SPINS = 6


def _guard(k: int):
    if k > MAX_DENSE_SPINS:
        raise ValueError(f"dense oracle limited to {MAX_DENSE_SPINS} spins")


def initial_chain_density(chain: ChainConfig) -> np.ndarray:
    rho = np.ones((1, 1), dtype=complex)
    for u in chain.units:
        rho = np.kron(rho, initial_reduced_density(u))
    return rho


def unitary_chain_evolution(chain: ChainConfig, t: float) -> np.ndarray:
    """Closed-system density ``exp(-iHt) rho(0) exp(iHt)`` of the whole chain."""
    _guard(chain.n_spins)
    if any(u.bath.xi != 0.0 for u in chain.units):
        raise ValueError("unitary oracle requires decoupled baths (xi = 0)")
    h = chain_hamiltonian(chain)
    evals, evecs = np.linalg.eigh(h)
    u = evecs @ np.diag(np.exp(-1j * evals * t)) @ evecs.conj().T
    rho0 = initial_chain_density(chain)
    return u @ rho0 @ u.conj().T


def unitary_superoperator(chain: ChainConfig, t: float) -> np.ndarray:
    """Row-major vectorised map ``vec(rho) -> vec(U rho U^dag)`` on the chain.

    Index order follows the tensor-train convention: site ``k`` carries the
    pair ``(a_k, b_k)``.
    """
    _guard(chain.n_spins)
    k = chain.n_spins
    h = chain_hamiltonian(chain)
    u = linalg.expm(-1j * h * t)
    full = np.kron(u, u.conj())
    return permute_to_sites(full, k)


def permute_to_sites(op: np.ndarray, k: int) -> np.ndarray:
    """Reorder a superoperator from (a_1..a_K, b_1..b_K) to (a_1 b_1, ..., a_K b_K)."""
    t = op.reshape([2] * (4 * k))
    order = []
    for i in range(k):
        order += [i, k + i]
    order_out = order
    order_in = [2 * k + j for j in order]
    return t.transpose(order_out + order_in).reshape(4 ** k, 4 ** k)


def _correlation(omega, c, beta, ti, si, tj, sj):
    """B for contour-ordered ti <= tj; si/sj are branch signs."""
    x = abs(ti) - abs(tj)
    amp = c * c / (2.0 * omega)
    val = np.sum(amp * (np.cos(omega * x) / np.tanh(0.5 * beta * omega) - 1j * np.sin(omega * x)))
    return np.conj(val) if si == sj else val


def pairing_bruteforce(m: int) -> tuple[int, int]:
    """Counts of all and of connected perfect matchings of ``m`` points."""

    def rec(free):
        if not free:
            yield []
            return
        head = free[0]
        for i in range(1, len(free)):
            rest = free[1:i] + free[i + 1:]
            for tail in rec(rest):
                yield [(head, free[i])] + tail

    if m % 2:
        return 0, 0
    total = conn = 0
    for q in rec(list(range(m))):
        total += 1
        # reducible if some proper subset of arcs crosses nothing outside it
        k = len(q)
        reducible = False
        for mask in range(1, (1 << k) - 1):
            inside = [q[i] for i in range(k) if mask >> i & 1]
            outside = [q[i] for i in range(k) if not mask >> i & 1]
            if not any(_cross(x, y) for x in inside for y in outside):
                reducible = True
                break
        conn += not reducible
    return total, conn


def _cross(x, y):
    (a, b), (c, d) = sorted(x), sorted(y)
    return a < c < b < d or c < a < d < b


def _matchings(idx):
    if not idx:
        yield []
        return
    for i in range(1, len(idx)):
        for tail in _matchings(idx[1:i] + idx[i + 1:]):
            yield [(idx[0], idx[i])] + tail


def dyson_brute_force(unit: SpinBosonUnit, m_max: int, grid, t: float, crosses=(),
                      cross_ops=None) -> np.ndarray:
    """Direct nested-trapezoid Dyson series for one spin on ``[-t, t]``.

    Parameters
    ----------
    unit : SpinBosonUnit
    m_max : int
        Highest number of bath insertions (at most 4).
    grid : ContourGrid
        Only ``dt`` and ``n_steps`` are used.
    t : float
    crosses : sequence of (p, label), optional
        Fixed coupling insertions at grid indices (``0..2L+1``).
    cross_ops : list of ndarray, optional
        Operator of each label.

    Returns
    -------
    ndarray
        2x2 interaction-picture propagator including all bath orders <= m_max.
    """
    if m_max > 4:
        raise ValueError("brute-force Dyson limited to m_max <= 4")
    dt, n_steps = grid.dt, grid.n_steps
    l = int(round(t / dt))
    n = 2 * n_steps + 2
    lo, hi = n_steps - l, n_steps + 1 + l
    sign = [(-1 if p <= n_steps else 1) for p in range(n)]
    tval = [sign[p] * (n_steps - p if p <= n_steps else p - n_steps - 1) * dt for p in range(n)]
    hs = system_hamiltonian(unit.spin)

    def rot(op, tt):
        u = linalg.expm(1j * hs * abs(tt))
        return u @ op @ u.conj().T

    w_op = [rot(PAULI["z"], tval[p]) for p in range(n)]
    rho0 = initial_reduced_density(unit)
    omega, cpl = discretize_modes(unit.bath)
    steps = [0.0 if p == n_steps else dt for p in range(n - 1)]

    def trap(q, a, b):
        w = 0.0
        if q > a:
            w += steps[q - 1]
        if q < b:
            w += steps[q]
        return w / 2.0

    cross_list = []
    for p, lab in crosses:
        root = np.exp(-0.25j * np.pi) if sign[p] > 0 else np.exp(0.25j * np.pi)
        cross_list.append((p, root * rot(cross_ops[lab], tval[p])))

    total = np.zeros((2, 2), dtype=complex)
    for m in range(0, m_max + 1, 2):
        pairings = list(_matchings(list(range(m))))
        for taus in itertools.combinations_with_replacement(range(lo, hi + 1), m):
            wgt = 1.0
            for i in range(m - 1, -1, -1):
                upper = taus[i + 1] if i + 1 < m else hi
                wgt *= trap(taus[i], lo, upper)
            if wgt == 0.0:
                continue
            lb = 0.0j
            for q in pairings:
                prod = 1.0 + 0.0j
                for i, j in q:
                    pi, pj = taus[i], taus[j]
                    prod *= _correlation(omega, cpl, unit.beta, tval[pi], sign[pi], tval[pj], sign[pj])
                lb += prod
            # contour-ordered events; crosses precede a tau on the same point
            events = [(p, 0, op) for p, op in cross_list] + [(p, 1, w_op[p]) for p in taus]
            events.sort(key=lambda e: (e[0], e[1]))
            mat = np.eye(2, dtype=complex)
            placed = not (lo <= n_steps and hi >= n_steps + 1)
            for p, _, op in events:
                if not placed and p >= n_steps + 1:
                    mat = rho0 @ mat
                    placed = True
                mat = op @ mat
            if not placed:
                mat = rho0 @ mat
            sg = np.prod([sign[p] for p in taus]) if m else 1.0
            total += ((-1j) ** m) * sg * wgt * lb * mat
    return total


def bstar_continuum(sd: SpectralDensity, beta: float, dtau: float) -> complex:
    """Adaptive quadrature of B* for the continuous density (xi/2) w exp(-w/wc) on (0, w_max]."""

    def f_re(w):
        return 0.5 * sd.xi * w * np.exp(-w / sd.omega_c) * np.cos(w * dtau) / np.tanh(0.5 * beta * w)

    def f_im(w):
        return -0.5 * sd.xi * w * np.exp(-w / sd.omega_c) * np.sin(w * dtau)

    re, _ = integrate.quad(f_re, 0.0, sd.omega_max, limit=400, epsabs=1e-13, epsrel=1e-12)
    im, _ = integrate.quad(f_im, 0.0, sd.omega_max, limit=400, epsabs=1e-13, epsrel=1e-12)
    return complex(re, im)


def dense_summation(chain: ChainConfig, tables, t: float) -> np.ndarray:
    """Dense Kronecker mirror of the chain summation (interaction picture).

    Enumerates every cross sequence of every coupling explicitly and sums the
    product of single-spin propagators weighted by the nested trapezoid rule.
    Returns the ``2^K x 2^K`` density (density-mode tables) or the
    ``4^K x 4^K`` site-ordered map (map-mode tables).
    """
    k = chain.n_spins
    if k > 4:
        raise ValueError("dense summation limited to 4 spins")
    grid = tables[0].grid
    l = int(round(t / grid.dt))
    n_steps = grid.n_steps
    lo, hi = n_steps - l, n_steps + 1 + l
    steps = [0.0 if p == n_steps else grid.dt for p in range(grid.n_points - 1)]
    n_bar = tables[0].trunc.n_bar

    def trap(q, a, b):
        w = 0.0
        if q > a:
            w += steps[q - 1]
        if q < b:
            w += steps[q]
        return w / 2.0

    def sequences(n_labels, budget):
        out = [((), 1.0)]
        for nn in range(1, budget + 1 if n_labels else 1):
            for pos in itertools.combinations_with_replacement(range(lo, hi + 1), nn):
                w = 1.0
                for i in range(nn - 1, -1, -1):
                    upper = pos[i + 1] if i + 1 < nn else hi
                    w *= trap(pos[i], lo, upper)
                if w == 0.0:
                    continue
                for lab in itertools.product(range(n_labels), repeat=nn):
                    out.append((tuple(zip(pos, lab)), w))
        return out

    from .inchworm import spin_labels

    maps = []
    for i in range(k):
        left = chain.couplings[i - 1] if i > 0 else None
        right = chain.couplings[i] if i < k - 1 else None
        maps.append(spin_labels(left, right))
    seqs = [sequences(len(coupling_factors(c)), n_bar) for c in chain.couplings]

    def merged_value(i, left_seq, right_seq):
        ops, lmap, rmap = maps[i]
        a = [(p, lmap[al]) for p, al in left_seq]
        b = [(p, rmap[al]) for p, al in right_seq]
        # average over interleavings of crosses sharing a grid point
        vals = []
        for shuffle in _sorted_shuffles(a, b):
            vals.append(_as_matrix(tables[i].get(lo, shuffle, hi), tables[i].mode))
        return sum(vals) / len(vals)

    dim = 2 if tables[0].mode == "density" else 4
    total = np.zeros((dim ** k, dim ** k) if dim == 2 else (4 ** k, 4 ** k), dtype=complex)
    if k == 1:
        return _as_matrix(tables[0].get(lo, (), hi), tables[0].mode)
    for combo in itertools.product(*seqs):
        counts = [len(s) for s, _ in combo]
        if any(counts[j] + counts[j + 1] > n_bar for j in range(len(counts) - 1)):
            continue
        w = np.prod([wt for _, wt in combo])
        op = np.ones((1, 1), dtype=complex)
        for i in range(k):
            left = combo[i - 1][0] if i > 0 else ()
            right = combo[i][0] if i < k - 1 else ()
            op = np.kron(op, merged_value(i, left, right))
        total += w * op
    return total


def _as_matrix(val, mode):
    if mode == "density":
        return np.asarray(val)
    # columns are basis inputs 2a+b; rows are outputs 2c+d
    return np.asarray(val).reshape(4, 4).T


def _sorted_shuffles(a, b):
    n = len(a) + len(b)
    out = []
    for left_slots in itertools.combinations(range(n), len(a)):
        seq, ia, ib = [], 0, 0
        for i in range(n):
            if i in left_slots:
                seq.append(a[ia]); ia += 1
            else:
                seq.append(b[ib]); ib += 1
        if all(seq[i][0] <= seq[i + 1][0] for i in range(n - 1)):
            out.append(tuple(seq))
    return out
