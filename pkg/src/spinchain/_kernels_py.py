"""Pure numpy implementation of the table solver.

Same signature and results as the compiled ``_kernels`` module; used when the
extension is unavailable or ``SPINCHAIN_PURE_PYTHON`` is set.
"""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from .errors import DependencyError, NonFiniteError


@lru_cache(maxsize=4096)
def _nodes(a: int, f: int, m: int) -> np.ndarray:
    return np.array(list(itertools.combinations_with_replacement(range(a, f + 1), m)),
                    dtype=np.int64).reshape(-1, m)


def _node_weights(h: np.ndarray, nodes: np.ndarray, a: int, f: int) -> np.ndarray:
    hp = np.concatenate([[0.0], h, [0.0]])
    w = np.ones(nodes.shape[0])
    m = nodes.shape[1]
    for i in range(m):
        q = nodes[:, i]
        upper = nodes[:, i + 1] if i + 1 < m else np.full_like(q, f)
        left = np.where(q > a, hp[q], 0.0)
        right = np.where(q < upper, hp[q + 1], 0.0)
        w *= 0.5 * (left + right)
    return w


def _kernel(a, s, f, cur, n, h, sgn, W, Bm, seq_len, seq_p, slice_id, p_last,
            entry_base, pairings, mbar, phi, done):
    nseq = int(seq_len[s])
    pos = seq_p[s, :nseq]
    c = phi.shape[1]
    acc = np.zeros((c, 2, 2), dtype=complex)
    count = 0
    if f == a:
        return acc, 0
    for m in range(1, mbar + 1, 2):
        nodes = _nodes(a, f, m)
        w = _node_weights(h, nodes, a, f)
        keep = w != 0.0
        nodes, w = nodes[keep], w[keep]
        if len(w) == 0:
            continue
        count += len(w)
        k = np.searchsorted(pos, nodes, side="right") if nseq else np.zeros_like(nodes)
        lo_t = np.concatenate([np.full((len(w), 1), a), nodes], axis=1)
        hi_t = np.concatenate([nodes, np.full((len(w), 1), f)], axis=1)
        lo_k = np.concatenate([np.zeros((len(w), 1), dtype=np.int64), k], axis=1)
        hi_k = np.concatenate([k, np.full((len(w), 1), nseq)], axis=1)
        ss = slice_id[s, lo_k, hi_k]
        ent = entry_base[ss] + lo_t * (n - p_last[ss]) + (hi_t - p_last[ss])
        ok = done[ent].astype(bool) | (ent == cur)
        if not ok.all():
            raise DependencyError(f"missing table entry while extending window [{a}, {f}]")
        x = phi[ent[:, 0]]
        for i in range(m):
            x = W[nodes[:, i]][:, None] @ x
            x = phi[ent[:, i + 1]] @ x
        pts = np.concatenate([nodes, np.full((len(w), 1), f)], axis=1)
        lc = np.zeros(len(w), dtype=complex)
        for q in pairings[m]:
            prod = np.ones(len(w), dtype=complex)
            for i, j in q:
                prod = prod * Bm[pts[:, i], pts[:, j]]
            lc += prod
        sign = np.prod(sgn[nodes], axis=1) * sgn[f]
        coef = -1.0 if ((m + 1) // 2) % 2 else 1.0
        scal = coef * w * sign * lc
        acc += np.einsum("n,ncij->cij", scal, x)
    return W[f][None] @ acc, count


def solve_levels(n, n_steps, h, sgn, W, V, Bm, init, seq_len, seq_p, seq_a, slice_id,
                 p_first, p_last, entry_base, pairings, mbar, phi, done, n_threads=1):
    """Fill ``phi`` for every window and sequence, shortest windows first.

    Returns the number of integrand evaluations.
    """
    zm = n_steps
    zp = n_steps + 1
    eye = np.eye(2, dtype=complex)
    nseqs = len(seq_len)
    count = 0
    width = n - p_last
    for lvl in range(n):
        for a in range(n - lvl):
            b = a + lvl
            for s in range(nseqs):
                if p_first[s] < a or p_last[s] > b:
                    continue
                ns = seq_len[s]
                cur = entry_base[s] + a * width[s] + (b - p_last[s])
                if ns > 0 and b == p_last[s]:
                    d = slice_id[s, 0, ns - 1]
                    src = entry_base[d] + a * width[d] + (b - p_last[d])
                    if not done[src]:
                        raise DependencyError(f"missing entry for discontinuity at [{a}, {b}]")
                    phi[cur] = V[b, seq_a[s, ns - 1]][None] @ phi[src]
                elif ns == 0 and a == b:
                    phi[cur] = eye
                elif b == zp and a <= zm:
                    src = entry_base[s] + a * width[s] + (zm - p_last[s])
                    phi[cur] = init @ phi[src]
                else:
                    prev = entry_base[s] + a * width[s] + (b - 1 - p_last[s])
                    step = h[b - 1]
                    k0, c0 = _kernel(a, s, b - 1, cur, n, h, sgn, W, Bm, seq_len, seq_p,
                                     slice_id, p_last, entry_base, pairings, mbar, phi, done)
                    base = phi[prev].copy()
                    phi[cur] = base + step * k0
                    k1, c1 = _kernel(a, s, b, cur, n, h, sgn, W, Bm, seq_len, seq_p,
                                     slice_id, p_last, entry_base, pairings, mbar, phi, done)
                    phi[cur] = base + 0.5 * step * (k0 + k1)
                    count += c0 + c1
                if not np.all(np.isfinite(phi[cur])):
                    raise NonFiniteError(f"non-finite propagator on window [{a}, {b}], sequence {s}")
                done[cur] = 1
    return count
