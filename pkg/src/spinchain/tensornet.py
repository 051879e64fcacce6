"""Tensor trains for chain densities (vectors) and dynamical maps (operators).

Cores are stored as ``(r_left, P, r_right)`` arrays; ``phys[k]`` records the
physical shape of site ``k``: ``(d,)`` for vectors and ``(d_out, d_in)`` for
operators.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

VECTOR_SITE_GUARD = 12
OPERATOR_SITE_GUARD = 6
# margin kept below the eta budget so round-off cannot push the error over it
_BUDGET_SAFETY = 0.98


@dataclass(frozen=True)
class CompressionPolicy:
    """Relative Frobenius tolerance ``eta`` with an optional hard bond cap."""

    eta: float = 0.0
    max_bond: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.eta < 1.0:
            raise ValueError("eta must lie in [0, 1)")
        if self.max_bond is not None and self.max_bond < 1:
            raise ValueError("max_bond must be positive")


class TensorTrain:
    """Matrix-product state or operator.

    Parameters
    ----------
    cores : list of ndarray
        Site tensors of shape ``(r_left, P, r_right)``.
    phys : list of tuple
        Physical shape of each site.
    kind : {"vector", "operator"}
    """

    def __init__(self, cores: Sequence[np.ndarray], phys: Sequence[tuple], kind: str):
        if kind not in ("vector", "operator"):
            raise ValueError(f"unknown kind {kind!r}")
        self.cores = [np.asarray(c, dtype=complex) for c in cores]
        self.phys = [tuple(p) for p in phys]
        self.kind = kind
        if len(self.cores) != len(self.phys):
            raise ValueError("one physical shape per core required")
        for i, (c, p) in enumerate(zip(self.cores, self.phys)):
            if c.ndim != 3 or c.shape[1] != int(np.prod(p)):
                raise ValueError(f"core {i} has shape {c.shape}, physical {p}")
            if i and self.cores[i - 1].shape[2] != c.shape[0]:
                raise ValueError(f"bond mismatch between sites {i - 1} and {i}")
        if self.cores and (self.cores[0].shape[0] != 1 or self.cores[-1].shape[2] != 1):
            raise ValueError("boundary bonds must have dimension 1")

    @property
    def n_sites(self) -> int:
        return len(self.cores)

    @property
    def bond_dims(self) -> list:
        return [c.shape[2] for c in self.cores[:-1]]

    def copy(self) -> "TensorTrain":
        return TensorTrain([c.copy() for c in self.cores], self.phys, self.kind)

    def core(self, k: int) -> np.ndarray:
        """Site tensor with its physical indices unfolded."""
        c = self.cores[k]
        return c.reshape((c.shape[0],) + self.phys[k] + (c.shape[2],))

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __mul__(self, c):
        return scale(self, c)

    __rmul__ = __mul__

    def __repr__(self):
        return f"TensorTrain(kind={self.kind}, sites={self.n_sites}, bonds={self.bond_dims})"


def _site_dims(n_total: int, dims) -> list:
    if isinstance(dims, int):
        k = int(round(np.log(n_total) / np.log(dims)))
        if dims ** k != n_total:
            raise ValueError("size is not a power of the site dimension")
        return [dims] * k
    return list(dims)


def _tt_svd(tensor: np.ndarray, phys: list, kind: str) -> TensorTrain:
    dims = [int(np.prod(p)) for p in phys]
    cores = []
    rest = tensor.reshape(1, -1)
    r = 1
    for d in dims[:-1]:
        u, s, vh = np.linalg.svd(rest.reshape(r * d, -1), full_matrices=False)
        # numerical rank: drop singular values at roundoff level
        tol = max(rest.shape) * np.finfo(float).eps * (s[0] if len(s) else 0.0)
        keep = max(1, int(np.sum(s > tol)))
        cores.append(u[:, :keep].reshape(r, d, keep))
        rest = s[:keep, None] * vh[:keep]
        r = keep
    cores.append(rest.reshape(r, dims[-1], 1))
    return TensorTrain(cores, phys, kind)


def from_dense(tensor: np.ndarray, kind: str = "vector", dims=4) -> TensorTrain:
    """Exact tensor-train decomposition by successive SVDs.

    Parameters
    ----------
    tensor : ndarray
        Vector of length ``prod(d_k)`` or matrix ``(prod(d_out), prod(d_in))``.
    kind : {"vector", "operator"}
    dims : int or list
        Site dimension(s); for operators the same dims are used for input
        and output.
    """
    tensor = np.asarray(tensor, dtype=complex)
    if kind == "vector":
        flat = tensor.reshape(-1)
        d = _site_dims(flat.size, dims)
        if len(d) > VECTOR_SITE_GUARD:
            raise ValueError(f"vector trains from dense limited to {VECTOR_SITE_GUARD} sites")
        return _tt_svd(flat, [(x,) for x in d], "vector")
    if kind == "operator":
        if tensor.ndim != 2:
            raise ValueError("operator must be a matrix")
        d_out = _site_dims(tensor.shape[0], dims)
        d_in = _site_dims(tensor.shape[1], dims)
        k = len(d_out)
        if k > OPERATOR_SITE_GUARD:
            raise ValueError(f"operator trains from dense limited to {OPERATOR_SITE_GUARD} sites")
        t = tensor.reshape(d_out + d_in)
        order = [i for pair in zip(range(k), range(k, 2 * k)) for i in pair]
        t = t.transpose(order)
        return _tt_svd(t.reshape(-1), list(zip(d_out, d_in)), "operator")
    raise ValueError(f"unknown kind {kind!r}")


def to_dense(x: TensorTrain) -> np.ndarray:
    """Contract to a dense vector or matrix (site-major index order)."""
    out = np.ones((1, 1), dtype=complex)
    for c in x.cores:
        out = np.tensordot(out, c, axes=([1], [0])).reshape(-1, c.shape[2])
    flat = out.reshape(-1)
    if x.kind == "vector":
        return flat
    k = x.n_sites
    shape = [s for p in x.phys for s in p]
    t = flat.reshape(shape)
    order = list(range(0, 2 * k, 2)) + list(range(1, 2 * k, 2))
    t = t.transpose(order)
    d_out = int(np.prod([p[0] for p in x.phys]))
    return t.reshape(d_out, -1)


def zeros_like(x: TensorTrain) -> TensorTrain:
    return TensorTrain([np.zeros((1, c.shape[1], 1), dtype=complex) for c in x.cores],
                       x.phys, x.kind)


def identity_operator(n_sites: int, d: int = 4) -> TensorTrain:
    eye = np.eye(d, dtype=complex).reshape(1, d * d, 1)
    return TensorTrain([eye.copy() for _ in range(n_sites)], [(d, d)] * n_sites, "operator")


def product_vector(sites: Sequence[np.ndarray]) -> TensorTrain:
    sites = [np.asarray(s, dtype=complex).reshape(-1) for s in sites]
    return TensorTrain([s.reshape(1, -1, 1) for s in sites], [(len(s),) for s in sites], "vector")


def scale(x: TensorTrain, c: complex) -> TensorTrain:
    cores = [k.copy() for k in x.cores]
    cores[0] = cores[0] * c
    return TensorTrain(cores, x.phys, x.kind)


def add(a: TensorTrain, b: TensorTrain) -> TensorTrain:
    """Sum with block-structured cores; bonds add."""
    if a.kind != b.kind or a.phys != b.phys:
        raise ValueError("trains must share kind and physical shapes")
    k = a.n_sites
    if k == 1:
        return TensorTrain([a.cores[0] + b.cores[0]], a.phys, a.kind)
    cores = []
    for i, (x, y) in enumerate(zip(a.cores, b.cores)):
        p = x.shape[1]
        if i == 0:
            c = np.concatenate([x, y], axis=2)
        elif i == k - 1:
            c = np.concatenate([x, y], axis=0)
        else:
            c = np.zeros((x.shape[0] + y.shape[0], p, x.shape[2] + y.shape[2]), dtype=complex)
            c[: x.shape[0], :, : x.shape[2]] = x
            c[x.shape[0]:, :, x.shape[2]:] = y
        cores.append(c)
    return TensorTrain(cores, a.phys, a.kind)


def apply(op: TensorTrain, x: TensorTrain) -> TensorTrain:
    """Sitewise composition ``op @ x`` (operator-vector or operator-operator)."""
    if op.kind != "operator":
        raise ValueError("first argument must be an operator train")
    if op.n_sites != x.n_sites:
        raise ValueError("site count mismatch")
    cores, phys = [], []
    for k in range(op.n_sites):
        a = op.core(k)  # (ra, do, di, rb)
        if x.kind == "vector":
            b = x.core(k)  # (rl, di, rr)
            c = np.einsum("aoib,lir->alobr", a, b)
            ra, rl, do, rb, rr = a.shape[0], b.shape[0], a.shape[1], a.shape[3], b.shape[2]
            cores.append(c.reshape(ra * rl, do, rb * rr))
            phys.append((do,))
        else:
            b = x.core(k)  # (rl, dm, di, rr)
            c = np.einsum("aomb,lmir->aloibr", a, b)
            ra, rl, do, di = a.shape[0], b.shape[0], a.shape[1], b.shape[2]
            rb, rr = a.shape[3], b.shape[3]
            cores.append(c.reshape(ra * rl, do * di, rb * rr))
            phys.append((do, di))
    return TensorTrain(cores, phys, x.kind)


def _left_orthogonalize(cores: list) -> list:
    cores = [c.copy() for c in cores]
    for k in range(len(cores) - 1):
        rl, p, rr = cores[k].shape
        q, r = np.linalg.qr(cores[k].reshape(rl * p, rr))
        cores[k] = q.reshape(rl, p, q.shape[1])
        cores[k + 1] = np.tensordot(r, cores[k + 1], axes=([1], [0]))
    return cores


def frobenius_norm(x: TensorTrain) -> float:
    if x.n_sites == 0:
        return 0.0
    cores = _left_orthogonalize(x.cores)
    return float(np.linalg.norm(cores[-1]))


def max_bond(x: TensorTrain) -> int:
    return max(x.bond_dims, default=1)


def compress(x: TensorTrain, policy: CompressionPolicy | float = 0.0) -> TensorTrain:
    """Truncate bonds so that ``||x - result||_F <= eta ||x||_F``.

    A left-to-right QR sweep puts the train in left-canonical form; the
    right-to-left SVD sweep then discards the smallest singular values while
    the accumulated discarded weight stays within the global budget.
    ``max_bond`` (if set) is applied on top and may exceed the budget.
    """
    if not isinstance(policy, CompressionPolicy):
        policy = CompressionPolicy(float(policy))
    if x.n_sites == 0:
        return x
    cores = _left_orthogonalize(x.cores)
    norm = np.linalg.norm(cores[-1])
    if norm == 0.0:
        return zeros_like(x)
    budget = _BUDGET_SAFETY * (policy.eta * norm) ** 2
    spent = 0.0
    for k in range(len(cores) - 1, 0, -1):
        rl, p, rr = cores[k].shape
        u, s, vh = np.linalg.svd(cores[k].reshape(rl, p * rr), full_matrices=False)
        tail = np.cumsum((s * s)[::-1])[::-1]  # tail[i] = sum_{j >= i} s_j^2
        keep = len(s)
        while keep > 1 and spent + tail[keep - 1] <= budget:
            keep -= 1
        # drop exact zeros even with eta = 0
        while keep > 1 and s[keep - 1] == 0.0:
            keep -= 1
        if policy.max_bond is not None:
            keep = min(keep, policy.max_bond)
        spent += float(np.sum(s[keep:] ** 2))
        cores[k] = vh[:keep].reshape(keep, p, rr)
        cores[k - 1] = np.tensordot(cores[k - 1], u[:, :keep] * s[:keep], axes=([2], [0]))
    return TensorTrain(cores, x.phys, x.kind)


def kron_extend(x: TensorTrain | None, site: np.ndarray, kind: str | None = None) -> TensorTrain:
    """Append one site joined by a bond of dimension one (tensor product)."""
    site = np.asarray(site, dtype=complex)
    if kind is None:
        kind = x.kind if x is not None else ("operator" if site.ndim == 2 else "vector")
    phys = site.shape if kind == "operator" else (site.size,)
    core = site.reshape(1, -1, 1)
    if x is None or x.n_sites == 0:
        return TensorTrain([core], [phys], kind)
    if x.kind != kind:
        raise ValueError("site kind does not match the train")
    return TensorTrain(x.cores + [core], x.phys + [phys], kind)


def inner(x: TensorTrain, y: TensorTrain) -> complex:
    """``<x, y>`` with complex conjugation of ``x``."""
    env = np.ones((1, 1), dtype=complex)
    for a, b in zip(x.cores, y.cores):
        env = np.einsum("ab,apc,bpd->cd", env, a.conj(), b)
    return complex(env[0, 0])


def contract_sites(x: TensorTrain, vectors: Sequence[np.ndarray]) -> complex:
    """Full contraction of a vector train with one covector per site."""
    env = np.ones(1, dtype=complex)
    for c, v in zip(x.cores, vectors):
        env = env @ np.tensordot(c, np.asarray(v, dtype=complex), axes=([1], [0]))
    return complex(env[0])


def element_count(x: TensorTrain) -> int:
    return int(sum(c.size for c in x.cores))
