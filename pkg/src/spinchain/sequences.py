"""Canonical enumeration of labelled cross sequences on the grid.

A cross is encoded as ``code = p * n_labels + alpha``. A sequence is a tuple of
codes with non-descending grid index ``p``; labels at one grid point may come
in any order. Sequences are stored padded with ``-1``.
"""
from __future__ import annotations

import itertools

import numpy as np


def sequence_keys(codes: np.ndarray, lengths: np.ndarray, base: int) -> np.ndarray:
    """Injective int64 key of padded code rows (``code + 1`` digits)."""
    codes = np.asarray(codes, dtype=np.int64)
    key = np.zeros(codes.shape[0], dtype=np.int64)
    mult = np.int64(1)
    for i in range(codes.shape[1]):
        digit = np.where(lengths > i, codes[:, i] + 1, 0)
        key += digit * mult
        mult = mult * np.int64(base)
    return key


def enumerate_codes(lo: int, hi: int, n_labels: int, n_bar: int, n_min: int = 0):
    """Padded code rows of all sequences with positions in ``[lo, hi]``.

    Returns
    -------
    codes : ndarray (S, n_bar) int64
    lengths : ndarray (S,) int64
    Rows are ordered by length, then position tuple, then labels.
    """
    width = max(n_bar, 0)
    blocks, lens = [], []
    if n_labels == 0:
        n_bar = 0
    for n in range(n_min, n_bar + 1):
        if n == 0:
            blocks.append(np.full((1, width), -1, dtype=np.int64))
            lens.append(np.zeros(1, dtype=np.int64))
            continue
        pos = np.array(list(itertools.combinations_with_replacement(range(lo, hi + 1), n)),
                       dtype=np.int64).reshape(-1, n)
        lab = np.array(list(itertools.product(range(n_labels), repeat=n)),
                       dtype=np.int64).reshape(-1, n)
        codes = (np.repeat(pos, len(lab), axis=0) * n_labels
                 + np.tile(lab, (len(pos), 1)))
        row = np.full((codes.shape[0], width), -1, dtype=np.int64)
        row[:, :n] = codes
        blocks.append(row)
        lens.append(np.full(codes.shape[0], n, dtype=np.int64))
    if not blocks:
        return np.zeros((0, width), dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(blocks), np.concatenate(lens)


class SequenceRegistry:
    """All sequences with at most ``n_bar`` crosses on ``n_points`` grid points.

    Parameters
    ----------
    n_points : int
    n_labels : int
    n_bar : int
    """

    def __init__(self, n_points: int, n_labels: int, n_bar: int):
        self.n_points = int(n_points)
        self.n_labels = int(n_labels)
        self.n_bar = int(n_bar) if n_labels > 0 else 0
        self.base = self.n_points * max(self.n_labels, 1) + 1
        if float(self.base) ** max(self.n_bar, 1) >= 2.0 ** 62:
            raise ValueError("sequence key overflow; reduce n_bar or grid size")
        self.codes, self.lengths = enumerate_codes(0, self.n_points - 1, self.n_labels, self.n_bar)
        nb = self.n_bar
        a = max(self.n_labels, 1)
        self.positions = np.where(self.codes >= 0, self.codes // a, -1)
        self.labels = np.where(self.codes >= 0, self.codes % a, -1)
        s = len(self.lengths)
        self.p_first = np.where(self.lengths > 0, self.positions[:, 0] if nb else 0,
                                self.n_points - 1).astype(np.int64)
        last_col = np.clip(self.lengths - 1, 0, None)
        self.p_last = np.where(self.lengths > 0,
                               self.positions[np.arange(s), last_col] if nb else 0,
                               0).astype(np.int64)
        self.keys = sequence_keys(self.codes, self.lengths, self.base)
        self._order = np.argsort(self.keys, kind="stable")
        self._sorted = self.keys[self._order]
        self.slice_id = self._slices()
        height = self.p_first + 1
        width = self.n_points - self.p_last
        sizes = height * width
        self.entry_base = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self.n_entries = int(sizes.sum())

    def __len__(self) -> int:
        return len(self.lengths)

    def lookup(self, codes: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        """Ids of padded code rows; raises if any sequence is unknown."""
        codes = np.asarray(codes, dtype=np.int64)
        if codes.ndim == 1:
            codes = codes[None, :]
        keys = sequence_keys(codes, np.asarray(lengths), self.base)
        pos = np.searchsorted(self._sorted, keys)
        pos = np.clip(pos, 0, len(self._sorted) - 1)
        if not np.all(self._sorted[pos] == keys):
            raise KeyError("sequence not present in registry")
        return self._order[pos]

    def index(self, crosses) -> int:
        """Id of a sequence given as an iterable of ``(p, label)`` pairs."""
        crosses = list(crosses)
        row = np.full((1, max(self.n_bar, 1)), -1, dtype=np.int64)
        for i, (p, a) in enumerate(crosses):
            row[0, i] = p * max(self.n_labels, 1) + a
        return int(self.lookup(row, np.array([len(crosses)]))[0])

    def _slices(self) -> np.ndarray:
        nb = self.n_bar
        s = len(self.lengths)
        out = np.full((s, nb + 1, nb + 1), -1, dtype=np.int64)
        empty = int(self.lookup(np.full((1, max(nb, 1)), -1), np.array([0]))[0]) if nb else 0
        for i in range(nb + 1):
            out[:, i, i] = empty
        for i in range(nb + 1):
            for j in range(i + 1, nb + 1):
                ok = self.lengths >= j
                if not ok.any():
                    continue
                sub = np.full((int(ok.sum()), nb), -1, dtype=np.int64)
                sub[:, : j - i] = self.codes[ok, i:j]
                out[ok, i, j] = self.lookup(sub, np.full(int(ok.sum()), j - i))
        if nb == 0:
            out[:, 0, 0] = 0
        return out

    def entry_index(self, seq: int, a: int, b: int) -> int:
        if a > self.p_first[seq] or b < self.p_last[seq] or a > b:
            raise KeyError(f"window [{a}, {b}] invalid for sequence {seq}")
        return int(self.entry_base[seq] + a * (self.n_points - self.p_last[seq])
                   + (b - self.p_last[seq]))

    def entry_indices(self, seqs: np.ndarray, a, b) -> np.ndarray:
        seqs = np.asarray(seqs)
        return (self.entry_base[seqs] + np.asarray(a) * (self.n_points - self.p_last[seqs])
                + (np.asarray(b) - self.p_last[seqs]))
