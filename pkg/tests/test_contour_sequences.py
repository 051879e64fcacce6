import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinchain.contour import ContourGrid, sequence_weights, simplex_weight, trapezoid_weight
from spinchain.sequences import SequenceRegistry, enumerate_codes, sequence_keys


class TestGrid:
    def test_layout(self):
        g = ContourGrid(0.1, 3)
        assert g.n_points == 8
        np.testing.assert_allclose(g.times, [-0.3, -0.2, -0.1, 0, 0, 0.1, 0.2, 0.3], atol=1e-15)
        np.testing.assert_array_equal(g.sign, [-1, -1, -1, -1, 1, 1, 1, 1])
        np.testing.assert_array_equal(g.abs_index, [3, 2, 1, 0, 0, 1, 2, 3])
        np.testing.assert_allclose(g.spacing, [0.1, 0.1, 0.1, 0.0, 0.1, 0.1, 0.1])

    def test_windows(self):
        g = ContourGrid(0.1, 3)
        assert g.window(0) == (3, 4)
        assert g.window(3) == (0, 7)
        with pytest.raises(ValueError):
            g.window(4)

    def test_step_of_time(self):
        g = ContourGrid(0.05, 20)
        assert g.step_of_time(0.35) == 7
        with pytest.raises(ValueError):
            g.step_of_time(0.33)


class TestWeights:
    def test_single_node(self):
        h = ContourGrid(0.1, 3).spacing
        assert trapezoid_weight(h, 0, 0, 7) == pytest.approx(0.05)
        assert trapezoid_weight(h, 3, 0, 7) == pytest.approx(0.05)
        assert trapezoid_weight(h, 2, 0, 7) == pytest.approx(0.1)

    @pytest.mark.parametrize("m,rel", [(1, 1e-12), (2, 1e-12), (3, 2e-2)])
    def test_simplex_volume(self, m, rel):
        # integrates a constant to (2t)^m / m!; exact while the inner integrands stay linear
        g = ContourGrid(0.1, 4)
        lo, hi = g.window(4)
        total = sum(simplex_weight(g.spacing, q, lo, hi)
                    for q in itertools.combinations_with_replacement(range(lo, hi + 1), m))
        assert total == pytest.approx(0.8 ** m / np.prod(range(1, m + 1)), rel=rel)

    def test_node_count(self):
        # nodes with nonzero weight over tau_1 <= tau_2 <= tau_3 in an l-step window: C(l+3, 3)
        h = np.full(10, 0.1)
        for l in (2, 5, 8):
            nodes = [q for q in itertools.combinations_with_replacement(range(0, l + 1), 3)]
            assert len(nodes) == comb(l + 3, 3)
            live = [q for q in nodes if simplex_weight(h, q, 0, l) > 0]
            # nodes on the lower facet tau_1 = ... = tau_3 = lo carry no weight
            assert 0 < len(live) < len(nodes)

    @given(st.integers(1, 4), st.integers(0, 3))
    def test_vectorised(self, l, nbar):
        g = ContourGrid(0.1, 4)
        lo, hi = g.window(l)
        codes, lengths = enumerate_codes(lo, hi, 1, nbar)
        w = sequence_weights(g.spacing, codes, lengths, lo, hi)
        for row, n, wv in zip(codes, lengths, w):
            assert wv == pytest.approx(simplex_weight(g.spacing, list(row[:n]), lo, hi), abs=1e-15)


class TestRegistry:
    def test_enumeration_counts(self):
        codes, lengths = enumerate_codes(2, 5, 3, 2)
        # 1 empty + 4*3 singles + C(5,2)*9 pairs
        assert len(lengths) == 1 + 12 + 10 * 9
        assert np.all(np.diff(lengths) >= 0)

    def test_keys_injective(self):
        codes, lengths = enumerate_codes(0, 5, 2, 3)
        keys = sequence_keys(codes, lengths, 13)
        assert len(np.unique(keys)) == len(keys)

    def test_lookup_roundtrip(self):
        reg = SequenceRegistry(8, 2, 2)
        ids = reg.lookup(reg.codes, reg.lengths)
        np.testing.assert_array_equal(ids, np.arange(len(reg)))
        assert reg.index([]) == 0
        assert reg.index([(3, 1), (5, 0)]) == reg.lookup(np.array([[7, 10]]), np.array([2]))[0]

    def test_missing_sequence(self):
        reg = SequenceRegistry(8, 2, 1)
        with pytest.raises(KeyError):
            reg.lookup(np.array([[99]]), np.array([1]))

    def test_entries_unique(self):
        reg = SequenceRegistry(6, 1, 2)
        seen = set()
        for s in range(len(reg)):
            for a in range(0, reg.p_first[s] + 1):
                for b in range(max(a, reg.p_last[s]), 6):
                    e = reg.entry_index(s, a, b)
                    assert e not in seen
                    seen.add(e)
        assert min(seen) == 0 and max(seen) < reg.n_entries
