import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinchain import oracle
from spinchain.bath import (CorrelationTable, SpectralDensity, bath_influence, bstar,
                            connected_bath_influence, correlation, discretize_modes,
                            enumerate_connected_pairings, enumerate_pairings, is_connected)

REF_BATH = SpectralDensity(0.2, 2.5, 10.0, 400)


def double_factorial(n):
    return math.prod(range(n, 0, -2)) if n > 0 else 1


class TestModes:
    def test_single_mode_is_cutoff(self):
        w, c = discretize_modes(SpectralDensity(0.2, 2.5, 10.0, 1))
        assert w[0] == pytest.approx(10.0, rel=1e-14)
        assert c[0] == pytest.approx(10.0 * math.sqrt(0.2 * 2.5 * (1 - math.exp(-4))), rel=1e-14)

    def test_increasing_and_bounded(self):
        w, _ = discretize_modes(REF_BATH)
        assert np.all(np.diff(w) > 0)
        assert w[-1] == pytest.approx(10.0)
        assert w[0] > 0

    def test_zero_coupling(self):
        _, c = discretize_modes(SpectralDensity(0.0, 2.5, 10.0, 20))
        assert np.all(c == 0)

    @pytest.mark.parametrize("kw", [dict(omega_c=0), dict(omega_max=-1), dict(n_modes=0), dict(xi=-1)])
    def test_invalid(self, kw):
        args = dict(xi=0.2, omega_c=2.5, omega_max=10.0, n_modes=10) | kw
        with pytest.raises(ValueError):
            SpectralDensity(**args)


class TestBstar:
    def test_zero_lag_real_positive(self):
        b = bstar(REF_BATH, 5.0, 0.0)
        assert b.imag == 0.0 and b.real > 0

    def test_frozen_values(self):
        # mode sum at the reference bath (400 modes)
        assert bstar(REF_BATH, 5.0, 0.2) == pytest.approx(0.3511498081550978 - 0.3751566079681065j, rel=1e-12)
        assert bstar(REF_BATH, 5.0, 0.0) == pytest.approx(0.5824974163576895, rel=1e-12)

    def test_continuum_limit(self):
        # the log-spaced mode sum converges to the continuous density at rate 1/n_modes
        ref = oracle.bstar_continuum(REF_BATH, 5.0, 0.2)
        errs = []
        for n in (400, 1600, 6400):
            sd = SpectralDensity(0.2, 2.5, 10.0, n)
            errs.append(abs(bstar(sd, 5.0, 0.2) - ref) / abs(ref))
        assert errs[0] < 1e-2
        assert errs[-1] < 1e-3
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)

    @given(st.floats(-5, 5))
    def test_conjugate_symmetry(self, x):
        assert bstar(REF_BATH, 5.0, -x) == pytest.approx(np.conj(bstar(REF_BATH, 5.0, x)), abs=1e-13)

    def test_independent_mode_sum(self):
        w, c = discretize_modes(REF_BATH)
        x = 0.37
        ref = np.sum(c ** 2 / (2 * w) * (np.cosh(2.5 * w) / np.sinh(2.5 * w) * np.cos(w * x)
                                         - 1j * np.sin(w * x)))
        assert bstar(REF_BATH, 5.0, x) == pytest.approx(ref, rel=1e-12)

    def test_beta_positive(self):
        with pytest.raises(ValueError):
            bstar(REF_BATH, 0.0, 0.1)


class TestCorrelation:
    def test_branch_cases(self):
        b = bstar(REF_BATH, 5.0, 0.3 - 0.5)
        assert correlation(REF_BATH, 5.0, 0.3, 0.5) == pytest.approx(np.conj(b))
        assert correlation(REF_BATH, 5.0, -0.3, -0.5) == pytest.approx(np.conj(b))
        assert correlation(REF_BATH, 5.0, -0.3, 0.5) == pytest.approx(b)

    def test_table_matches_direct(self):
        tab = CorrelationTable(REF_BATH, 5.0, 0.1, 6)
        for m in range(-12, 13):
            assert tab.bstar_at(m) == pytest.approx(bstar(REF_BATH, 5.0, m * 0.1), abs=1e-13)
        assert tab.pair(3, -1, 1, 1) == pytest.approx(bstar(REF_BATH, 5.0, 0.2))
        assert tab.pair(3, 1, 1, 1) == pytest.approx(np.conj(bstar(REF_BATH, 5.0, 0.2)))

    def test_table_exact_symmetry(self):
        tab = CorrelationTable(REF_BATH, 5.0, 0.05, 10)
        mid = 20
        np.testing.assert_array_equal(tab.samples[:mid], np.conj(tab.samples[mid + 1:][::-1]))


class TestPairings:
    @pytest.mark.parametrize("m", [2, 4, 6, 8])
    def test_counts(self, m):
        assert len(enumerate_pairings(m)) == double_factorial(m - 1)
        total, conn = oracle.pairing_bruteforce(m)
        assert len(enumerate_pairings(m)) == total
        assert len(enumerate_connected_pairings(m)) == conn

    def test_linked_counts(self):
        assert [len(enumerate_connected_pairings(m)) for m in (2, 4, 6, 8)] == [1, 1, 4, 27]

    def test_q4_connected(self):
        assert enumerate_connected_pairings(4) == (((1, 3), (2, 4)),)

    def test_q4_full(self):
        assert set(enumerate_pairings(4)) == {((1, 2), (3, 4)), ((1, 3), (2, 4)), ((1, 4), (2, 3))}

    def test_odd_empty(self):
        assert enumerate_pairings(3) == ()
        assert bath_influence([0.1, 0.2, 0.3], lambda a, b: 1.0) == 0

    def test_nested_not_connected(self):
        assert not is_connected(((1, 4), (2, 3)))
        assert is_connected(((1, 4), (2, 5), (3, 6)))

    @given(st.sampled_from([2, 4, 6]), st.integers(0, 10 ** 6))
    def test_perfect_matchings(self, m, seed):
        q = enumerate_pairings(m)[seed % len(enumerate_pairings(m))]
        flat = sorted(i for pr in q for i in pr)
        assert flat == list(range(1, m + 1))
        assert all(a < b for a, b in q)

    def test_two_point(self):
        f = lambda a, b: complex(a * 10 + b)
        assert bath_influence([1, 2], f) == 12
        assert connected_bath_influence([1, 2], f) == 12

    def test_four_point_wick(self):
        f = lambda a, b: complex(a * 10 + b)
        assert bath_influence([1, 2, 3, 4], f) == 12 * 34 + 13 * 24 + 14 * 23
        assert connected_bath_influence([1, 2, 3, 4], f) == 13 * 24
