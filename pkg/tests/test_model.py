import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinchain.bath import SpectralDensity
from spinchain.model import (PAULI, ChainConfig, CouplingSpec, CouplingTerm, SpinBosonUnit,
                             SpinParams, chain_hamiltonian, coupling_factors, dense_coupling,
                             initial_reduced_density, interaction_picture, pauli_decompose,
                             propagator, system_hamiltonian)

finite = st.floats(-3, 3, allow_nan=False)
SD = SpectralDensity(0.2, 2.5, 10.0, 10)


def random_hermitian(rng):
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    return a + a.conj().T


class TestHamiltonian:
    def test_bias_only(self):
        np.testing.assert_array_equal(system_hamiltonian(SpinParams(1.0, 0.0)), np.diag([1, -1]))

    def test_tunnel_only(self):
        np.testing.assert_array_equal(system_hamiltonian(SpinParams(0.0, 1.0)), [[0, 1], [1, 0]])

    def test_eigenvalues(self):
        h = system_hamiltonian(SpinParams(1.0, 1.0))
        np.testing.assert_allclose(h, [[1, 1], [1, -1]])
        np.testing.assert_allclose(np.linalg.eigvalsh(h), [-np.sqrt(2), np.sqrt(2)], atol=1e-14)

    @given(finite, finite)
    def test_hermitian(self, e, d):
        h = system_hamiltonian(SpinParams(e, d))
        np.testing.assert_array_equal(h, h.conj().T)


class TestPropagator:
    def test_pauli_roundtrip(self, rng):
        h = random_hermitian(rng)
        c = pauli_decompose(h)
        rebuilt = c[0] * np.eye(2) + sum(ci * PAULI[k] for ci, k in zip(c[1:], "xyz"))
        np.testing.assert_allclose(rebuilt, h, atol=1e-14)

    @given(st.floats(-5, 5))
    def test_matches_eigensolve(self, t):
        h = system_hamiltonian(SpinParams(0.7, -1.3))
        w, v = np.linalg.eigh(h)
        ref = v @ np.diag(np.exp(-1j * w * t)) @ v.conj().T
        np.testing.assert_allclose(propagator(h, t), ref, atol=1e-12)

    def test_zero_hamiltonian(self):
        np.testing.assert_allclose(propagator(np.zeros((2, 2)), 3.0), np.eye(2))


class TestInteractionPicture:
    def test_zero_time(self, rng):
        o = rng.normal(size=(2, 2))
        np.testing.assert_allclose(interaction_picture(random_hermitian(rng), o, 0.0), o)

    def test_commuting(self):
        np.testing.assert_allclose(interaction_picture(PAULI["z"], PAULI["z"], 1.7), PAULI["z"])

    def test_rotation(self):
        out = interaction_picture(PAULI["z"], PAULI["x"], np.pi / 4)
        np.testing.assert_allclose(out, -PAULI["y"], atol=1e-15)

    @given(st.floats(-4, 4), st.integers(0, 2 ** 16))
    def test_properties(self, t, seed):
        rng = np.random.default_rng(seed)
        h, o = random_hermitian(rng), random_hermitian(rng)
        a = interaction_picture(h, o, t)
        np.testing.assert_allclose(a, a.conj().T, atol=1e-12)
        np.testing.assert_allclose(np.linalg.eigvalsh(a), np.linalg.eigvalsh(o), atol=1e-12)
        np.testing.assert_array_equal(a, interaction_picture(h, o, -t))


class TestCoupling:
    def test_ising(self):
        f = coupling_factors(CouplingSpec.heisenberg(jz=0.04))
        assert len(f) == 1
        assert f[0][0] == "z"
        np.testing.assert_allclose(f[0][1], 0.2 * PAULI["z"])
        np.testing.assert_allclose(dense_coupling(CouplingSpec.heisenberg(jz=0.04)),
                                   0.04 * np.kron(PAULI["z"], PAULI["z"]))

    def test_frenkel_two_factors(self):
        assert [lab for lab, _ in coupling_factors(CouplingSpec.heisenberg(0.1, 0.1))] == ["x", "y"]

    def test_empty(self):
        c = CouplingSpec()
        assert coupling_factors(c) == []
        np.testing.assert_array_equal(dense_coupling(c), np.zeros((4, 4)))

    @given(st.lists(st.tuples(st.sampled_from("xyz"), st.floats(-2, 2)), max_size=3,
                    unique_by=lambda x: x[0]))
    def test_factor_reconstruction(self, terms):
        c = CouplingSpec(tuple((ax, j, ax) for ax, j in terms))
        v = sum((np.kron(a, a) for _, a in coupling_factors(c)), np.zeros((4, 4), complex))
        np.testing.assert_allclose(v, dense_coupling(c), atol=1e-14)
        np.testing.assert_allclose(v, v.conj().T, atol=1e-14)

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError):
            CouplingSpec((("a", 1.0, "x"), ("a", 1.0, "z")))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            CouplingTerm("x", float("nan"), "x")


class TestUnits:
    @pytest.mark.parametrize("state,rho", [((1, 0), np.diag([1, 0])), ((0, 1), np.diag([0, 1])),
                                           ((2 ** -0.5, 2 ** -0.5), np.full((2, 2), 0.5))])
    def test_initial_density(self, state, rho):
        r = initial_reduced_density(SpinBosonUnit(SpinParams(0, 1), SD, 5.0, state))
        np.testing.assert_allclose(r, rho, atol=1e-15)
        assert np.linalg.matrix_rank(r) == 1

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError):
            SpinBosonUnit(SpinParams(0, 1), SD, 5.0, (1.0, 1.0))

    def test_beta_positive(self):
        with pytest.raises(ValueError):
            SpinBosonUnit(SpinParams(0, 1), SD, 0.0)

    def test_chain_lengths(self):
        u = SpinBosonUnit(SpinParams(0, 1), SD, 5.0)
        with pytest.raises(ValueError):
            ChainConfig([u, u], [])
        with pytest.raises(ValueError):
            ChainConfig([], [])
        assert ChainConfig([u], []).n_spins == 1

    def test_chain_hamiltonian(self):
        u = SpinBosonUnit(SpinParams(1.0, 0.5), SD, 5.0)
        c = CouplingSpec.heisenberg(jz=0.3)
        h = chain_hamiltonian(ChainConfig([u, u], [c]))
        hs = system_hamiltonian(u.spin)
        ref = np.kron(hs, np.eye(2)) + np.kron(np.eye(2), hs) + 0.3 * np.kron(PAULI["z"], PAULI["z"])
        np.testing.assert_allclose(h, ref)
