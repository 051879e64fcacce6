import numpy as np
import pytest

from spinchain import oracle
from spinchain import summation as sm
from spinchain import tensornet as tn
from spinchain import ttm
from spinchain.contour import ContourGrid
from spinchain.inchworm import Truncation

from conftest import make_chain


def synthetic_maps(rng, d=4, n=20):
    """Non-Markovian family from a random memory kernel."""
    kern = [0.3 * (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / (k + 1) ** 2
            for k in range(n)]
    maps = [np.eye(d, dtype=complex)]
    for k in range(1, n + 1):
        maps.append(sum(kern[k - m - 1] @ maps[m] for m in range(k)))
    return maps, kern


class TestDense:
    def test_base_case(self, rng):
        maps, _ = synthetic_maps(rng, n=3)
        np.testing.assert_array_equal(ttm.extract_transfer(maps, 1).tensors[0], maps[1])

    def test_reconstruction(self, rng):
        maps, kern = synthetic_maps(rng)
        tts = ttm.extract_transfer(maps, 20)
        for k in range(1, 21):
            np.testing.assert_allclose(ttm.reconstruct(tts, maps, k), maps[k], atol=1e-12)
        for a, b in zip(tts.tensors, kern):
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_markovian(self, rng):
        e1 = np.linalg.qr(rng.normal(size=(4, 4)))[0] * 0.9
        tts = ttm.extract_transfer(ttm.markovian_family(e1, 10), 10)
        norms = ttm.transfer_norm_decay(tts)
        np.testing.assert_allclose(tts.tensors[0], e1)
        assert max(norms[1:]) <= 1e-12

    def test_propagate_markovian(self, rng):
        e1 = np.linalg.qr(rng.normal(size=(4, 4)))[0]
        tts = ttm.extract_transfer(ttm.markovian_family(e1, 3), 1)
        rho0 = rng.normal(size=4)
        traj = ttm.propagate(tts, [rho0], 6)
        np.testing.assert_allclose(traj.states[6], np.linalg.matrix_power(e1, 6) @ rho0, atol=1e-12)

    def test_propagate_full_memory(self, rng):
        maps, _ = synthetic_maps(rng, n=12)
        tts = ttm.extract_transfer(maps, 12)
        rho0 = rng.normal(size=4) + 0j
        traj = ttm.propagate(tts, [rho0], 12)
        for k in range(13):
            np.testing.assert_allclose(traj.states[k], maps[k] @ rho0, atol=1e-12)

    def test_zero_tensors(self):
        tts = ttm.TransferTensorSet([np.zeros((4, 4))] * 3, 0.1)
        traj = ttm.propagate(tts, [np.array([1.0, 0, 0, 0])], 5)
        assert all(not s.any() for s in traj.states[1:])

    def test_empty_history(self):
        with pytest.raises(ValueError):
            ttm.propagate(ttm.TransferTensorSet([np.eye(4)], 0.1), [], 3)

    def test_too_few_maps(self):
        with pytest.raises(ValueError):
            ttm.extract_transfer([np.eye(4), np.eye(4)], 3)


class TestChain:
    def test_closed_chain_maps(self, ising):
        ch = make_chain(2, ising, xi=0.0)
        g = ContourGrid(0.05, 4)
        maps = ttm.dynamical_maps(ch, g, Truncation(1, 4), None, 4)
        np.testing.assert_allclose(tn.to_dense(maps[0].map), np.eye(16), atol=1e-15)
        ex = oracle.unitary_superoperator(ch, 0.2)
        assert np.abs(tn.to_dense(maps[4].map) - ex).max() < 1e-4

    def test_linearity(self, frenkel):
        ch = make_chain(3, frenkel, state=(0.6, 0.8))
        g = ContourGrid(0.1, 3)
        tr = Truncation(1, 2)
        maps = ttm.dynamical_maps(ch, g, tr, None, 3)
        dens = sm.evolve(ch, g, tr)
        rho0 = sm.product_density_train(ch)
        for m, st in zip(maps, dens):
            got = tn.to_dense(ttm.apply_map(m.map, rho0))
            np.testing.assert_allclose(got, tn.to_dense(st.rho), atol=1e-10)

    def test_compressed_reconstruction(self, frenkel):
        ch = make_chain(2, frenkel)
        g = ContourGrid(0.1, 4)
        pol = tn.CompressionPolicy(1e-8)
        maps = ttm.dynamical_maps(ch, g, Truncation(1, 2), pol, 4)
        tts = ttm.extract_transfer(maps, 4, pol)
        for k in range(1, 5):
            rec = tn.to_dense(ttm.reconstruct(tts, maps, k))
            ref = tn.to_dense(maps[k].map)
            assert np.linalg.norm(rec - ref) <= 1e-6 * np.linalg.norm(ref)

    def test_subsampling(self, ising):
        ch = make_chain(2, ising)
        g = ContourGrid(0.1, 4)
        tables = sm.ChainTables(ch, g, Truncation(1, 2), "map")
        coarse = ttm.dynamical_maps(ch, g, Truncation(1, 2), None, 2, stride=2, tables=tables)
        fine = ttm.dynamical_maps(ch, g, Truncation(1, 2), None, 4, tables=tables)
        np.testing.assert_array_equal(tn.to_dense(coarse[2].map), tn.to_dense(fine[4].map))
        assert coarse[1].dt_ttm == pytest.approx(0.2)
        with pytest.raises(ValueError):
            ttm.dynamical_maps(ch, g, Truncation(1, 2), None, 3, stride=2, tables=tables)

    def test_unitary_transfer_decay(self, ising):
        # closed chain: T_1 carries nearly everything
        ch = make_chain(2, ising, xi=0.0)
        g = ContourGrid(0.1, 5)
        norms = ttm.transfer_norm_decay(ttm.extract_transfer(
            ttm.dynamical_maps(ch, g, Truncation(1, 4), None, 5), 5))
        assert norms[0] > 1.0
        assert max(norms[1:]) < 1e-2 * norms[0]
