import numpy as np
import pytest
from scipy.linalg import expm

from spinchain import backend, oracle
from spinchain.bath import SpectralDensity, discretize_modes
from spinchain.contour import ContourGrid
from spinchain.errors import DependencyError, NonFiniteError
from spinchain.inchworm import (Truncation, apply_discontinuity, apply_jump, basis_columns,
                                kernel, load_table, rho_from_table, save_table, solve_tables,
                                spin_labels, table_key)
from spinchain.model import (PAULI, CouplingSpec, SpinBosonUnit, SpinParams,
                             initial_reduced_density, interaction_picture, propagator,
                             system_hamiltonian)

from conftest import make_unit


def exact_single_mode(unit, t, n_fock=30):
    """Spin plus one thermal oscillator by exact diagonalisation (interaction picture)."""
    w, c = discretize_modes(unit.bath)
    w, c = w[0], c[0]
    a = np.diag(np.sqrt(np.arange(1, n_fock)), 1)
    q = (a + a.T) / np.sqrt(2 * w)
    hb = w * (a.T @ a)
    hs = system_hamiltonian(unit.spin)
    h = np.kron(hs, np.eye(n_fock)) + np.kron(np.eye(2), hb) + np.kron(PAULI["z"], c * q)
    rb = expm(-unit.beta * hb)
    rb /= np.trace(rb)
    u = expm(-1j * h * t)
    r = u @ np.kron(initial_reduced_density(unit), rb) @ u.conj().T
    r = np.einsum("aibi->ab", r.reshape(2, n_fock, 2, n_fock))
    us = propagator(hs, t)
    return us.conj().T @ r @ us


class TestTruncation:
    def test_limits(self):
        with pytest.raises(ValueError):
            Truncation(0, 1)
        with pytest.raises(ValueError):
            Truncation(1, -1)


class TestLabels:
    def test_shared_operators(self):
        ops, lm, rm = spin_labels(CouplingSpec.heisenberg(0.1, 0.1), CouplingSpec.heisenberg(jx=0.1))
        assert len(ops) == 2
        assert lm == [0, 1] and rm == [0]

    def test_end_spin(self):
        ops, lm, rm = spin_labels(None, CouplingSpec.heisenberg(jz=0.04))
        assert lm == [] and rm == [0]


class TestHelpers:
    def test_discontinuity_phase(self):
        v = PAULI["x"]
        phi = np.eye(2)
        np.testing.assert_allclose(apply_discontinuity(phi, v, 1), np.exp(-0.25j * np.pi) * v)
        np.testing.assert_allclose(apply_discontinuity(phi, v, -1), np.exp(0.25j * np.pi) * v)
        with pytest.raises(ValueError):
            apply_discontinuity(phi, v, 0)

    def test_jump(self):
        rho0 = np.diag([1.0, 0.0])
        np.testing.assert_allclose(apply_jump(np.eye(2), rho0), rho0)

    def test_map_basis(self):
        cols = basis_columns("map", np.eye(2))
        assert cols.shape == (4, 2, 2)
        np.testing.assert_array_equal(cols[1], [[0, 1], [0, 0]])


class TestClosedSystem:
    def test_free_spin_window(self):
        u = make_unit(xi=0.0)
        g = ContourGrid(0.1, 5)
        t = solve_tables(u, None, None, g, Truncation(1, 0))
        # interaction picture of a closed spin is the initial state
        np.testing.assert_allclose(rho_from_table(t, 0.5), initial_reduced_density(u), atol=1e-15)

    def test_free_matches_solver(self):
        u = make_unit(xi=0.0)
        cpl = CouplingSpec.heisenberg(jx=0.3, jz=0.2)
        g = ContourGrid(0.1, 3)
        trunc = Truncation(1, 2)
        a = solve_tables(u, cpl, None, g, trunc)
        b = solve_tables(u, cpl, None, g, trunc, free=False)
        reg = b.registry
        lo, hi = g.window(3)
        sel = (reg.p_first >= lo) & (reg.p_last <= hi)
        codes, lengths = reg.codes[sel], reg.lengths[sel]
        np.testing.assert_allclose(a.window_values(lo, hi, codes, lengths),
                                   b.window_values(lo, hi, codes, lengths), atol=1e-14)

    def test_single_cross(self):
        # one forward cross at +0.2 in a closed spin: sqrt(-i) V_I(0.2) rho0
        u = make_unit(xi=0.0)
        cpl = CouplingSpec.heisenberg(jx=0.25)
        g = ContourGrid(0.1, 3)
        t = solve_tables(u, cpl, None, g, Truncation(1, 1))
        p = g.zero_plus + 2
        got = t.get(*g.window(3)[:1], [(p, 0)], g.window(3)[1])
        v = interaction_picture(system_hamiltonian(u.spin), 0.5 * PAULI["x"], 0.2)
        ref = np.exp(-0.25j * np.pi) * v @ initial_reduced_density(u)
        np.testing.assert_allclose(got, ref, atol=1e-14)


class TestBackends:
    def test_parity(self):
        u = make_unit(xi=0.2)
        cpl = CouplingSpec.heisenberg(jx=0.1, jz=0.04)
        g = ContourGrid(0.1, 3)
        tr = Truncation(3, 2)
        a = solve_tables(u, cpl, None, g, tr, solver=backend.get("python"))
        try:
            fast = backend.get("compiled")
        except ImportError:
            pytest.skip("compiled backend not built")
        b = solve_tables(u, cpl, None, g, tr, solver=fast)
        assert a.count == b.count
        np.testing.assert_allclose(a.phi, b.phi, atol=1e-14)

    def test_active_name(self):
        assert backend.NAME in ("compiled", "python")


class TestBath:
    def test_dyson_convergence(self):
        # inchworm (M=3) against the brute-force series (M<=4): gap shrinks like dt^2
        u = make_unit(xi=0.05)
        gaps = []
        for dt in (0.1, 0.05):
            g = ContourGrid(dt, int(round(0.4 / dt)))
            tab = solve_tables(u, None, None, g, Truncation(3, 0))
            gaps.append(np.abs(rho_from_table(tab, 0.4) - oracle.dyson_brute_force(u, 4, g, 0.4)).max())
        assert gaps[1] < 5e-6
        assert gaps[0] / gaps[1] > 3.0

    def test_resummation_gap_is_second_order(self):
        # bold M=1 differs from the bare M<=2 series only at O(xi^2)
        g = ContourGrid(0.1, 4)
        gaps = []
        for xi in (0.04, 0.02):
            u = make_unit(xi=xi)
            tab = solve_tables(u, None, None, g, Truncation(1, 0))
            gaps.append(np.abs(rho_from_table(tab, 0.4) - oracle.dyson_brute_force(u, 2, g, 0.4)).max())
        assert gaps[0] / gaps[1] == pytest.approx(4.0, rel=0.05)

    def test_exact_single_mode(self):
        u = SpinBosonUnit(SpinParams(1.0, 1.0), SpectralDensity(0.05, 2.5, 3.0, 1), 5.0)
        ref = exact_single_mode(u, 0.4)
        errs = []
        for dt in (0.05, 0.025):
            g = ContourGrid(dt, int(round(0.4 / dt)))
            errs.append(np.abs(rho_from_table(solve_tables(u, None, None, g, Truncation(3, 0)), 0.4) - ref).max())
        assert errs[1] < 2e-5
        assert errs[1] < errs[0]

    def test_with_crosses_matches_dyson(self):
        # crosses at fixed times -0.1 and +0.1; a kernel node sitting on a cross sees a
        # one-sided integrand, so the gap closes at first order in dt
        u = make_unit(xi=0.05)
        cpl = CouplingSpec.heisenberg(jx=0.3, jz=0.2)
        ops, _, _ = spin_labels(cpl, None)
        gaps = []
        for dt in (0.05, 0.025):
            g = ContourGrid(dt, int(round(0.2 / dt)))
            k = int(round(0.1 / dt))
            crosses = [(g.zero_minus - k, 1), (g.zero_plus + k, 0)]
            a, b = g.window(g.n_steps)
            tab = solve_tables(u, cpl, None, g, Truncation(1, 2))
            got = tab.get(a, crosses, b)
            gaps.append(np.abs(got - oracle.dyson_brute_force(u, 2, g, 0.2, crosses, ops)).max())
        assert gaps[1] < 1.5e-4
        assert gaps[0] / gaps[1] == pytest.approx(2.0, rel=0.25)

    def test_hermitian_surrogate(self):
        u = make_unit(xi=0.2)
        for dt in (0.1, 0.05):
            g = ContourGrid(dt, int(round(0.6 / dt)))
            r = rho_from_table(solve_tables(u, None, None, g, Truncation(1, 0)), 0.6)
            assert np.abs(r - r.conj().T).max() <= 10 * dt ** 2

    def test_kernel_vanishes_without_bath(self):
        u = make_unit(xi=0.0)
        g = ContourGrid(0.1, 3)
        tab = solve_tables(u, None, None, g, Truncation(1, 0))
        np.testing.assert_array_equal(kernel(tab, 0, (), 5), 0)

    def test_map_mode_columns(self):
        u = make_unit(xi=0.2, state=(2 ** -0.5, 2 ** -0.5))
        g = ContourGrid(0.1, 3)
        d = solve_tables(u, None, None, g, Truncation(1, 0), "density")
        m = solve_tables(u, None, None, g, Truncation(1, 0), "map")
        rho0 = initial_reduced_density(u)
        cols = rho_from_table(m, 0.3)
        mixed = sum(rho0[i, j] * cols[2 * i + j] for i in range(2) for j in range(2))
        np.testing.assert_allclose(mixed, rho_from_table(d, 0.3), atol=1e-14)


class TestFailures:
    def test_nonfinite(self):
        u = SpinBosonUnit(SpinParams(1.0, 1.0), SpectralDensity(1e300, 2.5, 3.0, 1), 5.0)
        with pytest.raises(NonFiniteError):
            solve_tables(u, None, None, ContourGrid(0.1, 3), Truncation(1, 0))

    def test_missing_entry(self):
        u = make_unit(xi=0.2)
        g = ContourGrid(0.1, 2)
        tab = solve_tables(u, None, None, g, Truncation(1, 0))
        tab.done[:] = 0
        with pytest.raises(DependencyError):
            rho_from_table(tab, 0.2)

    def test_over_budget(self):
        u = make_unit(xi=0.0)
        g = ContourGrid(0.1, 2)
        tab = solve_tables(u, CouplingSpec.heisenberg(jz=0.1), None, g, Truncation(1, 1))
        with pytest.raises(KeyError):
            tab.get(0, [(1, 0), (2, 0)], 5)


class TestCache:
    def test_roundtrip(self, tmp_path):
        u = make_unit(xi=0.2)
        cpl = CouplingSpec.heisenberg(jz=0.04)
        g = ContourGrid(0.1, 3)
        tr = Truncation(1, 2)
        tab = solve_tables(u, cpl, None, g, tr)
        key = table_key(u, cpl, None, g, tr, "density")
        path = tmp_path / "t.tbl"
        save_table(tab, path, key)
        back = load_table(path, u, cpl, None, g, tr, "density", key)
        np.testing.assert_array_equal(back.phi[back.done == 1], tab.phi[tab.done == 1])
        assert back.count == tab.count

    def test_key_mismatch(self, tmp_path):
        u = make_unit(xi=0.2)
        g = ContourGrid(0.1, 2)
        tr = Truncation(1, 0)
        tab = solve_tables(u, None, None, g, tr)
        path = tmp_path / "t.tbl"
        save_table(tab, path, table_key(u, None, None, g, tr, "density"))
        other = table_key(u, None, None, g, Truncation(3, 0), "density")
        assert load_table(path, u, None, None, g, Truncation(3, 0), "density", other) is None

    def test_key_depends_on_operators_only(self):
        u = make_unit(xi=0.2)
        g = ContourGrid(0.1, 2)
        tr = Truncation(1, 1)
        c = CouplingSpec.heisenberg(jz=0.04)
        assert table_key(u, c, None, g, tr, "density") == table_key(u, None, c, g, tr, "density")
        assert table_key(u, c, None, g, tr, "density") != table_key(u, c, None, g, tr, "map")
