import numpy as np
import pytest

from latticegas import (Configuration, Interaction, ZERO_INTERACTION,
                        canonical_exact, compressibility, energy_diff,
                        hamiltonian, make_torus, pressure,
                        pressure_enumeration, product_expectation, shift)
from latticegas.gibbs import ThermoError, _lam_of_rho


def bernoulli_excess(rho, rho_bar):
    return (rho * np.log(rho / rho_bar)
            + (1 - rho) * np.log((1 - rho) / (1 - rho_bar)))


# ---------------------------------------------------------------- energy

def test_energy_diff_zero_interaction_is_zero(rng):
    t = make_torus(1, 8)
    for _ in range(20):
        occ = (rng.random(8) < 0.5).astype(np.uint8)
        c = Configuration(occ)
        for b in t.bonds():
            assert energy_diff(ZERO_INTERACTION, t, c, b) == 0.0


def test_energy_diff_equal_endpoints_is_zero():
    t = make_torus(1, 6)
    inter = Interaction(1.0)
    c = Configuration.from_sites(t, [0, 1, 3])
    b = t.bond(0, 0)  # both endpoints occupied
    assert energy_diff(inter, t, c, b) == 0.0


def test_energy_diff_matches_full_hamiltonian(rng):
    """Oracle: local window formula vs H(eta^{xy}) - H(eta) by full sums."""
    for d, N in ((1, 8), (2, 4), (1, 2)):
        t = make_torus(d, N)
        inter = Interaction(1.0)
        for _ in range(30):
            occ = (rng.random(t.nsites) < 0.5).astype(np.uint8)
            c = Configuration(occ)
            for b in t.bonds():
                from latticegas import exchange
                full = (hamiltonian(inter, t, exchange(c, b))
                        - hamiltonian(inter, t, c))
                assert energy_diff(inter, t, c, b) == pytest.approx(full, abs=1e-12)


# ---------------------------------------------------------------- pressure

def test_pressure_free_values():
    assert float(np.real(pressure(ZERO_INTERACTION, 0.0))) == pytest.approx(
        np.log(2), abs=1e-14)
    for lam in (-1.3, 0.4, 2.0):
        # mu_sign = -1: weight exp{+lam count}, Z = (1 + e^lam)^N
        assert float(np.real(pressure(ZERO_INTERACTION, lam))) == pytest.approx(
            np.log(1 + np.exp(lam)), abs=1e-13)


def test_pressure_sign_flag():
    flipped = Interaction(0.0, mu_sign=+1)
    assert float(np.real(pressure(flipped, 1.0))) == pytest.approx(
        np.log(1 + np.exp(-1.0)), abs=1e-13)


def test_pressure_matches_enumeration_oracle():
    inter = Interaction(0.5)
    tm = float(np.real(pressure(inter, 0.0)))
    en = pressure_enumeration(inter, 0.0, 14)
    assert tm == pytest.approx(en, abs=1e-3)


def test_pressure_rejects_long_range():
    class FakeRange(Interaction):
        @property
        def range(self):
            return 2
    with pytest.raises(ThermoError):
        pressure(FakeRange(1.0), 0.0)


# ---------------------------------------------------------------- free energy

def test_free_energy_binomial_count_oracle(thermo_free):
    """-(1/N) log P(density=rho) under the product measure, extrapolated in N,
    recovers the tabulated excess free energy."""
    rho, rho_bar = 0.3, 0.5
    vals = []
    for N in (400, 800):
        K = int(rho * N)
        from scipy.special import gammaln
        logp = (gammaln(N + 1) - gammaln(K + 1) - gammaln(N - K + 1)
                + K * np.log(rho_bar) + (N - K) * np.log(1 - rho_bar))
        vals.append(-logp / N)
    # Richardson in the (log N)/N correction
    extr = 2 * vals[1] - vals[0]
    table = float(thermo_free.f_excess(rho, rho_bar))
    assert table == pytest.approx(extr, abs=3e-3)
    assert table == pytest.approx(bernoulli_excess(rho, rho_bar), abs=1e-9)


def test_free_energy_frozen_values(thermo_free):
    assert float(thermo_free.f_excess(0.5, 0.5)) == pytest.approx(0.0, abs=1e-12)
    assert float(thermo_free.f_excess(0.3, 0.5)) == pytest.approx(
        0.0822828785, abs=1e-8)


def test_free_energy_convexity_and_legendre(thermo_free, thermo_j05):
    for thermo in (thermo_free, thermo_j05):
        assert np.all(np.diff(thermo.f_grid, 2) >= -1e-12)
        # lam*rho(lam) - p(lam) <= f(rho(lam)) with equality at the nodes
        lam = thermo.fprime_grid
        pvals = np.array([float(np.real(pressure(thermo.interaction, l)))
                          for l in lam[::64]])
        lhs = lam[::64] * thermo.rho_grid[::64] - pvals
        assert np.max(np.abs(lhs - thermo.f_grid[::64])) < 1e-8


def test_fprime_diverges_toward_endpoints(thermo_free):
    lo, hi = thermo_free.fprime_range()
    assert lo < -8 and hi > 8


# ---------------------------------------------------------------- chi

def test_compressibility_values(thermo_free):
    assert compressibility(thermo_free, 0.5) == pytest.approx(0.25, abs=1e-8)
    assert compressibility(thermo_free, 0.0) == 0.0
    assert compressibility(thermo_free, 1.0) == 0.0
    with pytest.raises(ThermoError):
        compressibility(thermo_free, 1.2)


def test_compressibility_correlation_sum_oracle(thermo_j05):
    """chi = sum_x mu(eta_0; eta_x) from transfer-matrix correlations."""
    inter = Interaction(0.5)
    lam = _lam_of_rho(inter, 0.5)
    T = np.array([[1.0, np.exp(lam / 2)], [np.exp(lam / 2), np.exp(0.5 + lam)]])
    w, V = np.linalg.eigh(T)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    psi0 = V[:, 0]
    occ = np.array([0.0, 1.0])
    mean = float(np.sum(psi0**2 * occ))
    total = mean - mean**2
    for x in range(1, 60):
        amp = float(np.sum(psi0 * occ * V[:, 1]))**2 * (w[1] / w[0])**x
        total += 2 * amp
    assert compressibility(thermo_j05, 0.5) == pytest.approx(total, rel=0.02)


def test_chi_bound_2bchi(thermo_free, thermo_j05):
    for thermo, cap in ((thermo_free, 1.01), (thermo_j05, 4.0)):
        mask = (thermo.rho_grid >= 0.02) & (thermo.rho_grid <= 0.98)
        ratio = thermo.chi_grid[mask] / (
            thermo.rho_grid[mask] * (1 - thermo.rho_grid[mask]))
        C = max(ratio.max(), 1 / ratio.min())
        assert C <= cap


# ---------------------------------------------------------------- canonical

def test_canonical_uniform_for_zero_interaction():
    t = make_torus(1, 6)
    states, p = canonical_exact(ZERO_INTERACTION, t, 3)
    assert np.max(np.abs(p - 1 / 20)) < 1e-14


def test_canonical_point_mass_full_sector():
    t = make_torus(1, 5)
    states, p = canonical_exact(Interaction(1.0), t, 5)
    assert len(states) == 1 and p[0] == 1.0


def test_canonical_dual_evaluation_oracle():
    t = make_torus(1, 6)
    inter = Interaction(1.0)
    states, p = canonical_exact(inter, t, 3)
    # independent path: direct exp(-H) from a second Hamiltonian evaluation
    occ = np.array([s.occupancy for s in states], dtype=np.float64)
    h = -inter.coupling * np.sum(occ * np.roll(occ, -1, axis=1), axis=1)
    w = np.exp(-h)
    w /= w.sum()
    assert np.max(np.abs(p - w)) < 1e-12
    assert abs(p.sum() - 1.0) < 1e-12


def test_canonical_shift_invariance():
    t = make_torus(1, 6)
    inter = Interaction(0.8)
    states, p = canonical_exact(inter, t, 2)
    table = {s.bits(): w for s, w in zip(states, p)}
    for s, w in zip(states, p):
        assert table[shift(s, t, 2).bits()] == pytest.approx(w, abs=1e-14)


# ---------------------------------------------------------------- mu_rho

def test_product_expectation_single_site():
    for rho in (0.0, 0.3, 1.0):
        val = product_expectation(lambda occ: occ[:, 0].astype(float), rho, [0])
        assert val == pytest.approx(rho, abs=1e-14)


def test_product_expectation_gradient_square():
    obs = lambda occ: (occ[:, 0] - occ[:, 1]).astype(float) ** 2
    assert product_expectation(obs, 0.5, [0, 1]) == pytest.approx(0.5, abs=1e-14)
    assert product_expectation(obs, 0.0, [0, 1]) == 0.0


def test_product_expectation_interacting_with_report():
    obs = lambda occ: occ[:, 0].astype(float)
    val, err = product_expectation(obs, 0.4, [0], Interaction(0.5), report=True)
    assert val == pytest.approx(0.4, abs=1e-6)  # density pinned by f'(rho)
    assert err < 1e-6


def test_product_expectation_window_guard():
    with pytest.raises(ThermoError):
        product_expectation(lambda occ: occ[:, 0], 0.5, list(range(25)))
