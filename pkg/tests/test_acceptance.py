"""Acceptance criteria, one test per criterion, stated tolerances pinned.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line per
criterion.  The slow entries (the KMC ladders) stay within their stated
wall-clock budgets on a laptop-class machine.
"""

import time

import numpy as np
import pytest

import latticegas as lg
from latticegas.checks import run_invariant_suite
from latticegas.pde import FvScheme

NW = lg.RateFamily("neighbor_weighted", a=0.5, witness="trailing")


def _report(num, text):
    print(f"PASS criterion {num}: {text}")


@pytest.fixture(scope="module")
def thermo():
    return lg.free_energy_table(lg.ZERO_INTERACTION)


@pytest.fixture(scope="module")
def ssep():
    return lg.MobilityModel("ssep")


@pytest.fixture(scope="module")
def Dfun(ssep, thermo):
    return lg.diffusion_model(ssep, thermo)


def test_criterion_1_gradient_stationary_invariance():
    t0 = time.time()
    worst = 0.0
    for N, K in ((4, 2), (6, 3), (8, 4)):
        torus = lg.make_torus(1, N)
        for E in (0.0, 1.0, 2.0):
            field = lg.Field.constant([E])

            def rate(s, b):
                return lg.rate_asymmetric(lg.SSEP, lg.ZERO_INTERACTION, field,
                                          torus, s, b)

            states, L = lg.generator_matrix(torus, K, rate)
            pi = lg.stationary_exact(L)
            worst = max(worst, float(np.max(np.abs(pi - 1.0 / len(states)))))
    elapsed = time.time() - t0
    assert worst <= 1e-10
    assert elapsed < 1.0
    _report(1, f"uniform stationary measure, max dev {worst:.2e} "
               f"({elapsed:.2f}s)")


def test_criterion_2_conservative_field_reversibility():
    t0 = time.time()
    torus = lg.make_torus(1, 8)
    U, gU = lg.fourier_scalar(1, cos={1: 0.4})
    field = lg.Field.conservative(1, U, gU)
    states = lg.enumerate_sector(torus, 4)
    weights = lg.gibbs_weights_with_potential(lg.ZERO_INTERACTION, torus,
                                              states, U)
    worst = 0.0
    for s, w in zip(states, weights):
        for b in torus.bonds():
            if s.occupancy[b.x] == s.occupancy[b.y]:
                continue
            c1 = lg.rate_asymmetric(lg.SSEP, lg.ZERO_INTERACTION, field,
                                    torus, s, b)
            s2 = lg.exchange(s, b)
            c2 = lg.rate_asymmetric(lg.SSEP, lg.ZERO_INTERACTION, field,
                                    torus, s2, b)
            w2 = weights[states.index(s2)]
            worst = max(worst, abs(w * c1 - w2 * c2))
    elapsed = time.time() - t0
    assert worst <= 1e-12
    assert elapsed < 1.0
    _report(2, f"exp(-H^U) detailed balance residual {worst:.2e} "
               f"({elapsed:.2f}s)")


def test_criterion_3_nongradient_signature():
    t0 = time.time()
    torus = lg.make_torus(1, 6)
    field = lg.Field.constant([1.0])

    def rate(s, b):
        return lg.rate_asymmetric(NW, lg.ZERO_INTERACTION, field, torus, s, b)

    states, L = lg.generator_matrix(torus, 3, rate)
    pi = lg.stationary_exact(L)
    dev = float(np.max(np.abs(pi - 1.0 / len(states))))
    elapsed = time.time() - t0
    assert dev > 1e-6
    assert elapsed < 1.0
    _report(3, f"stationary measure leaves canonical Gibbs by {dev:.2e} "
               f"({elapsed:.2f}s)")


def test_criterion_4_hydrodynamic_convergence(ssep, Dfun):
    t0 = time.time()
    field = lg.Field.constant([1.0])
    T, Mcmp, ntraj = 0.1, 64, 400
    errors = {}
    for N in (64, 128, 256):
        torus = lg.make_torus(1, N)
        rc = (np.arange(N) + 0.5) / N
        init = 0.5 + 0.25 * np.sin(2 * np.pi * rc)
        model = lg.KmcModel(torus, field=field)
        trajs = lg.run_ensemble(model, init, ntraj, T, [T], master_seed=1234,
                                threads=4)
        mean, _ = lg.ensemble_mean(trajs, T, Mcmp)
        prob = lg.PdeProblem(1, N, ssep.sigma, Dfun, field, init, T=T,
                             n_out=40)
        ref = lg.coarsen(lg.solve_hydro(prob).values[-1], Mcmp)
        errors[N] = float(np.mean(np.abs(mean.values - ref)))
    elapsed = time.time() - t0
    assert errors[256] <= 0.03
    assert errors[64] > errors[128] > errors[256]
    assert elapsed < 600
    _report(4, f"L1 errors {errors} strictly decreasing ({elapsed:.0f}s)")


def test_criterion_5_mobility_oracle():
    t0 = time.time()
    for k in (1, 2):
        sig = lg.mobility_variational(0.3, k, 1, lg.SSEP)
        assert abs(sig[0, 0] - 0.21) < 1e-12
    s0 = lg.mobility_variational(0.5, 0, 1, NW)[0, 0]
    s1 = lg.mobility_variational(0.5, 1, 1, NW)[0, 0]
    drop = s0 - s1
    elapsed = time.time() - t0
    assert drop >= 1e-6
    assert elapsed < 60
    _report(5, f"SSEP sigma(0.3)=0.21 exact; non-gradient sigma_1 below "
               f"sigma_0 by {drop:.2e} ({elapsed:.1f}s)")


def test_criterion_6_thermodynamics_oracle(thermo):
    t0 = time.time()
    f_err = abs(float(thermo.f_excess(0.3, 0.5))
                - (0.3 * np.log(0.6) + 0.7 * np.log(1.4)))
    chi_err = abs(lg.compressibility(thermo, 0.5) - 0.25)
    worst_C = 0.0
    for J in (0.25, 0.5):
        table = lg.free_energy_table(lg.Interaction(J), npoints=512)
        mask = (table.rho_grid >= 0.02) & (table.rho_grid <= 0.98)
        ratio = table.chi_grid[mask] / (table.rho_grid[mask]
                                        * (1 - table.rho_grid[mask]))
        worst_C = max(worst_C, float(ratio.max()), float(1 / ratio.min()))
    elapsed = time.time() - t0
    assert f_err <= 1e-6
    assert chi_err <= 1e-8
    assert worst_C <= 4.0
    assert elapsed < 60
    _report(6, f"f err {f_err:.1e}, chi err {chi_err:.1e}, "
               f"bound C={worst_C:.3f} <= 4 ({elapsed:.1f}s)")


def test_criterion_7_rate_functional(ssep, Dfun):
    t0 = time.time()
    field = lg.Field.constant([1.0])
    ivals = {}
    for M in (64, 128, 256):
        r = (np.arange(M) + 0.5) / M
        init = 0.5 + 0.25 * np.sin(2 * np.pi * r)
        prob = lg.PdeProblem(1, M, ssep.sigma, Dfun, field, init, T=0.1,
                             n_out=M // 4)
        path = lg.solve_hydro(prob)
        ivals[M] = lg.rate_functional(path, ssep.sigma, Dfun, field,
                                      gamma=init).value
    order = np.log2(ivals[128] / ivals[256])

    M = 256
    H, _ = lg.fourier_scalar(1, sin={1: 0.2})
    prob = lg.PdeProblem(1, M, ssep.sigma, Dfun, field, np.full(M, 0.5),
                         T=0.1, n_out=80)
    path = lg.solve_hydro(prob, extra_potential=lambda t, pts: 2 * H(pts))
    got = lg.rate_functional(path, ssep.sigma, Dfun, field).value
    scheme = FvScheme(1, M, ssep.sigma, Dfun)
    hv = H(((np.arange(M) + 0.5) / M)[:, None])
    per = [scheme.quadratic_form(path.values[j], hv)
           for j in range(path.times.size)]
    expect = float(np.trapezoid(per, path.times))
    rel = abs(got - expect) / expect
    elapsed = time.time() - t0
    assert ivals[256] <= 1e-4
    assert order >= 1.0
    assert rel <= 0.01
    assert elapsed < 120
    _report(7, f"I(hydro)={ivals[256]:.2e} (order {order:.1f}); controlled "
               f"response off by {100 * rel:.2f}% ({elapsed:.0f}s)")


def test_criterion_8_quasi_potential_identity(thermo, ssep, Dfun):
    t0 = time.time()
    # d = 1: two targets
    M = 256
    U, gU = lg.fourier_scalar(1, cos={1: 0.3})
    field = lg.Field.conservative(1, U, gU)
    r = (np.arange(M) + 0.5) / M
    gamma = lg.stationary_profile(0.5, U, thermo, M).values
    rels = []
    for rho in (gamma + 0.15 * np.cos(2 * np.pi * r),
                0.5 + 0.2 * np.sin(4 * np.pi * r)):
        rho = rho - (rho.mean() - 0.5)
        plan = lg.optimal_exit_path(rho, 0.5, field, thermo, ssep.sigma, Dfun,
                                    relax_tol=1e-4, chunk_T=0.2,
                                    slices_per_chunk=800)
        rels.append(abs(plan.rate_value - plan.value) / plan.value)
    assert max(rels) <= 0.02

    # d = 2: value independent of the stream part, path not
    M2, rho_bar = 64, 0.35
    U2, gU2 = lg.fourier_scalar(2, cos={(1, 0): 0.3})
    psi, gpsi = lg.fourier_scalar(2, sin={(1, 0): 4.0 / (2 * np.pi)})
    c = (np.arange(M2) + 0.5) / M2
    X, Y = np.meshgrid(c, c, indexing="ij")
    rho2 = rho_bar + 0.12 * np.cos(2 * np.pi * X) + 0.1 * np.sin(2 * np.pi * Y)
    rho2 -= rho2.mean() - rho_bar
    plans = []
    for fld in (lg.Field.conservative(2, U2, gU2),
                lg.Field.decomposed(2, U2, gU2, stream=psi, grad_stream=gpsi)):
        plans.append(lg.optimal_exit_path(rho2, rho_bar, fld, thermo,
                                          ssep.sigma, Dfun, relax_tol=1e-4,
                                          chunk_T=0.2, slices_per_chunk=300,
                                          max_T=3.0))
    val_gap = abs(plans[0].rate_value - plans[1].rate_value) / plans[0].value
    pa, pb = plans[0].path, plans[1].path
    m = min(pa.times.size, pb.times.size)
    path_gap = max(float(np.mean(np.abs(
        pa.values[pa.times.size - 1 - j] - pb.values[pb.times.size - 1 - j])))
        for j in range(m))
    elapsed = time.time() - t0
    assert val_gap <= 0.02
    assert path_gap > 10 * 1e-4
    assert elapsed < 300
    _report(8, f"d=1 identity within {100 * max(rels):.2f}%; d=2 value gap "
               f"{100 * val_gap:.4f}%, path L1 gap {path_gap:.2e} "
               f"({elapsed:.0f}s)")


def test_criterion_9_duality_and_lyapunov(thermo, ssep, Dfun):
    t0 = time.time()
    U, gU = lg.fourier_scalar(1, cos={1: 0.3})
    field = lg.Field.conservative(1, U, gU)
    H, _ = lg.fourier_scalar(1, sin={1: 0.25})
    duality, lyap = {}, {}
    for M in (64, 128, 256):
        gamma = lg.stationary_profile(0.5, U, thermo, M).values
        prob = lg.PdeProblem(1, M, ssep.sigma, Dfun, field, gamma, T=0.15,
                             n_out=M // 2)
        path = lg.solve_hydro(prob, extra_potential=lambda t, pts:
                              2 * np.sin(np.pi * t / 0.15) * H(pts))
        duality[M] = lg.duality_defect(path, field, 0.5, thermo, ssep.sigma,
                                       Dfun, gamma=gamma)["defect"]
        r = (np.arange(M) + 0.5) / M
        rho0 = 0.5 + 0.15 * np.cos(2 * np.pi * r)
        rho0 -= rho0.mean() - 0.5
        relax = lg.solve_adjoint(rho0, field, 1, M, ssep.sigma, Dfun, T=0.12,
                                 n_out=2 * M)
        recs = lg.lyapunov_series(relax, 0.5, thermo, ssep.sigma, gamma=gamma,
                                  U=U)
        lyap[M] = max(rec["defect"] for rec in recs if "defect" in rec)
    elapsed = time.time() - t0
    assert duality[256] <= 1e-3 and lyap[256] <= 1e-3
    assert duality[64] / duality[128] >= 3 and duality[128] / duality[256] >= 3
    assert lyap[64] / lyap[128] >= 3 and lyap[128] / lyap[256] >= 3
    assert elapsed < 120
    _report(9, f"duality defect {duality[256]:.1e}, lyapunov defect "
               f"{lyap[256]:.1e}, shrink factors "
               f"{duality[64]/duality[128]:.1f}/{duality[128]/duality[256]:.1f} and "
               f"{lyap[64]/lyap[128]:.1f}/{lyap[128]/lyap[256]:.1f} ({elapsed:.0f}s)")


def test_criterion_10_microscopic_steering(ssep, Dfun):
    t0 = time.time()
    N, T, ntraj = 256, 0.1, 200
    field = lg.Field.constant([1.0])
    H, _ = lg.fourier_scalar(1, sin={1: 0.2})
    prob = lg.PdeProblem(1, N, ssep.sigma, Dfun, field, np.full(N, 0.5),
                         T=T, n_out=100)
    target = lg.solve_hydro(prob, extra_potential=lambda t, pts: 2 * H(pts))
    drive = lg.controlled_field(target, ssep.sigma, Dfun, field)

    torus = lg.make_torus(1, N)
    tables = np.stack([lg.face_field_to_bond_work(torus, [drive.tables[0][j]])
                       for j in range(drive.times.size)])
    extra = lg.TimeDependentWork(drive.times, 0.5 * tables)
    model = lg.KmcModel(torus)
    trajs = lg.run_ensemble(model, np.full(N, 0.5), ntraj, T, [T],
                            master_seed=99, extra=extra, threads=4)
    mean, _ = lg.ensemble_mean(trajs, T)
    l1 = float(np.mean(np.abs(mean.values - target.values[-1])))
    elapsed = time.time() - t0
    assert l1 <= 0.05
    assert elapsed < 600
    _report(10, f"steered ensemble L1 distance {l1:.4f} <= 0.05 "
                f"({elapsed:.0f}s)")


def test_criterion_11_invariant_suite():
    t0 = time.time()
    report = run_invariant_suite()
    elapsed = time.time() - t0
    failures = [k for k, v in report.items()
                if isinstance(v, dict) and not v["pass"]]
    assert report["all_pass"], f"failing checks: {failures}"
    assert elapsed < 300
    _report(11, f"invariant suite green ({elapsed:.0f}s)")
