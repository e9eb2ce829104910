"""Invariant suite behind the ``check`` subcommand.

Every module's structural invariants at fixed small sizes; returns a
machine-readable verdict.  ``mutations`` deliberately corrupts one piece
(e.g. the detailed-balance factor) so the suite's sensitivity itself is
testable.
"""

from __future__ import annotations

import numpy as np

from . import coarse, dynamics, gibbs, kmc, lattice, ldp, pde, transport
from .config import ExperimentConfig
from .fields import Field, fourier_scalar


def _result(ok: bool, **detail):
    out = {"pass": bool(ok)}
    out.update({k: (float(v) if isinstance(v, (np.floating, float)) else v)
                for k, v in detail.items()})
    return out


def check_lattice(rng):
    t = lattice.Torus(2, 6)
    bonds = t.bonds()
    ok = True
    worst = 0
    for _ in range(200):
        occ = (rng.random(t.nsites) < rng.random()).astype(np.uint8)
        c = lattice.Configuration(occ)
        b = bonds[rng.integers(len(bonds))]
        c2 = lattice.exchange(lattice.exchange(c, b), b)
        ok &= c2 == c
        ok &= lattice.exchange(c, b).count == c.count
    for _ in range(50):
        z1 = rng.integers(0, 6, size=2)
        z2 = rng.integers(0, 6, size=2)
        occ = (rng.random(t.nsites) < 0.5).astype(np.uint8)
        c = lattice.Configuration(occ)
        a = lattice.shift(lattice.shift(c, t, z1), t, z2)
        b2 = lattice.shift(c, t, (z1 + z2) % 6)
        ok &= a == b2
    sect = lattice.enumerate_sector(lattice.Torus(1, 6), 3)
    ok &= len(sect) == 20 and len({s.bits() for s in sect}) == 20
    return _result(ok, exchanges=200, shifts=50)


def check_gibbs(rng):
    detail = {}
    ok = True
    for J in (0.0, 0.5, -0.5):
        thermo = gibbs.free_energy_table(gibbs.Interaction(J), npoints=512)
        conv = np.diff(thermo.f_grid, 2)
        ok &= bool(np.all(conv > -1e-12))
        mask = (thermo.rho_grid >= 0.02) & (thermo.rho_grid <= 0.98)
        ratio = thermo.chi_grid[mask] / (thermo.rho_grid[mask]
                                         * (1 - thermo.rho_grid[mask]))
        C = max(ratio.max(), 1.0 / ratio.min())
        detail[f"chi_bound_C_J={J}"] = float(C)
        ok &= C <= 4.0
        lam = thermo.fprime_grid
        legendre = lam * thermo.rho_grid - np.array(
            [float(np.real(gibbs.pressure(thermo.interaction, l))) for l in lam])
        ok &= bool(np.max(np.abs(legendre - thermo.f_grid)) < 1e-8)
    t = lattice.Torus(1, 6)
    states, p = gibbs.canonical_exact(gibbs.Interaction(1.0), t, 3)
    ok &= abs(p.sum() - 1.0) < 1e-12
    shifted = {lattice.shift(s, t, 1).bits(): w for s, w in zip(states, p)}
    p2 = np.array([shifted[s.bits()] for s in states])
    ok &= bool(np.max(np.abs(p2 - p)) < 1e-12)
    return _result(ok, **detail)


def check_dynamics(rng, corrupt_detailed_balance: bool = False):
    t = lattice.Torus(1, 8)
    inter = gibbs.Interaction(0.7)
    fam = dynamics.RateFamily("neighbor_weighted", a=0.5)
    bonds = t.bonds()
    worst = 0.0
    for _ in range(300):
        occ = (rng.random(t.nsites) < rng.random()).astype(np.uint8)
        c = lattice.Configuration(occ)
        b = bonds[rng.integers(len(bonds))]
        c1 = dynamics.rate_symmetric(fam, inter, t, c, b)
        if corrupt_detailed_balance:
            c1 *= 1.0 + 1e-3 * occ[b.x]
        c2 = dynamics.rate_symmetric(fam, inter, t, lattice.exchange(c, b), b)
        dH = gibbs.energy_diff(inter, t, c, b)
        worst = max(worst, abs(c2 - c1 * np.exp(dH)))
    ok = worst < 1e-12

    # local detailed balance, exhaustive N=6
    U, gU = fourier_scalar(1, cos={1: 0.4})
    fld = Field.conservative(1, U, gU)
    t6 = lattice.Torus(1, 6)
    worst_ldb = 0.0
    from .fields import field_work
    for s in lattice.enumerate_sector(t6, 3):
        for b in t6.bonds():
            r1 = dynamics.rate_asymmetric(dynamics.SSEP, gibbs.ZERO_INTERACTION,
                                          fld, t6, s, b)
            r2 = dynamics.rate_asymmetric(dynamics.SSEP, gibbs.ZERO_INTERACTION,
                                          fld, t6, lattice.exchange(s, b), b)
            w = field_work(fld, t6, b.x, b.y)
            diff = int(s.occupancy[b.y]) - int(s.occupancy[b.x])
            worst_ldb = max(worst_ldb, abs(r2 - r1 * np.exp(w * diff)))
    ok &= worst_ldb < 1e-14

    # gradient case: stationary measure independent of the constant field
    devs = []
    for E in (0.0, 2.0):
        f = Field.constant([E])
        states, L = dynamics.generator_matrix(
            t6, 3, lambda s, b: dynamics.rate_asymmetric(
                dynamics.SSEP, gibbs.ZERO_INTERACTION, f, t6, s, b))
        pi = dynamics.stationary_exact(L)
        devs.append(np.max(np.abs(pi - 1.0 / len(states))))
    ok &= max(devs) < 1e-10
    return _result(ok, detailed_balance=worst, local_db=worst_ldb,
                   gradient_invariance=max(devs))


def check_kmc(rng):
    t = lattice.Torus(1, 32)
    fam = dynamics.RateFamily("neighbor_weighted", a=0.5)
    model = kmc.KmcModel(t, gibbs.Interaction(0.4), fam,
                         Field.constant([1.0]))
    occ = (rng.random(32) < 0.5).astype(np.uint8)
    traj = model.run(occ, 4.0, np.linspace(0.5, 4.0, 8), seed=11)
    ok = traj.events > 10_000
    # incremental rate table equals a fresh recompute after the burst, exactly
    fresh = model.rate_table(traj.snapshots[-1])
    ok &= bool(np.array_equal(traj.final_rates, fresh))
    traj2 = model.run(occ, 4.0, np.linspace(0.5, 4.0, 8), seed=11)
    ok &= bool(np.array_equal(traj.snapshots, traj2.snapshots))
    counts = traj.counts()
    ok &= bool(np.all(counts == occ.sum()))
    blob = kmc.trajectory_to_binary(traj)
    back = kmc.trajectory_from_binary(blob)
    ok &= bool(np.array_equal(back.snapshots, traj.snapshots))
    return _result(ok, events=int(traj.events))


def check_coarse(rng):
    t = lattice.Torus(1, 64)
    occ = (rng.random(64) < 0.5).astype(np.uint8)
    c = lattice.Configuration(occ)
    df = coarse.empirical_density(c, t)
    ok = abs(df.mass - occ.mean()) < 1e-15
    shifted = coarse.empirical_density(lattice.shift(c, t, 5), t)
    ok &= bool(np.array_equal(np.roll(df.values, -5), shifted.values))
    field = coarse.DensityField(0.5 + 0.4 * np.sin(2 * np.pi * np.arange(64) / 64))
    sm = coarse.mollify(field, kappa=0.5, eps=0.15)
    ok &= abs(sm.mass - field.mass) < 1e-12
    ok &= sm.values.min() >= field.values.min() - 1e-12
    ok &= sm.values.max() <= field.values.max() + 1e-12
    ok &= abs(coarse.block_average(c, t, 0, 40) - occ.mean()) < 1e-15
    return _result(ok)


def check_transport(rng):
    fam = dynamics.RateFamily("neighbor_weighted", a=0.5)
    vals = {}
    ok = True
    for k in (0, 1, 2):
        vals[k] = float(transport.mobility_variational(0.5, k, family=fam)[0, 0])
    ok &= vals[0] >= vals[1] >= vals[2] - 1e-12
    ok &= vals[1] <= vals[0] - 1e-6
    kap = transport.kappa(0.5)
    sig = vals
    # bound sigma against kappa (f=0 gives the upper constant exactly)
    ok &= vals[0] <= 0.5 * (1 + fam.a) * kap + 1e-12
    ok &= vals[2] >= kap / 8.0
    ssep = transport.mobility_variational(0.3, 1)
    ok &= abs(ssep[0, 0] - 0.21) < 1e-12
    return _result(ok, sigma0=vals[0], sigma1=vals[1], sigma2=vals[2])


def check_pde(rng):
    thermo = gibbs.free_energy_table(gibbs.ZERO_INTERACTION, npoints=512)
    mob = transport.MobilityModel("ssep")
    D = transport.diffusion_model(mob, thermo)
    errs = []
    for M in (32, 64, 128):
        r = (np.arange(M) + 0.5) / M
        init = 0.5 + 0.3 * np.sin(2 * np.pi * r)
        prob = pde.PdeProblem(1, M, mob.sigma, D, None, init, T=0.02,
                              n_out=16)
        path = pde.solve_hydro(prob)
        exact = 0.5 + 0.3 * np.exp(-4 * np.pi**2 * 0.02) * np.sin(2 * np.pi * r)
        errs.append(float(np.mean(np.abs(path.values[-1] - exact))))
        ok_mass = np.max(np.abs(path.masses() - 0.5)) < 1e-12
        ok_range = path.values.min() >= 0.2 - 1e-12 and path.values.max() <= 0.8 + 1e-12
    order = np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])
    ok = ok_mass and ok_range and min(order) >= 1.8
    U, _ = fourier_scalar(1, cos={1: 0.3})
    g1 = pde.stationary_profile(0.3, U, thermo, 64).values
    g2 = pde.stationary_profile(0.6, U, thermo, 64).values
    ok &= bool(np.all(g1 < g2))
    return _result(ok, order_low=float(min(order)), errors=errs)


def check_ldp(rng):
    thermo = gibbs.free_energy_table(gibbs.ZERO_INTERACTION, npoints=512)
    mob = transport.MobilityModel("ssep")
    D = transport.diffusion_model(mob, thermo)
    U, gU = fourier_scalar(1, cos={1: 0.3})
    fld = Field.conservative(1, U, gU)
    ok = True
    detail = {}
    ivals = []
    for M in (32, 64):
        r = (np.arange(M) + 0.5) / M
        init = 0.5 + 0.2 * np.sin(2 * np.pi * r)
        prob = pde.PdeProblem(1, M, mob.sigma, D, fld, init, T=0.05,
                              n_out=M // 2)
        path = pde.solve_hydro(prob)
        ev = ldp.rate_functional(path, mob.sigma, D, fld, gamma=init)
        ok &= ev.finite and ev.value >= 0
        ok &= bool(np.max(np.abs(ev.mean_residuals)) < 1e-12)
        ivals.append(ev.value)
    ok &= ivals[1] < ivals[0] / 2  # order >= 1
    detail["I_hydro"] = ivals

    gamma = pde.stationary_profile(0.5, U, thermo, 64).values
    r = (np.arange(64) + 0.5) / 64
    rho = 0.5 + 0.15 * np.cos(2 * np.pi * r)
    rho -= rho.mean() - 0.5
    fvals = []
    for lamb in np.linspace(0, 1, 5):
        mix = gamma + lamb * (rho - gamma)
        fvals.append(ldp.quasi_potential(mix, 0.5, thermo, U, gamma))
    fvals = np.array(fvals)
    ok &= fvals[0] < 1e-10 and bool(np.all(np.diff(fvals, 2) > -1e-12))
    l2 = float(np.mean((rho - gamma) ** 2))
    C0 = max(fvals[-1] / l2, l2 / fvals[-1])
    detail["equivalence_C0"] = float(C0)
    ok &= np.isfinite(C0)
    ok &= ldp.quasi_potential(rho + 0.05, 0.5, thermo, U, gamma) == np.inf
    return _result(ok, **detail)


def check_determinism(rng):
    text = """
[model]
d = 1
N = 16
[run]
T = 0.05
trajectories = 2
seed = 7
[numerics]
M = 16
"""
    cfg = ExperimentConfig.parse(text)
    rt = ExperimentConfig.parse(cfg.serialize())
    ok = rt.serialize() == cfg.serialize() and rt.hash() == cfg.hash()
    model = kmc.KmcModel(lattice.Torus(1, 16))
    runs = [kmc.run_ensemble(model, np.full(16, 0.5), 2, 0.05, [0.05],
                             master_seed=7) for _ in range(2)]
    ok &= bool(np.array_equal(runs[0][0].snapshots, runs[1][0].snapshots))
    ok &= bool(np.array_equal(runs[0][1].snapshots, runs[1][1].snapshots))
    return _result(ok)


CHECKS = [
    ("lattice", check_lattice),
    ("gibbs", check_gibbs),
    ("dynamics", check_dynamics),
    ("kmc", check_kmc),
    ("coarse", check_coarse),
    ("transport", check_transport),
    ("pde", check_pde),
    ("ldp", check_ldp),
    ("determinism", check_determinism),
]


def run_invariant_suite(mutations: tuple = (), seed: int = 20240) -> dict:
    rng = np.random.default_rng(seed)
    report = {}
    for name, fn in CHECKS:
        kwargs = {}
        if name == "dynamics" and "detailed-balance" in mutations:
            kwargs["corrupt_detailed_balance"] = True
        try:
            report[name] = fn(rng, **kwargs)
        except Exception as exc:  # a crash is a failure, not an abort
            report[name] = {"pass": False, "error": f"{type(exc).__name__}: {exc}"}
    report["all_pass"] = all(v["pass"] for k, v in report.items()
                             if isinstance(v, dict))
    return report
