"""Hydrodynamic limit: ensembles of driven exclusion chains against the
nonlinear driven diffusion equation.

An ensemble of Kawasaki trajectories is started in local equilibrium around
a sine profile and compared, after diffusive time 0.1, with the finite
volume solution of  d_t u + d_r[sigma(u) E] = d_r[D(u) d_r u].  The L1 gap
shrinks with the lattice size (law of large numbers for the empirical
density).  Scaled-down sizes here; the acceptance suite runs the full
ladder 64/128/256 with 400 trajectories.
"""

import numpy as np

import latticegas as lg

T = 0.1
field = lg.Field.constant([1.0])
thermo = lg.free_energy_table(lg.ZERO_INTERACTION)
mob = lg.MobilityModel("ssep")
D = lg.diffusion_model(mob, thermo)

print("N-ladder, 100 trajectories each, comparison on the 32-cell grid:")
for N in (32, 64, 128):
    torus = lg.make_torus(1, N)
    rc = (np.arange(N) + 0.5) / N
    gamma = 0.5 + 0.25 * np.sin(2 * np.pi * rc)

    model = lg.KmcModel(torus, field=field)
    trajs = lg.run_ensemble(model, gamma, 100, T, [T], master_seed=2024)
    mean, stderr = lg.ensemble_mean(trajs, T, 32)

    problem = lg.PdeProblem(1, N, mob.sigma, D, field, gamma, T=T, n_out=40)
    pde_end = lg.coarsen(lg.solve_hydro(problem).values[-1], 32)

    l1 = np.mean(np.abs(mean.values - pde_end))
    events = sum(tr.events for tr in trajs)
    print(f"  N={N:4d}: L1 distance = {l1:.4f}   "
          f"(mass micro {mean.mass:.6f} / macro {pde_end.mean():.6f}, "
          f"{events} events)")
