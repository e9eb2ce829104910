"""Thermodynamics of the reference gas and its transport coefficients.

The 1-D nearest-neighbor chain has an exact 2x2 transfer matrix: pressure,
free energy (Legendre transform), and compressibility come out to machine
accuracy.  The mobility is a variational infimum over local perturbations;
truncating the support at radius k gives a decreasing sequence of upper
bounds sigma_k, already exact at k=0 for gradient models.
"""

import numpy as np

import latticegas as lg

# --- free energy and compressibility --------------------------------------
for J in (0.0, 0.5):
    inter = lg.Interaction(J)
    thermo = lg.free_energy_table(inter)
    chi = lg.compressibility(thermo, 0.5)
    mask = (thermo.rho_grid >= 0.02) & (thermo.rho_grid <= 0.98)
    ratio = thermo.chi_grid[mask] / (thermo.rho_grid[mask]
                                     * (1 - thermo.rho_grid[mask]))
    C = max(ratio.max(), 1 / ratio.min())
    print(f"J={J}: chi(1/2)={chi:.6f}   bound chi/(rho(1-rho)) in "
          f"[1/{C:.3f}, {C:.3f}]")
    if J == 0:
        exact = 0.3 * np.log(0.6) + 0.7 * np.log(1.4)
        print(f"     f_0.5(0.3) = {float(thermo.f_excess(0.3, 0.5)):.10f} "
              f"(Bernoulli value {exact:.10f})")

# transfer matrix vs brute-force partition sum
inter = lg.Interaction(0.5)
print(f"\np(0) transfer matrix  = {float(np.real(lg.pressure(inter, 0.0))):.10f}")
print(f"p(0) enumeration N=14 = {lg.pressure_enumeration(inter, 0.0, 14):.10f}")

# --- variational mobility ---------------------------------------------------
print("\nSSEP: sigma(rho) = rho(1-rho) exactly, infimum at f=0")
for k in (0, 1, 2):
    print(f"  k={k}: sigma_k(0.3) = "
          f"{lg.mobility_variational(0.3, k)[0, 0]:.12f}")

fam = lg.RateFamily("neighbor_weighted", a=0.5)
print("\ntrailing-witness rates (non-gradient): strict decrease in k")
for k in (0, 1, 2):
    print(f"  k={k}: sigma_k(0.5) = "
          f"{lg.mobility_variational(0.5, k, family=fam)[0, 0]:.9f}")

thermo = lg.free_energy_table(lg.ZERO_INTERACTION)
mob = lg.MobilityModel("ssep")
print(f"\nEinstein relation: D(0.3) = sigma f'' = "
      f"{lg.diffusion(mob, thermo, 0.3)[0, 0]:.8f} (SSEP: exactly 1)")
