"""Driven Kawasaki lattice gas laboratory.

Microscopic exclusion dynamics under a weak driving field, its exact
small-system stationary measures, the macroscopic driven diffusion equation,
and the large-deviation machinery (rate functional, quasi-potential, optimal
exit paths, time-reversal duality) connecting the two scales.
"""

__version__ = "0.1.0"

from .lattice import Bond, Configuration, Torus, enumerate_sector, exchange, make_torus, shift
from .gibbs import (Interaction, ThermoTable, ZERO_INTERACTION, canonical_exact,
                    compressibility, energy_diff, free_energy_table, hamiltonian,
                    pressure, pressure_enumeration, product_expectation)
from .fields import Field, bond_work_table, face_drift, field_work, fourier_scalar
from .dynamics import (RateFamily, SSEP, generator_matrix,
                       gibbs_weights_with_potential, rate_asymmetric,
                       rate_perturbed, rate_symmetric, stationary_exact)
from .kmc import (KmcModel, TimeDependentWork, Trajectory,
                  face_field_to_bond_work, run_ensemble,
                  sample_profile_configuration, trajectory_from_binary,
                  trajectory_to_binary, trajectory_to_csv)
from .coarse import (DensityField, block_average, coarsen, empirical_density,
                     ensemble_mean, mollify)
from .transport import (MobilityModel, diffusion, diffusion_model, kappa,
                        mobility_variational)
from .pde import (DriftTable, Path, PdeProblem, pde_residual, solve_adjoint,
                  solve_hydro, stationary_profile)
from .ldp import (ExitPlan, RateEval, controlled_field, duality_defect,
                  energy_Q, energy_Q_modal, lyapunov_series, optimal_exit_path,
                  quasi_potential, rate_functional, rate_lower_bound)
