"""Dynamical large-deviation machinery.

The rate functional of a density path is evaluated through its Riesz form:
per interior output time the hydrodynamic residual

    r_t = d_t pi + div[ sigma(pi) E - D(pi) grad pi ]

is inverted through the weighted periodic elliptic problem
-2 div(sigma(pi_t) grad Psi_t) = r_t (solvable because r_t has zero mean),
and

    I = sum_t w_t <grad Psi_t, sigma(pi_t) grad Psi_t>.

In d = 1 the elliptic solve is two explicit integrations; in d = 2 a
conjugate-gradient iteration.  Paths that do not conserve mass (or miss the
initial profile) get the +inf sentinel: a space-constant test function makes
the underlying supremum unbounded there.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .fields import Field
from .gibbs import ThermoTable
from .pde import DriftTable, FvScheme, Path, solve_adjoint, stationary_profile


class LdpError(RuntimeError):
    pass


@dataclass
class RateEval:
    """Value of I with per-slice diagnostics."""

    value: float
    slice_times: np.ndarray
    slice_costs: np.ndarray
    mean_residuals: np.ndarray
    elliptic_residuals: np.ndarray
    mass_conserving: bool
    message: str = ""
    dt: float = 0.0
    dx: float = 0.0

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)

    def to_json(self) -> str:
        return json.dumps({
            "value": self.value if self.finite else "inf",
            "mass_conserving": self.mass_conserving,
            "message": self.message,
            "dt": self.dt,
            "dx": self.dx,
            "slice_times": list(map(float, self.slice_times)),
            "slice_costs": list(map(float, self.slice_costs)),
            "mean_residuals": list(map(float, self.mean_residuals)),
            "elliptic_residuals": list(map(float, self.elliptic_residuals)),
        }, indent=1)


def _infinite(message: str, path: Path) -> RateEval:
    empty = np.zeros(0)
    return RateEval(math.inf, empty, empty, empty, empty, False, message,
                    dt=path.dt if path.times.size > 1 else 0.0,
                    dx=1.0 / path.grid)


SIGMA_FLOOR = 1e-12
RESIDUAL_FLOOR = 1e-10


def _elliptic_1d(sigma_f: np.ndarray, r: np.ndarray, M: int):
    """Return (grad Psi on faces, cost, residual) for the periodic problem."""
    c = np.cumsum(r) / M
    tiny = sigma_f < SIGMA_FLOOR
    if np.any(tiny):
        if np.any(np.abs(c[tiny]) > RESIDUAL_FLOOR):
            return None, math.inf, math.inf
        sigma_f = np.where(tiny, SIGMA_FLOOR, sigma_f)
    inv = 1.0 / sigma_f
    g0 = -np.sum(c * inv) / np.sum(inv)
    G = g0 + c
    grad_psi = -G / (2.0 * sigma_f)
    cost = float(np.sum(G * G / (4.0 * sigma_f)) / M)
    return grad_psi, cost, 0.0


def _elliptic_2d(scheme: FvScheme, rho: np.ndarray, r: np.ndarray,
                 x0: np.ndarray | None, tol: float = 1e-10):
    M = scheme.M
    sf = scheme.sigma_faces(rho)
    if min(float(s.min()) for s in sf) < SIGMA_FLOOR:
        if float(np.abs(r).max()) > RESIDUAL_FLOOR:
            return None, math.inf, math.inf
        sf = [np.maximum(s, SIGMA_FLOOR) for s in sf]

    def matvec(phi_flat):
        phi = np.asarray(phi_flat, dtype=np.float64).reshape(M, M)
        out = np.zeros((M, M))
        for a in range(2):
            flux = -2.0 * sf[a] * M * (np.roll(phi, -1, axis=a) - phi)
            out += M * (flux - np.roll(flux, 1, axis=a))
        return out.ravel()

    b = (r - r.mean()).ravel()
    A = LinearOperator((M * M, M * M), matvec=matvec, dtype=np.float64)
    x0 = None if x0 is None else (x0 - x0.mean()).ravel()
    psi, info = cg(A, b, x0=x0, rtol=tol, atol=0.0, maxiter=40 * M)
    if info != 0:
        psi, info = cg(A, b, x0=psi, rtol=tol * 100, atol=0.0, maxiter=80 * M)
        if info != 0:
            raise LdpError(f"elliptic CG failed to converge (info={info})")
    psi = psi.reshape(M, M)
    psi -= psi.mean()
    res = float(np.linalg.norm(matvec(psi.ravel()) - b) / max(np.linalg.norm(b), 1e-300))
    cost = scheme.quadratic_form(rho, psi)
    return psi, cost, res


def _interior_weights(m: int, dtau: float) -> np.ndarray:
    # boundary slices are excluded; nearest interior slices absorb the end
    # intervals so the weights still sum to T
    if m < 4:
        raise LdpError("rate functional needs at least 4 output slices")
    w = np.full(m - 2, dtau)
    w[0] = w[-1] = 1.5 * dtau
    return w


def rate_functional(path: Path, sigma, D, field: Field | None = None,
                    gamma: np.ndarray | None = None,
                    extra_potential=None, extra_drift: DriftTable | None = None,
                    mass_tol: float = 1e-8, start_tol: float = 1e-3,
                    cg_tol: float = 1e-10) -> RateEval:
    """Dynamical cost I of a path with respect to drift field E (Riesz form).

    ``gamma`` (optional) gates the initial condition: a path with
    ||path_0 - gamma||_L2 > start_tol is assigned +inf, mirroring
    "finite rate implies pi_0 = gamma".
    """
    masses = path.masses()
    if np.max(np.abs(masses - masses[0])) > mass_tol:
        return _infinite("path does not conserve mass", path)
    if gamma is not None:
        dist = float(np.sqrt(np.mean((path.values[0] - gamma) ** 2)))
        if dist > start_tol:
            return _infinite(f"initial slice misses gamma by {dist:.3e}", path)

    m = path.times.size
    dtau = path.dt
    scheme = FvScheme(path.d, path.grid, sigma, D, field, extra_potential,
                      extra_drift)
    w = _interior_weights(m, dtau)
    costs = np.zeros(m - 2)
    means = np.zeros(m - 2)
    ell_res = np.zeros(m - 2)
    psi_prev = None
    for idx, j in enumerate(range(1, m - 1)):
        rho = path.values[j]
        r = ((path.values[j + 1] - path.values[j - 1]) / (2 * dtau)
             + scheme.flux_divergence(rho, float(path.times[j])))
        means[idx] = float(r.mean())
        if abs(means[idx]) > 1e-12:
            raise LdpError(f"slice {j}: residual mean {means[idx]:.3e} "
                           "violates the elliptic solvability precondition")
        if path.d == 1:
            sf = scheme.sigma_faces(rho)[0]
            _, cost, res = _elliptic_1d(sf, r, path.grid)
        else:
            psi_prev, cost, res = _elliptic_2d(scheme, rho, r, psi_prev, cg_tol)
        if math.isinf(cost):
            return _infinite(f"slice {j}: degenerate mobility with nonzero "
                             "residual", path)
        costs[idx] = cost
        ell_res[idx] = res
    value = float(np.dot(w, costs))
    return RateEval(value, path.times[1:-1].copy(), costs, means, ell_res,
                    True, dt=dtau, dx=1.0 / path.grid)


def rate_lower_bound(path: Path, sigma, D, field: Field | None = None,
                     modes: int = 8) -> float:
    """sup over a finite Fourier test basis of ell(H) - <<H, H>>_sigma.

    Always <= the Riesz value; the gap reports the basis truncation.  Test
    functions are space modes, constant in time per slice (d = 1).
    """
    if path.d != 1:
        raise LdpError("lower-bound cross-check implemented in d=1")
    m = path.times.size
    M = path.grid
    dtau = path.dt
    scheme = FvScheme(1, M, sigma, D, field)
    centers = (np.arange(M) + 0.5) / M
    basis = []
    for k in range(1, modes + 1):
        basis.append(np.cos(2 * np.pi * k * centers))
        basis.append(np.sin(2 * np.pi * k * centers))
    total = 0.0
    for j in range(1, m - 1):
        rho = path.values[j]
        r = ((path.values[j + 1] - path.values[j - 1]) / (2 * dtau)
             + scheme.flux_divergence(rho, float(path.times[j])))
        ell = np.array([np.mean(r * h) for h in basis])
        Q = np.array([[scheme.quadratic_form(rho, (h1 + h2) / 2) -
                       scheme.quadratic_form(rho, (h1 - h2) / 2)
                       for h2 in basis] for h1 in basis])
        coef = np.linalg.lstsq(2 * Q, ell, rcond=None)[0]
        total += dtau * float(ell @ coef - coef @ Q @ coef)
    return total


def quasi_potential(rho_values: np.ndarray, rho_bar: float,
                    thermo: ThermoTable, U=None,
                    gamma: np.ndarray | None = None,
                    mass_tol: float = 1e-8) -> float:
    """F^U(rho) = integral of f_{gamma(r)}(rho(r)) dr; +inf off the mass shell."""
    rho_values = np.asarray(rho_values, dtype=np.float64)
    if abs(float(rho_values.mean()) - rho_bar) > mass_tol:
        return math.inf
    if gamma is None:
        d = rho_values.ndim
        gamma = stationary_profile(rho_bar, U, thermo, rho_values.shape[0],
                                   d).values
    g = np.asarray(gamma, dtype=np.float64)
    val = thermo.f(rho_values) - thermo.f(g) - thermo.fprime(g) * (rho_values - g)
    return float(val.mean())


def energy_Q(path: Path) -> float:
    """Discrete integral of <grad pi, grad pi> dt (trapezoid over slices)."""
    M = path.grid
    vals = path.values
    per_slice = np.zeros(path.times.size)
    for a in range(path.d):
        g = M * (np.roll(vals, -1, axis=a + 1) - vals)
        per_slice += (g * g).mean(axis=tuple(range(1, vals.ndim)))
    return float(np.trapezoid(per_slice, path.times))


def energy_Q_modal(path: Path, kmax: int) -> float:
    """Spectral partial sum of the energy over modes |k| <= kmax: the
    variational sup over that test-field basis, a lower bound on energy_Q."""
    vals = path.values
    M = path.grid
    per_slice = np.zeros(path.times.size)
    freqs = [np.fft.fftfreq(M, d=1.0 / M) for _ in range(path.d)]
    mesh = np.meshgrid(*freqs, indexing="ij")
    # eigenvalue of the discrete face-gradient stencil for mode k
    lam = sum((2 * M * np.sin(np.pi * k / M)) ** 2 for k in mesh)
    keep = np.ones_like(lam, dtype=bool)
    for k in mesh:
        keep &= np.abs(k) <= kmax
    for j in range(path.times.size):
        ft = np.fft.fftn(vals[j]) / vals[j].size
        per_slice[j] = float(np.sum(lam[keep] * np.abs(ft[keep]) ** 2))
    return float(np.trapezoid(per_slice, path.times))


def duality_defect(path: Path, field: Field, rho_bar: float,
                   thermo: ThermoTable, sigma, D,
                   gamma: np.ndarray | None = None,
                   mass_tol: float = 1e-6) -> dict:
    """Residual of the finite-interval time-reversal identity

        I^{-grad U + Et}(pi) = F(pi_0) - F(pi_-T) + I^{-grad U - Et}(theta pi).

    Both rate functionals are self-conditioned (gamma = own first slice).
    """
    U = field.U
    if gamma is None:
        gamma = stationary_profile(rho_bar, U, thermo, path.grid, path.d).values
    fwd = rate_functional(path, sigma, D, field, mass_tol=mass_tol)
    rev = rate_functional(path.reversed(), sigma, D, field.reversed_etilde(),
                          mass_tol=mass_tol)
    if not (fwd.finite and rev.finite):
        raise LdpError(f"duality defect undefined: {fwd.message} {rev.message}")
    f_end = quasi_potential(path.values[-1], rho_bar, thermo, U, gamma,
                            mass_tol=mass_tol)
    f_start = quasi_potential(path.values[0], rho_bar, thermo, U, gamma,
                              mass_tol=mass_tol)
    defect = abs(fwd.value - (f_end - f_start + rev.value))
    return {"defect": defect, "forward": fwd.value, "reversed": rev.value,
            "free_energy_drop": f_end - f_start}


def lyapunov_series(path: Path, rho_bar: float, thermo: ThermoTable, sigma,
                    gamma: np.ndarray | None = None, U=None) -> list[dict]:
    """Per output time: F^U(pi_t), the dissipation
    <grad G_t, sigma(pi_t) grad G_t> with G_t = f'(pi_t) - f'(gamma), and at
    interior times the defect |dF/dt + dissipation| (centered differences)."""
    if gamma is None:
        gamma = stationary_profile(rho_bar, U, thermo, path.grid, path.d).values
    m = path.times.size
    scheme = FvScheme(path.d, path.grid, sigma, lambda r: np.ones_like(r))
    fvals = np.array([quasi_potential(path.values[j], rho_bar, thermo, U,
                                      gamma, mass_tol=1e-6)
                      for j in range(m)])
    out = []
    for j in range(m):
        rho = path.values[j]
        if np.any(rho <= 0) or np.any(rho >= 1):
            raise LdpError("path touches {0,1}: f' diverges")
        G = thermo.fprime(rho) - thermo.fprime(gamma)
        dis = scheme.quadratic_form(rho, G)
        rec = {"t": float(path.times[j]), "free_energy": float(fvals[j]),
               "dissipation": float(dis)}
        if 0 < j < m - 1:
            dfdt = (fvals[j + 1] - fvals[j - 1]) / (2 * path.dt)
            rec["defect"] = abs(dfdt + dis)
        out.append(rec)
    return out


@dataclass
class ExitPlan:
    """Optimal fluctuation path (time-reversed adjoint relaxation)."""

    target: np.ndarray
    path: Path
    value: float
    rate_value: float
    horizon: float
    achieved_distance: float
    relax_tol: float

    def to_json(self) -> str:
        return json.dumps({
            "value": self.value,
            "rate_value": self.rate_value,
            "horizon": self.horizon,
            "achieved_distance": self.achieved_distance,
            "relax_tol": self.relax_tol,
            "times": list(map(float, self.path.times)),
        }, indent=1)


def optimal_exit_path(rho: np.ndarray, rho_bar: float, field: Field | None,
                      thermo: ThermoTable, sigma, D, relax_tol: float = 1e-4,
                      chunk_T: float = 0.25, max_T: float = 16.0,
                      slices_per_chunk: int = 100, mass_tol: float = 1e-8,
                      verify: bool = True) -> ExitPlan:
    """Relax rho under the adjoint flow until gamma is reached (within
    relax_tol in L2), then return the time reversal as the exit path.

    The quasi-potential value is F^U(rho); when ``verify`` is set the rate
    functional of the reversed path (driven by the original field) is
    evaluated as the independent cross-check of the minimizer identity.
    """
    rho = np.asarray(rho, dtype=np.float64)
    d = rho.ndim
    M = rho.shape[0]
    if abs(float(rho.mean()) - rho_bar) > mass_tol:
        raise LdpError("target profile off the mass shell")
    U = field.U if field is not None else None
    gamma = stationary_profile(rho_bar, U, thermo, M, d).values

    def dist(v):
        return float(np.sqrt(np.mean((v - gamma) ** 2)))

    chunks = []
    current = rho.copy()
    total_T = 0.0
    achieved = dist(current)
    while achieved > relax_tol and total_T < max_T:
        seg = solve_adjoint(current, field, d, M, sigma, D, chunk_T,
                            n_out=slices_per_chunk)
        seg = Path(seg.times + total_T, seg.values)
        chunks.append(seg)
        total_T += chunk_T
        current = seg.values[-1]
        achieved = dist(current)
    if not chunks:  # already at gamma
        times = np.linspace(0.0, chunk_T, slices_per_chunk + 1)
        vals = np.repeat(rho[None], slices_per_chunk + 1, axis=0)
        chunks = [Path(times, vals)]
        total_T = chunk_T

    times = np.concatenate([chunks[0].times]
                           + [c.times[1:] for c in chunks[1:]])
    vals = np.concatenate([chunks[0].values]
                          + [c.values[1:] for c in chunks[1:]])
    relaxation = Path(times, vals)
    exit_path = relaxation.reversed()
    value = quasi_potential(rho, rho_bar, thermo, U, gamma, mass_tol=mass_tol)
    rate_value = math.nan
    if verify:
        ev = rate_functional(exit_path, sigma, D, field, gamma=gamma,
                             start_tol=max(10 * relax_tol, 10 * achieved),
                             mass_tol=mass_tol)
        rate_value = ev.value
    return ExitPlan(rho, exit_path, value, rate_value, total_T, achieved,
                    relax_tol)


def controlled_field(target: Path, sigma, D, field: Field | None = None,
                     cg_tol: float = 1e-10) -> DriftTable:
    """Per-time face samples of E + 2 grad Psi_t, the drive whose
    hydrodynamics reproduces the target path.

    Endpoint slices reuse the nearest interior solve (constant-in-time
    extrapolation); feed the result to ``solve_hydro`` (as the full drift,
    field=None) or map it onto KMC bonds for microscopic steering.
    """
    m = target.times.size
    M = target.grid
    scheme = FvScheme(target.d, M, sigma, D, field)
    tables = [np.zeros((m,) + target.values.shape[1:]) for _ in range(target.d)]
    psi_prev = None
    for j in range(1, m - 1):
        rho = target.values[j]
        r = ((target.values[j + 1] - target.values[j - 1]) / (2 * target.dt)
             + scheme.flux_divergence(rho, float(target.times[j])))
        if abs(float(r.mean())) > 1e-12:
            raise LdpError("target path violates mass conservation")
        if target.d == 1:
            grad_psi, cost, _ = _elliptic_1d(scheme.sigma_faces(rho)[0], r, M)
            if grad_psi is None:
                raise LdpError(f"slice {j}: degenerate mobility on the target")
            grads = [grad_psi]
        else:
            psi_prev, cost, _ = _elliptic_2d(scheme, rho, r, psi_prev, cg_tol)
            if math.isinf(cost):
                raise LdpError(f"slice {j}: degenerate mobility on the target")
            grads = scheme.grad_faces(psi_prev)
        drift = scheme.drift_at(float(target.times[j]))
        for a in range(target.d):
            tables[a][j] = drift[a] + 2.0 * grads[a]
    for a in range(target.d):
        tables[a][0] = tables[a][1]
        tables[a][-1] = tables[a][-2]
    return DriftTable(target.times.copy(), tables)
