"""Macroscopic solvers: the driven diffusion equation, its time-reversed
adjoint, and stationary profiles.

Scheme: explicit Euler, conservative finite volumes on the periodic M^d
grid.  Face flux = sigma(face) * drift - D(face) * grad with arithmetic-mean
face densities; mass conservation is exact by telescoping.  A monotone
upwind correction replaces the centered advective flux wherever the cell
Peclet number exceeds 2 (activations are counted, never silent).  Cells
leaving [0,1] raise; that is a numerical guard, not data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coarse import DensityField
from .fields import Field, face_drift
from .gibbs import ThermoTable


class PdeError(RuntimeError):
    pass


@dataclass
class Path:
    """Time-indexed density fields on a fixed grid (uniform output times)."""

    times: np.ndarray
    values: np.ndarray  # (m, M) or (m, M, M)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def d(self) -> int:
        return self.values.ndim - 1

    @property
    def grid(self) -> int:
        return self.values.shape[1]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def slice(self, j: int) -> DensityField:
        return DensityField(self.values[j])

    def masses(self) -> np.ndarray:
        return self.values.mean(axis=tuple(range(1, self.values.ndim)))

    def reversed(self) -> "Path":
        """Time reversal theta: slice order flipped, times relabelled to run
        forward from 0 with the same spacing."""
        return Path(self.times[-1] - self.times[::-1], self.values[::-1].copy())

    def to_csv(self, path) -> None:
        m = self.times.size
        flat = self.values.reshape(m, -1)
        idx = np.indices(self.values.shape[1:]).reshape(self.d, -1).T
        with open(path, "w") as fh:
            fh.write("t," + ",".join(f"cell{i}" for i in range(self.d)) + ",value\n")
            for j in range(m):
                for cell, v in zip(idx, flat[j]):
                    cells = ",".join(str(int(c)) for c in cell)
                    fh.write(f"{self.times[j]:.17g},{cells},{v:.17g}\n")


@dataclass
class DriftTable:
    """Per-axis face-drift samples at given times, linearly interpolated."""

    times: np.ndarray
    tables: list  # per axis: (nt, *faces)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.tables = [np.asarray(t, dtype=np.float64) for t in self.tables]

    def at(self, t: float) -> list[np.ndarray]:
        tg = self.times
        j = int(np.searchsorted(tg, t, side="right") - 1)
        j = max(0, min(j, tg.size - 2)) if tg.size > 1 else 0
        if tg.size == 1:
            return [tab[0] for tab in self.tables]
        frac = np.clip((t - tg[j]) / (tg[j + 1] - tg[j]), 0.0, 1.0)
        return [tab[j] * (1 - frac) + tab[j + 1] * frac for tab in self.tables]

    def max_abs(self) -> float:
        return max(float(np.abs(tab).max()) for tab in self.tables)


class FvScheme:
    """Shared spatial discretization for the solver and the residual/rate
    functional evaluations (identical stencils on both sides)."""

    def __init__(self, d: int, M: int, sigma, D, field: Field | None = None,
                 extra_potential=None, extra_drift: DriftTable | None = None,
                 peclet_limit: float = 2.0):
        if d not in (1, 2):
            raise PdeError("solvers implemented for d in {1, 2}")
        self.d = d
        self.M = M
        self.sigma = sigma
        self.D = D
        self.dx = 1.0 / M
        self.peclet_limit = peclet_limit
        self.static_drift = (face_drift(field, d, M) if field is not None
                             else [np.zeros((M,) * d) for _ in range(d)])
        self.extra_potential = extra_potential
        self.extra_drift = extra_drift
        self.limiter_activations = 0
        centers = (np.arange(M) + 0.5) / M
        if d == 1:
            self.centers = centers[:, None]
        else:
            cx, cy = np.meshgrid(centers, centers, indexing="ij")
            self.centers = np.stack([cx, cy], axis=-1).reshape(-1, 2)

    def drift_at(self, t: float) -> list[np.ndarray]:
        drift = [s.copy() for s in self.static_drift]
        if self.extra_drift is not None:
            for a, extra in enumerate(self.extra_drift.at(t)):
                drift[a] = drift[a] + extra
        if self.extra_potential is not None:
            h = np.asarray(self.extra_potential(t, self.centers),
                           dtype=np.float64).reshape((self.M,) * self.d)
            for a in range(self.d):
                drift[a] = drift[a] + self.M * (np.roll(h, -1, axis=a) - h)
        return drift

    def fluxes(self, rho: np.ndarray, t: float) -> list[np.ndarray]:
        drift = self.drift_at(t)
        out = []
        for a in range(self.d):
            ahead = np.roll(rho, -1, axis=a)
            rf = 0.5 * (rho + ahead)
            Df = self.D(rf)
            adv = self.sigma(rf) * drift[a]
            pe = np.abs(drift[a]) * self.dx / np.maximum(Df, 1e-300)
            lim = pe > self.peclet_limit
            if np.any(lim):
                upwind = np.where(drift[a] > 0, rho, ahead)
                adv = np.where(lim, self.sigma(upwind) * drift[a], adv)
                self.limiter_activations += int(np.count_nonzero(lim))
            out.append(adv - Df * self.M * (ahead - rho))
        return out

    def divergence(self, faces: list[np.ndarray]) -> np.ndarray:
        div = np.zeros_like(faces[0])
        for a in range(self.d):
            div += self.M * (faces[a] - np.roll(faces[a], 1, axis=a))
        return div

    def flux_divergence(self, rho: np.ndarray, t: float) -> np.ndarray:
        return self.divergence(self.fluxes(rho, t))

    def grad_faces(self, phi: np.ndarray) -> list[np.ndarray]:
        return [self.M * (np.roll(phi, -1, axis=a) - phi) for a in range(self.d)]

    def sigma_faces(self, rho: np.ndarray) -> list[np.ndarray]:
        return [self.sigma(0.5 * (rho + np.roll(rho, -1, axis=a)))
                for a in range(self.d)]

    def quadratic_form(self, rho: np.ndarray, phi: np.ndarray) -> float:
        """<grad phi, sigma(rho) grad phi> with the face stencil."""
        total = 0.0
        for sf, gf in zip(self.sigma_faces(rho), self.grad_faces(phi)):
            total += float(np.sum(sf * gf * gf))
        return total * self.dx**self.d


@dataclass
class PdeProblem:
    d: int
    M: int
    sigma: object                 # vectorized rho -> sigma(rho)
    D: object                     # vectorized rho -> D(rho)
    field: Field | None
    initial: np.ndarray
    T: float
    n_out: int = 80
    c_safe: float = 0.4
    dt_override: float | None = None

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=np.float64)
        if self.initial.shape != (self.M,) * self.d:
            raise PdeError("initial data does not match the grid")
        if np.any(self.initial < 0) or np.any(self.initial > 1):
            raise PdeError("initial data outside [0, 1]")


def _stable_dt(problem: PdeProblem, scheme: FvScheme) -> float:
    rr = np.linspace(0.0, 1.0, 513)
    dmax = float(np.max(problem.D(rr)))
    smax = float(np.max(problem.sigma(rr)))
    sprime = float(np.max(np.abs(np.gradient(problem.sigma(rr), rr))))
    dx = scheme.dx
    dt = problem.c_safe * dx * dx / (2.0 * problem.d * max(dmax, 1e-12))
    drift_max = max((float(np.abs(s).max()) for s in scheme.static_drift),
                    default=0.0)
    if scheme.extra_drift is not None:
        drift_max += scheme.extra_drift.max_abs()
    if drift_max > 0 and smax > 0:
        dt = min(dt, problem.c_safe * dx / (drift_max * max(sprime, 1.0)))
    return dt


def solve_hydro(problem: PdeProblem, extra_potential=None,
                extra_drift: DriftTable | None = None) -> Path:
    """March the driven diffusion equation; returns n_out+1 uniform slices.

    ``extra_potential(t, pts)`` adds the time-dependent gradient drive
    grad H_t; ``extra_drift`` adds (or, with ``field=None``, constitutes)
    face-drift tables, e.g. a controlled steering field.
    """
    scheme = FvScheme(problem.d, problem.M, problem.sigma, problem.D,
                      problem.field, extra_potential, extra_drift)
    dt_max = problem.dt_override or _stable_dt(problem, scheme)
    tau = problem.T / problem.n_out
    sub = max(1, int(np.ceil(tau / dt_max)))
    dt = tau / sub

    rho = problem.initial.copy()
    mass0 = rho.mean()
    drift = 0.0
    out = np.empty((problem.n_out + 1,) + rho.shape)
    out[0] = rho
    t = 0.0
    for j in range(1, problem.n_out + 1):
        for _ in range(sub):
            rho = rho - dt * scheme.flux_divergence(rho, t)
            t += dt
        lo, hi = float(rho.min()), float(rho.max())
        if lo < -1e-12 or hi > 1 + 1e-12:
            raise PdeError(f"solution left [0,1] at t={t:.6g} "
                           f"(range [{lo:.3e}, {hi:.3e}]); refine dt or grid")
        np.clip(rho, 0.0, 1.0, out=rho)
        drift = max(drift, abs(float(rho.mean()) - mass0))
        if drift > 1e-10:
            raise PdeError("mass conservation violated beyond 1e-10")
        out[j] = rho
    times = np.linspace(0.0, problem.T, problem.n_out + 1)
    path = Path(times, out)
    path.limiter_activations = scheme.limiter_activations
    path.dt_internal = dt
    path.metadata = {
        "d": problem.d, "grid": problem.M, "dt": dt,
        "cfl_safety": problem.c_safe, "steps_per_output": sub,
        "conservation_drift": drift,
        "limiter_activations": scheme.limiter_activations,
    }
    return path


def solve_adjoint(rho0: np.ndarray, field: Field | None, d: int, M: int,
                  sigma, D, T: float, n_out: int = 80,
                  c_safe: float = 0.4) -> Path:
    """Relaxation flow with drift -grad U - Etilde (sign of the
    divergence-free part flipped relative to the forward dynamics)."""
    adj = field.reversed_etilde() if field is not None else None
    problem = PdeProblem(d, M, sigma, D, adj, rho0, T, n_out, c_safe)
    return solve_hydro(problem)


def stationary_profile(rho_bar: float, U, thermo: ThermoTable, M: int,
                       d: int = 1) -> DensityField:
    """gamma(r) = (f')^{-1}(alpha - U(r)) with alpha fixed by the mass.

    The mass map alpha -> mean gamma is strictly increasing, so alpha is
    found by bisection; endpoints rho_bar in {0,1} return constant fields.
    """
    if not 0.0 <= rho_bar <= 1.0:
        raise PdeError(f"rho_bar={rho_bar} outside [0,1]")
    shape = (M,) * d
    if rho_bar in (0.0, 1.0):
        return DensityField(np.full(shape, rho_bar))
    centers = (np.arange(M) + 0.5) / M
    if d == 1:
        pts = centers[:, None]
    else:
        grids = np.meshgrid(*([centers] * d), indexing="ij")
        pts = np.stack(grids, axis=-1).reshape(-1, d)
    u = (np.zeros(pts.shape[0]) if U is None
         else np.asarray(U(pts), dtype=np.float64))

    lo_f, hi_f = thermo.fprime_range()
    lo = lo_f + float(u.min())
    hi = hi_f + float(u.max())

    def mass(alpha):
        return float(np.mean(thermo.inv_fprime(alpha - u)))

    if not mass(lo) <= rho_bar <= mass(hi):
        raise PdeError("stationary profile bisection cannot bracket the mass; "
                       "thermo table range too narrow")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mass(mid) < rho_bar:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14:
            break
    alpha = 0.5 * (lo + hi)
    gamma = thermo.inv_fprime(alpha - u).reshape(shape)
    got = float(gamma.mean())
    if abs(got - rho_bar) > 1e-10:
        raise PdeError(f"stationary profile mass {got} misses {rho_bar} "
                       "beyond 1e-10")
    return DensityField(gamma)


def pde_residual(path: Path, j: int, sigma, D, field: Field | None = None,
                 extra_potential=None, extra_drift: DriftTable | None = None
                 ) -> np.ndarray:
    """Discrete r = d_t pi + div[sigma(pi) E - D(pi) grad pi] at interior
    output time j (centered time difference, solver face stencil)."""
    m = path.times.size
    if not 0 < j < m - 1:
        raise PdeError("residual needs an interior output time")
    scheme = FvScheme(path.d, path.grid, sigma, D, field, extra_potential,
                      extra_drift)
    dtau = path.times[j + 1] - path.times[j - 1]
    ddt = (path.values[j + 1] - path.values[j - 1]) / dtau
    return ddt + scheme.flux_divergence(path.values[j], float(path.times[j]))
