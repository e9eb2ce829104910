"""Finite-range Hamiltonians, Gibbs measures, and 1-D transfer-matrix
thermodynamics.

Sign convention (fixed once, everything downstream is convention-invariant):
the Gibbs weight is ``exp{-H}`` with

    H^lam(eta) = sum_bonds Phi(eta_x, eta_y) + mu_sign * lam * sum_x eta_x,
    Phi(eta_x, eta_y) = -J * eta_x * eta_y,

and the default ``mu_sign = -1`` makes the density rho(lam) = p'(lam)
increasing, so the free energy is the plain Legendre transform
f(rho) = sup_lam {lam rho - p(lam)}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.optimize import brentq

from .lattice import Bond, Configuration, Torus, enumerate_sector

_LAMBDA_BRACKET = 120.0


class ThermoError(ValueError):
    pass


@dataclass(frozen=True)
class Interaction:
    """Translation-invariant pair interaction: zero or nearest-neighbor J.

    ``coupling`` J > 0 is attractive under the exp{-H} weight.
    """

    coupling: float = 0.0
    mu_sign: int = -1

    @property
    def kind(self) -> str:
        return "zero" if self.coupling == 0.0 else "nearest_neighbor"

    @property
    def range(self) -> int:
        return 0 if self.coupling == 0.0 else 1


ZERO_INTERACTION = Interaction(0.0)


def hamiltonian(interaction: Interaction, torus: Torus, config: Configuration,
                lam: float = 0.0) -> float:
    """Full H^lam(eta) over the torus (sum over the deduplicated bond list)."""
    occ = config.occupancy
    e = 0.0
    if interaction.coupling != 0.0:
        e -= interaction.coupling * float(
            np.sum(occ[torus.bond_x].astype(np.float64) * occ[torus.bond_y]))
    if lam != 0.0:
        e += interaction.mu_sign * lam * config.count
    return e


def energy_diff(interaction: Interaction, torus: Torus, config: Configuration,
                bond: Bond) -> float:
    """H(eta^{x,y}) - H(eta) from the radius-r0 window around the bond.

    The lambda term never contributes: exchanges conserve the particle count.
    """
    occ = config.occupancy
    ex, ey = int(occ[bond.x]), int(occ[bond.y])
    if ex == ey or interaction.coupling == 0.0:
        return 0.0
    nx = ny = 0
    for z in torus.neighbors[bond.x]:
        if z != bond.y:
            nx += int(occ[z])
    for z in torus.neighbors[bond.y]:
        if z != bond.x:
            ny += int(occ[z])
    # neighbors lists repeat a site when two directions wrap to it (N=2);
    # the bond list is deduplicated, so count each incident bond once
    if torus.N == 2:
        nx, ny = _dedup_partner_count(torus, bond, occ)
    return -interaction.coupling * (ey - ex) * (nx - ny)


def _dedup_partner_count(torus: Torus, bond: Bond, occ) -> tuple[int, int]:
    nx = ny = 0
    for bx, by in zip(torus.bond_x, torus.bond_y):
        if bx == bond.x and by != bond.y:
            nx += int(occ[by])
        elif by == bond.x and bx != bond.y:
            nx += int(occ[bx])
        if bx == bond.y and by != bond.x:
            ny += int(occ[by])
        elif by == bond.y and bx != bond.x:
            ny += int(occ[bx])
    return nx, ny


# ---------------------------------------------------------------------------
# transfer matrix pressure (d = 1, nearest-neighbor)
# ---------------------------------------------------------------------------

def pressure(interaction: Interaction, lam):
    """log of the Perron eigenvalue of the 2x2 transfer matrix.

    Accepts real or complex ``lam`` (complex-step differentiation works).
    Only the 1-D nearest-neighbor chain is supported; use
    ``pressure_enumeration`` as the finite-N fallback otherwise.
    """
    if interaction.range > 1:
        raise ThermoError("transfer matrix requires range <= 1; "
                          "use pressure_enumeration for a finite-N estimate")
    J = interaction.coupling
    s = interaction.mu_sign
    lam_eff = -s * np.asarray(lam)  # weight carries exp{+lam_eff * count}
    t00 = 1.0
    t01 = np.exp(lam_eff / 2.0)
    t11 = np.exp(J + lam_eff)
    disc = np.sqrt(((t11 - t00) / 2.0) ** 2 + t01 * t01)
    return np.log((t00 + t11) / 2.0 + disc)


def pressure_enumeration(interaction: Interaction, lam: float, N: int) -> float:
    """(1/N) log Z_N^lam on the N-ring by exhaustive enumeration (oracle)."""
    if N > 24:
        raise ThermoError(f"enumeration limited to N<=24, got {N}")
    J = interaction.coupling
    lam_eff = -interaction.mu_sign * lam
    m = np.arange(2**N)[:, None]
    bits = ((m >> np.arange(N)[None, :]) & 1).astype(np.float64)
    e = J * np.sum(bits * np.roll(bits, -1, axis=1), axis=1) + lam_eff * bits.sum(axis=1)
    emax = e.max()
    return float((emax + np.log(np.sum(np.exp(e - emax)))) / N)


def _pprime(interaction: Interaction, lam):
    # complex step: machine-precision derivative, no cancellation
    h = 1e-20
    out = np.imag(pressure(interaction, np.asarray(lam) + 1j * h)) / h
    return out if np.ndim(lam) else float(out)


def _psecond(interaction: Interaction, lam, h: float = 1e-5):
    out = (_pprime(interaction, np.asarray(lam) + h)
           - _pprime(interaction, np.asarray(lam) - h)) / (2 * h)
    return out if np.ndim(lam) else float(out)


def _lam_of_rho(interaction: Interaction, rho):
    """Invert rho = p'(lam): safeguarded vectorized Newton (p' is strictly
    increasing), bisection fallback for any straggler."""
    rho_arr = np.atleast_1d(np.asarray(rho, dtype=np.float64))
    lam = np.log(rho_arr / (1.0 - rho_arr)) - interaction.coupling * rho_arr
    for _ in range(60):
        err = _pprime(interaction, lam) - rho_arr
        if np.max(np.abs(err)) < 1e-14:
            break
        lam = np.clip(lam - err / _psecond(interaction, lam),
                      -_LAMBDA_BRACKET, _LAMBDA_BRACKET)
    else:
        for i in np.flatnonzero(np.abs(_pprime(interaction, lam) - rho_arr) > 1e-13):
            lam[i] = brentq(lambda l: _pprime(interaction, l) - rho_arr[i],
                            -_LAMBDA_BRACKET, _LAMBDA_BRACKET,
                            xtol=1e-14, rtol=8.9e-16)
    return lam if np.ndim(rho) else float(lam[0])


# ---------------------------------------------------------------------------
# thermodynamic table
# ---------------------------------------------------------------------------

class ThermoTable:
    """Tabulated rho -> (f, f', f'', chi) with monotone-cubic interpolation.

    Nodes are exact: lam(rho) solves the Legendre stationarity condition to
    1e-14, then f = lam*rho - p(lam), f' = lam, f'' = 1/p''(lam).  Queries
    interpolate each exact nodal series with a C^2 cubic spline (fourth
    order; a shape-preserving cubic is an order short of the table's
    accuracy targets).  Convexity is asserted on the nodes themselves.
    """

    def __init__(self, interaction: Interaction, npoints: int = 2048,
                 rho_min: float = 1e-4):
        self.interaction = interaction
        self.rho_min = rho_min
        rho = np.linspace(rho_min, 1.0 - rho_min, npoints)
        lam = _lam_of_rho(interaction, rho)
        p = np.real(pressure(interaction, lam))
        psec = _psecond(interaction, lam)
        self.rho_grid = rho
        self.f_grid = lam * rho - p
        self.fprime_grid = lam
        self.fsecond_grid = 1.0 / psec
        self.chi_grid = psec

        d2 = np.diff(self.f_grid, 2)
        if np.any(d2 < -1e-12):
            raise ThermoError("tabulated free energy is not convex; "
                              "sign-convention bug in the pressure")

        self._f = CubicSpline(rho, self.f_grid)
        self._fp = CubicSpline(rho, self.fprime_grid)
        self._fpp = CubicSpline(rho, self.fsecond_grid)
        self._rho_of_lam = PchipInterpolator(lam, rho)  # monotone seed only

    def _clip(self, rho):
        r = np.asarray(rho, dtype=np.float64)
        if np.any(r < -1e-12) or np.any(r > 1 + 1e-12):
            raise ThermoError("density outside [0,1]")
        return np.clip(r, self.rho_min, 1.0 - self.rho_min)

    def f(self, rho):
        return self._f(self._clip(rho))

    def fprime(self, rho):
        return self._fp(self._clip(rho))

    def fsecond(self, rho):
        return self._fpp(self._clip(rho))

    def chi(self, rho):
        r = np.asarray(rho, dtype=np.float64)
        out = np.where((r <= 0.0) | (r >= 1.0), 0.0,
                       1.0 / self._fpp(self._clip(r)))
        return out if out.ndim else float(out)

    def inv_fprime(self, v):
        """(f')^{-1}, vectorized; PCHIP seed plus Newton refinement."""
        v = np.asarray(v, dtype=np.float64)
        lo, hi = self.fprime_grid[0], self.fprime_grid[-1]
        vc = np.clip(v, lo, hi)
        r = np.asarray(self._rho_of_lam(vc), dtype=np.float64)
        for _ in range(3):
            r = np.clip(r - (self._fp(r) - vc) / self._fpp(r),
                        self.rho_min, 1.0 - self.rho_min)
        return r if r.ndim else float(r)

    def f_excess(self, rho, rho_bar):
        """Static rate function f_rhobar(rho) = f(rho)-f(rhobar)-f'(rhobar)(rho-rhobar)."""
        rho = np.asarray(rho, dtype=np.float64)
        return (self.f(rho) - self.f(rho_bar)
                - self.fprime(rho_bar) * (rho - rho_bar))

    def fprime_range(self) -> tuple[float, float]:
        return float(self.fprime_grid[0]), float(self.fprime_grid[-1])

    def to_csv(self, path) -> None:
        header = "rho,f,fprime,fsecond,chi"
        data = np.column_stack([self.rho_grid, self.f_grid, self.fprime_grid,
                                self.fsecond_grid, self.chi_grid])
        np.savetxt(path, data, delimiter=",", header=header, comments="",
                   fmt="%.17g")


def free_energy_table(interaction: Interaction, npoints: int = 2048,
                      rho_min: float = 1e-4) -> ThermoTable:
    return ThermoTable(interaction, npoints=npoints, rho_min=rho_min)


def compressibility(thermo: ThermoTable, rho: float) -> float:
    """chi(rho) = 1/f''(rho); the endpoints return the explicit limit 0."""
    if rho in (0.0, 1.0):
        return 0.0
    if not 0.0 < rho < 1.0:
        raise ThermoError(f"rho={rho} outside [0,1]")
    return float(thermo.chi(rho))


# ---------------------------------------------------------------------------
# exact finite-volume measures
# ---------------------------------------------------------------------------

def canonical_exact(interaction: Interaction, torus: Torus, K: int):
    """Canonical Gibbs weights ~ exp{-H} on the K-particle sector.

    Returns (states, probabilities); independent of the chemical potential.
    """
    states = enumerate_sector(torus, K)
    energies = np.array([hamiltonian(interaction, torus, s) for s in states])
    w = np.exp(-(energies - energies.min()))
    return states, w / w.sum()


def product_expectation(observable, rho: float, window,
                        interaction: Interaction = ZERO_INTERACTION,
                        periodic_window: int = 16, report: bool = False):
    """Expectation of a local observable under mu_rho.

    ``window`` is the observable's support as integer offsets (1-D ints or
    d-tuples); ``observable(occ)`` must accept a (nconf, len(window)) 0/1
    array and return (nconf,) values.  Zero interaction: exact Bernoulli
    product sum.  Interacting (1-D only): grand-canonical weight on a
    periodic window of ``periodic_window`` sites at chemical potential
    f'(rho); with ``report=True`` also returns the truncation estimate from
    doubling the window.
    """
    window = [w if isinstance(w, tuple) else (int(w),) for w in window]
    nsup = len(window)
    if nsup > 24:
        raise ThermoError(f"window of {nsup} sites too large for exhaustive sum")

    if interaction.coupling == 0.0:
        if rho in (0.0, 1.0):
            occ = np.full((1, nsup), int(rho), dtype=np.int8)
            val = float(np.asarray(observable(occ))[0])
            return (val, 0.0) if report else val
        confs = _bit_table(nsup)
        n1 = confs.sum(axis=1)
        wts = rho**n1 * (1 - rho) ** (nsup - n1)
        val = float(np.dot(wts, np.asarray(observable(confs), dtype=np.float64)))
        return (val, 0.0) if report else val

    if any(len(w) != 1 for w in window):
        raise ThermoError("interacting expectations implemented for d=1 windows")
    offsets = [w[0] for w in window]
    span = max(offsets) - min(offsets) + 1
    L = max(periodic_window, span + 2 * interaction.range)
    val = _windowed_expectation(observable, rho, offsets, interaction, L)
    if report:
        val2 = _windowed_expectation(observable, rho, offsets, interaction,
                                     min(L + 4, 20))
        return val, abs(val2 - val)
    return val


def _windowed_expectation(observable, rho, offsets, interaction, L):
    lam = _lam_of_rho(interaction, rho)
    lam_eff = -interaction.mu_sign * lam
    confs = _bit_table(L)
    J = interaction.coupling
    e = J * np.sum(confs * np.roll(confs, -1, axis=1), axis=1) + lam_eff * confs.sum(axis=1)
    w = np.exp(e - e.max())
    w /= w.sum()
    base = min(offsets)
    cols = [(o - base) % L for o in offsets]
    return float(np.dot(w, np.asarray(observable(confs[:, cols]), dtype=np.float64)))


def _bit_table(n: int) -> np.ndarray:
    m = np.arange(2**n, dtype=np.int64)[:, None]
    return ((m >> np.arange(n)[None, :]) & 1).astype(np.int8)
