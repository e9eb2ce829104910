"""Jump-rate families for the Kawasaki dynamics and exact sector analysis.

Symmetric rates satisfy detailed balance c0(eta^{xy}) = c0(eta) e^{grad H}
identically.  Two families are provided:

* ``heatbath``:  c0 = exp{-grad H / 2}   (gradient when the interaction is zero)
* ``neighbor_weighted``:  c0 = (1 + a * sum_{z in A} eta_z) exp{-grad H / 2}

with a witness set A disjoint from the bond so detailed balance holds by
construction.  The default witness is the single trailing site x - e_i: the
reflection-symmetric pair {x - e_i, y + e_i} makes the model a gradient one
in d = 1 (its stationary measure stays canonical for every constant field
and the mobility infimum sits at f = 0), so it is kept only as the
``symmetric`` option for negative controls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import Field, field_work
from .gibbs import Interaction, energy_diff, hamiltonian
from .lattice import Bond, Configuration, Torus, enumerate_sector

MAX_SECTOR_STATES = 200_000


class DynamicsError(ValueError):
    pass


@dataclass(frozen=True)
class RateFamily:
    kind: str = "heatbath"          # "heatbath" | "neighbor_weighted"
    a: float = 0.0
    witness: str = "trailing"       # "trailing" | "symmetric"

    def __post_init__(self):
        if self.kind not in ("heatbath", "neighbor_weighted"):
            raise DynamicsError(f"unknown rate family kind {self.kind!r}")
        if self.witness not in ("trailing", "symmetric"):
            raise DynamicsError(f"unknown witness set {self.witness!r}")
        if self.a < 0:
            raise DynamicsError("witness weight a must be >= 0")

    def witness_sites(self, torus: Torus, bond: Bond) -> tuple[int, ...]:
        if self.kind != "neighbor_weighted":
            return ()
        i = bond.direction
        behind = int(torus.neighbors[bond.x, 2 * i])       # x - e_i
        if self.witness == "trailing":
            return (behind,)
        ahead = int(torus.neighbors[bond.y, 2 * i + 1])    # y + e_i
        return (behind, ahead)


SSEP = RateFamily("heatbath")


def rate_symmetric(family: RateFamily, interaction: Interaction, torus: Torus,
                   config: Configuration, bond: Bond) -> float:
    dH = energy_diff(interaction, torus, config, bond)
    c = float(np.exp(-0.5 * dH))
    if family.kind == "neighbor_weighted":
        occ = config.occupancy
        c *= 1.0 + family.a * sum(int(occ[z]) for z in family.witness_sites(torus, bond))
    return c


def rate_asymmetric(family: RateFamily, interaction: Interaction, field: Field,
                    torus: Torus, config: Configuration, bond: Bond) -> float:
    """c^E = c0 * exp{E_N(x,y) (eta_x - eta_y)/2} for the canonical orientation."""
    c0 = rate_symmetric(family, interaction, torus, config, bond)
    occ = config.occupancy
    diff = int(occ[bond.x]) - int(occ[bond.y])
    if diff == 0:
        return c0
    w = field_work(field, torus, bond.x, bond.y)
    return c0 * float(np.exp(0.5 * w * diff))


def rate_perturbed(family: RateFamily, interaction: Interaction, field: Field,
                   torus: Torus, config: Configuration, bond: Bond,
                   t: float, H) -> float:
    """Time-inhomogeneous rate c^E * exp{F(t, eta^{xy}) - F(t, eta)} with
    F(t, eta) = (1/2) sum_x H(t, x/N) eta_x.

    ``H(t, pts)`` takes an (n, d) array of macroscopic points.  Equals the
    weakly asymmetric rate for the field E + grad H_t because the work of a
    gradient along a bond is the exact potential difference.
    """
    base = rate_asymmetric(family, interaction, field, torus, config, bond)
    occ = config.occupancy
    diff = int(occ[bond.x]) - int(occ[bond.y])
    if diff == 0:
        return base
    pos = np.asarray([torus.site_coords(bond.x), torus.site_coords(bond.y)],
                     dtype=np.float64) / torus.N
    h = np.asarray(H(t, pos), dtype=np.float64)
    return base * float(np.exp(0.5 * diff * (h[1] - h[0])))


def detailed_balance_residual(family: RateFamily, interaction: Interaction,
                              torus: Torus, config: Configuration,
                              bond: Bond) -> float:
    """|c0(eta^{xy}) - c0(eta) e^{grad H}| for one (config, bond)."""
    from .lattice import exchange

    c1 = rate_symmetric(family, interaction, torus, config, bond)
    c2 = rate_symmetric(family, interaction, torus, exchange(config, bond), bond)
    dH = energy_diff(interaction, torus, config, bond)
    return abs(c2 - c1 * float(np.exp(dH)))


# ---------------------------------------------------------------------------
# exact generator on a particle-number sector
# ---------------------------------------------------------------------------

def generator_matrix(torus: Torus, K: int, rate_fn, speed: float | None = None):
    """Sector generator with entries speed * c(eta, bond) on eta -> eta^{xy}.

    ``rate_fn(config, bond)`` supplies the jump rate; ``speed`` defaults to
    N^2 (diffusive rescaling).  Returns (states, L) with L in CSR format and
    rows summing to zero.
    """
    states = enumerate_sector(torus, K)
    if len(states) > MAX_SECTOR_STATES:
        raise DynamicsError(f"sector with {len(states)} states exceeds "
                            f"{MAX_SECTOR_STATES}")
    if speed is None:
        speed = float(torus.N**2)
    index = {s.occupancy.tobytes(): i for i, s in enumerate(states)}
    bonds = torus.bonds()
    rows, cols, vals = [], [], []
    diag = np.zeros(len(states))
    for i, s in enumerate(states):
        occ = s.occupancy
        for b in bonds:
            if occ[b.x] == occ[b.y]:
                continue
            r = speed * rate_fn(s, b)
            tgt = occ.copy()
            tgt[b.x], tgt[b.y] = tgt[b.y], tgt[b.x]
            j = index[tgt.tobytes()]
            rows.append(i)
            cols.append(j)
            vals.append(r)
            diag[i] -= r
    rows.extend(range(len(states)))
    cols.extend(range(len(states)))
    vals.extend(diag)
    L = sp.csr_matrix((vals, (rows, cols)), shape=(len(states), len(states)))
    return states, L


def stationary_exact(L: sp.spmatrix, residual_tol: float = 1e-10) -> np.ndarray:
    """Unique probability vector with pi L = 0 (irreducible generator).

    Solved by replacing one balance equation with the normalization; the
    residual ||pi L||_inf is checked against ``residual_tol``.
    """
    n = L.shape[0]
    A = sp.csc_matrix(L.T, copy=True).tolil()
    A[n - 1, :] = 1.0
    b = np.zeros(n)
    b[n - 1] = 1.0
    pi = spla.spsolve(sp.csc_matrix(A), b)
    if np.any(pi < -1e-12):
        raise DynamicsError("stationary solve produced negative mass; "
                            "generator may be reducible")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    res = float(np.max(np.abs(pi @ L)))
    if res > residual_tol:
        raise DynamicsError(f"stationary residual {res:.3e} exceeds {residual_tol:g}")
    return pi


def gibbs_weights_with_potential(interaction: Interaction, torus: Torus,
                                 states, U=None) -> np.ndarray:
    """Weights ~ exp{-H - sum_x U(x/N) eta_x} over sector states.

    With E = -grad U the asymmetric dynamics is reversible for this measure.
    """
    pos = torus.site_positions()
    u = np.zeros(torus.nsites) if U is None else np.asarray(U(pos), dtype=np.float64)
    e = np.array([hamiltonian(interaction, torus, s)
                  + float(u @ s.occupancy) for s in states])
    w = np.exp(-(e - e.min()))
    return w / w.sum()
