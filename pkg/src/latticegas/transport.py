"""Transport coefficients: variational mobility and the Einstein relation.

The mobility quadratic form is

    v . sigma(rho) v = inf_f (1/2) mu_rho[ sum_i c0_{0,e_i}
                        ( v_i (eta_{e_i} - eta_0) + grad_{0,e_i} fbar )^2 ],

with fbar the sum of all lattice translates of the local function f.  The
infimum is truncated to f supported on the box Lambda_k = {-k..k}^d; only
translates of f whose support touches the bond contribute, so the gradient
is a finite sum.  sigma_k is non-increasing in k (nested feasible sets) and
an upper bound on sigma; sigma_0 is the f = 0 value.

The objective is a quadratic form in the 2^{|Lambda_k|} values of f and is
minimized through the normal equations (PSD least squares, pseudo-inverse on
the constant kernel).  Expectations: exact Bernoulli products for the zero
interaction; for interacting rates (d = 1) an exact Gibbs ring of
``periodic_window`` sites replaces mu_rho, the documented truncation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .dynamics import RateFamily
from .gibbs import Interaction, ThermoTable, ZERO_INTERACTION, _lam_of_rho, product_expectation

MAX_WINDOW_STATES = 1 << 20


class TransportError(ValueError):
    pass


def kappa(rho: float, interaction: Interaction = ZERO_INTERACTION,
          direction: int = 0, d: int = 1) -> float:
    """kappa^{(i)}(rho) = mu_rho[(eta_0 - eta_{e_i})^2]."""
    if rho in (0.0, 1.0):
        return 0.0
    if interaction.coupling == 0.0:
        return 2.0 * rho * (1.0 - rho)
    if d != 1:
        raise TransportError("interacting kappa implemented in d=1")
    window = [0, 1]
    return product_expectation(
        lambda occ: (occ[:, 0] - occ[:, 1]).astype(np.float64) ** 2,
        rho, window, interaction)


def _box(k: int, d: int):
    return list(itertools.product(range(-k, k + 1), repeat=d))


def _offsets_for_direction(k: int, d: int, i: int, family: RateFamily,
                           interaction: Interaction):
    """(translates X, f-box, full window W) as offset tuples for bond (0, e_i)."""
    e = tuple(1 if j == i else 0 for j in range(d))
    box = _box(k, d)
    X = sorted(set(box) | {tuple(np.add(e, b)) for b in box})
    W = set()
    for x in X:
        for b in box:
            W.add(tuple(np.add(x, b)))
    zero = (0,) * d
    W.update([zero, e])
    if family.kind == "neighbor_weighted":
        W.add(tuple(np.subtract(zero, e)))
        if family.witness == "symmetric":
            W.add(tuple(np.add(e, e)))
    if interaction.coupling != 0.0:
        for site in (zero, e):
            for j in range(d):
                step = tuple(1 if m == j else 0 for m in range(d))
                W.add(tuple(np.add(site, step)))
                W.add(tuple(np.subtract(site, step)))
    return X, box, sorted(W)


def _bit_table(n: int) -> np.ndarray:
    m = np.arange(1 << n, dtype=np.int64)[:, None]
    return ((m >> np.arange(n)[None, :]) & 1).astype(np.int8)


def _direction_system(rho, k, d, i, family, interaction, periodic_window):
    X, box, W = _offsets_for_direction(k, d, i, family, interaction)
    e = tuple(1 if j == i else 0 for j in range(d))
    zero = (0,) * d

    ring = d == 1
    if ring:
        span = W[-1][0] - W[0][0] + 1
        L = max(span, periodic_window if interaction.coupling != 0.0 else span)
        if L > 20:
            raise TransportError(f"1-D window of {L} sites exceeds the "
                                 f"enumerable budget")
        sites = list(range(L))
        col = {s: None for s in sites}
        pos = lambda off: off[0] % L
        confs = _bit_table(L)
        if interaction.coupling != 0.0:
            lam_eff = -interaction.mu_sign * _lam_of_rho(interaction, rho)
            en = (interaction.coupling
                  * np.sum(confs * np.roll(confs, -1, axis=1), axis=1)
                  + lam_eff * confs.sum(axis=1))
            wts = np.exp(en - en.max())
            wts /= wts.sum()
        else:
            n1 = confs.sum(axis=1)
            wts = rho**n1 * (1 - rho) ** (L - n1)
    else:
        if interaction.coupling != 0.0:
            raise TransportError("interacting mobility implemented in d=1")
        if len(W) > 20 or (1 << len(W)) > MAX_WINDOW_STATES:
            raise TransportError(
                f"window of {len(W)} sites ({1 << len(W)} states) exceeds "
                f"the enumerable budget; reduce the support radius")
        index = {w: j for j, w in enumerate(W)}
        pos = lambda off: index[off]
        confs = _bit_table(len(W))
        n1 = confs.sum(axis=1)
        wts = rho**n1 * (1 - rho) ** (len(W) - n1)

    p0, pe = pos(zero), pos(e)
    g = (confs[:, pe] - confs[:, p0]).astype(np.float64)

    c0 = np.ones(confs.shape[0])
    if interaction.coupling != 0.0:
        # heat-bath factor exp{-dH/2} from the ring energies
        nx = np.zeros(confs.shape[0])
        ny = np.zeros(confs.shape[0])
        for j in range(d):
            step = tuple(1 if m == j else 0 for m in range(d))
            for s, acc, other in ((zero, nx, e), (e, ny, zero)):
                for sgn in (1, -1):
                    z = tuple(np.add(s, np.multiply(sgn, step)))
                    if pos(z) != pos(other):
                        acc += confs[:, pos(z)]
        dH = -interaction.coupling * (confs[:, pe] - confs[:, p0]) * (nx - ny)
        c0 = np.exp(-0.5 * dH)
    if family.kind == "neighbor_weighted":
        wsum = confs[:, pos(tuple(np.subtract(zero, e)))].astype(np.float64)
        if family.witness == "symmetric":
            wsum = wsum + confs[:, pos(tuple(np.add(e, e)))]
        c0 = c0 * (1.0 + family.a * wsum)

    nf = 1 << len(box)
    bit = {b: 1 << j for j, b in enumerate(box)}
    cols = np.array([[pos(tuple(np.add(b, x))) for b in box] for x in X])
    A = np.zeros((confs.shape[0], nf))
    pw = np.array([bit[b] for b in box], dtype=np.int64)
    swapped = confs.copy()
    swapped[:, [p0, pe]] = swapped[:, [pe, p0]]
    for xi in range(len(X)):
        iA = (swapped[:, cols[xi]].astype(np.int64) * pw).sum(axis=1)
        iB = (confs[:, cols[xi]].astype(np.int64) * pw).sum(axis=1)
        np.add.at(A, (np.arange(confs.shape[0]), iA), 1.0)
        np.add.at(A, (np.arange(confs.shape[0]), iB), -1.0)

    M = wts * c0
    G = A.T @ (M[:, None] * A)
    b = A.T @ (M * g)
    const = float(np.sum(M * g * g))
    return G, b, const


def mobility_variational(rho: float, k: int, d: int = 1,
                         family: RateFamily = RateFamily("heatbath"),
                         interaction: Interaction = ZERO_INTERACTION,
                         periodic_window: int = 16) -> np.ndarray:
    """sigma_k(rho) as a symmetric PSD d x d matrix (upper bound on sigma)."""
    if not 0.0 <= rho <= 1.0:
        raise TransportError(f"rho={rho} outside [0,1]")
    if rho in (0.0, 1.0):
        return np.zeros((d, d))
    G = None
    bs, consts = [], []
    for i in range(d):
        Gi, bi, ci = _direction_system(rho, k, d, i, family, interaction,
                                       periodic_window)
        G = Gi if G is None else G + Gi
        bs.append(bi)
        consts.append(ci)
    Gp = np.linalg.pinv(G, rcond=1e-12, hermitian=True)
    sigma = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            sigma[i, j] = 0.5 * ((consts[i] if i == j else 0.0)
                                 - bs[i] @ Gp @ bs[j])
    return 0.5 * (sigma + sigma.T)


@dataclass
class MobilityModel:
    """Scalar mobility rho -> sigma(rho) for the isotropic macroscopic solvers.

    kind "ssep": rho(1-rho) exactly.  kind "scalar": user-supplied callable.
    kind "variational": PCHIP through sigma_k computed on a rho grid, pinned
    to 0 at the endpoints.
    """

    kind: str = "ssep"
    fn: object = None
    family: RateFamily = RateFamily("heatbath")
    interaction: Interaction = ZERO_INTERACTION
    support_radius: int = 1
    grid_points: int = 33
    _interp: object = dc_field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("ssep", "scalar", "variational"):
            raise TransportError(f"unknown mobility kind {self.kind!r}")
        if self.kind == "scalar" and not callable(self.fn):
            raise TransportError("scalar mobility needs a callable")
        if self.kind == "variational":
            grid = np.linspace(0.0, 1.0, self.grid_points)
            vals = np.empty_like(grid)
            for j, r in enumerate(grid):
                vals[j] = (0.0 if r in (0.0, 1.0) else
                           float(mobility_variational(
                               r, self.support_radius, 1, self.family,
                               self.interaction)[0, 0]))
            self._interp = PchipInterpolator(grid, vals)

    def sigma(self, rho):
        rho = np.asarray(rho, dtype=np.float64)
        if self.kind == "ssep":
            out = rho * (1.0 - rho)
        elif self.kind == "scalar":
            out = np.asarray(self.fn(rho), dtype=np.float64)
        else:
            out = np.clip(self._interp(np.clip(rho, 0.0, 1.0)), 0.0, None)
        return out if out.ndim else float(out)

    def matrix(self, rho: float, d: int = 1) -> np.ndarray:
        return float(self.sigma(rho)) * np.eye(d)


def diffusion(sigma, thermo: ThermoTable, rho: float, d: int = 1) -> np.ndarray:
    """Einstein relation D(rho) = sigma(rho) * f''(rho) as a d x d matrix."""
    if not 0.0 < rho < 1.0:
        raise TransportError("diffusion requested at the clipped table boundary")
    if isinstance(sigma, MobilityModel):
        mat = sigma.matrix(rho, d)
    else:
        mat = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    return mat * float(thermo.fsecond(rho))


def diffusion_model(mobility: MobilityModel, thermo: ThermoTable):
    """Vectorized scalar D(rho) = sigma(rho) f''(rho) for the PDE solvers."""
    def D(rho):
        return mobility.sigma(rho) * thermo.fsecond(rho)
    return D
