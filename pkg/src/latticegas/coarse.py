"""Microscopic-to-macroscopic observables: empirical densities, block
averages, mollification, ensemble statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .lattice import Configuration, Torus


class CoarseError(ValueError):
    pass


@dataclass
class DensityField:
    """Piecewise-constant density on the uniform M^d grid of the unit torus."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any(self.values < -1e-12) or np.any(self.values > 1 + 1e-12):
            raise CoarseError("density values outside [0, 1]")

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def grid(self) -> int:
        return self.values.shape[0]

    @property
    def mass(self) -> float:
        return float(self.values.mean())

    def to_csv(self, path) -> None:
        idx = np.indices(self.values.shape).reshape(self.d, -1).T
        cols = np.column_stack([idx, self.values.ravel()])
        header = ",".join(f"cell{i}" for i in range(self.d)) + ",value"
        np.savetxt(path, cols, delimiter=",", header=header, comments="",
                   fmt="%.17g")


def empirical_density(config: Configuration, torus: Torus) -> DensityField:
    """eta read as a piecewise-constant field on the N^d grid."""
    return DensityField(config.occupancy.reshape((torus.N,) * torus.d)
                        .astype(np.float64))


def coarsen(values: np.ndarray, M: int) -> np.ndarray:
    """Mass-conservative block average from an N^d grid down to M^d (M | N)."""
    values = np.asarray(values, dtype=np.float64)
    N = values.shape[0]
    if N % M != 0:
        raise CoarseError(f"coarse grid M={M} must divide N={N}")
    f = N // M
    d = values.ndim
    shape = sum(((M, f),) * d, ())
    return values.reshape(shape).mean(axis=tuple(range(1, 2 * d, 2)))


def block_average(config: Configuration, torus: Torus, x, ell: int) -> float:
    """Mean occupancy over the periodic sup-norm box of radius ell around x."""
    if ell < 0:
        raise CoarseError("block radius must be >= 0")
    if isinstance(x, (int, np.integer)):
        x = torus.site_coords(int(x))
    occ = config.occupancy.reshape((torus.N,) * torus.d)
    # the periodic box is a set of sites: once 2*ell+1 >= N an axis saturates
    idx = [np.unique(np.mod(np.arange(xi - ell, xi + ell + 1), torus.N))
           for xi in x]
    return float(occ[np.ix_(*idx)].mean())


def _edge_profile(u: np.ndarray) -> np.ndarray:
    # C^2 quintic smoothstep, 1 at u=0 down to 0 at u=1
    u = np.clip(u, 0.0, 1.0)
    return 1.0 - (10 * u**3 - 15 * u**4 + 6 * u**5)


def mollifier_kernel_1d(M: int, kappa: float, eps: float) -> np.ndarray:
    """Discrete 1-D plateau mollifier: support |r| <= eps, flat on
    |r| <= (1-kappa) eps, quintic edge, normalized to unit discrete mass.

    Normalization is exact in place of the nominal plateau height
    (2 eps)^-1: a compactly supported kernel cannot carry both exactly.
    """
    if not 0 < eps < 0.5:
        raise CoarseError("mollifier width eps must lie in (0, 1/2)")
    if not 0 < kappa < 1:
        raise CoarseError("edge fraction kappa must lie in (0, 1)")
    if kappa * eps * M < 2 or (1 - kappa) * eps * M < 1:
        raise CoarseError("grid too coarse for the requested (kappa, eps): "
                          "refine the grid or widen the kernel")
    half = int(np.floor(eps * M))
    r = np.arange(-half, half + 1) / M
    u = (np.abs(r) / eps - (1 - kappa)) / kappa
    k = _edge_profile(u)
    s = k.sum()
    if s <= 0:
        raise CoarseError("degenerate mollifier discretization")
    return k / s


def mollify(field: DensityField, kappa: float, eps: float) -> DensityField:
    """Periodic convolution with the separable plateau mollifier.

    Mass-preserving to machine precision; a sup-norm contraction (the kernel
    is nonnegative with unit mass).
    """
    k1 = mollifier_kernel_1d(field.grid, kappa, eps)
    out = field.values
    for axis in range(field.d):
        out = convolve1d(out, k1, axis=axis, mode="wrap")
    return DensityField(np.clip(out, 0.0, 1.0))


def ensemble_mean(trajectories, t: float, M: int | None = None):
    """Cellwise mean empirical density at observation time t, with standard
    errors across trajectories.

    Returns (mean DensityField, stderr array).  All trajectories must share
    the torus and contain t among their observation times.
    """
    if not trajectories:
        raise CoarseError("empty ensemble")
    torus = trajectories[0].torus
    if M is None:
        M = torus.N
    fields = []
    for traj in trajectories:
        if traj.torus.d != torus.d or traj.torus.N != torus.N:
            raise CoarseError("mismatched ensembles")
        j = np.flatnonzero(np.isclose(traj.times, t, rtol=0, atol=1e-12))
        if j.size == 0:
            raise CoarseError(f"time {t} not among the observation times")
        grid = traj.snapshots[int(j[0])].reshape((torus.N,) * torus.d)
        fields.append(coarsen(grid.astype(np.float64), M))
    stack = np.stack(fields)
    mean = stack.mean(axis=0)
    n = stack.shape[0]
    if n > 1:
        stderr = stack.std(axis=0, ddof=1) / np.sqrt(n)
    else:
        stderr = np.zeros_like(mean)
    return DensityField(mean), stderr
