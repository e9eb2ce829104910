"""Discrete torus geometry and occupation configurations.

Sites of the d-dimensional torus of side N are indexed row-major by
``0 .. N**d - 1``.  A bond is the unordered pair ``{x, x + e_i}`` with
canonical orientation ``(x, x + e_i)``; for N = 2 the periodic images
``(x, x + e_i)`` and ``(x + e_i, x)`` coincide as unordered pairs and are
stored once.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

MAX_SECTOR_SITES = 28


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class Bond:
    """Canonical bond (x, x + e_direction); `x`, `y` are site indices."""

    x: int
    y: int
    direction: int


class Torus:
    """Periodic lattice (Z/NZ)^d with site/bond bookkeeping.

    Attributes
    ----------
    neighbors : (nsites, 2d) int32 array; columns 2i, 2i+1 are x - e_i, x + e_i.
    bond_x, bond_y, bond_dir : int32 arrays over the deduplicated bond list.
    """

    def __init__(self, d: int, N: int):
        if not 1 <= d <= 3:
            raise LatticeError(f"dimension d={d} outside supported range 1..3")
        if N < 2:
            raise LatticeError(f"side length N={N} must be >= 2")
        self.d = d
        self.N = N
        self.nsites = N**d
        # row-major strides: coordinate i has stride N**(d-1-i)
        self.strides = np.array([N ** (d - 1 - i) for i in range(d)], dtype=np.int64)

        coords = self.all_coords()
        nbr = np.empty((self.nsites, 2 * d), dtype=np.int32)
        for i in range(d):
            minus = coords.copy()
            minus[:, i] = (minus[:, i] - 1) % N
            plus = coords.copy()
            plus[:, i] = (plus[:, i] + 1) % N
            nbr[:, 2 * i] = minus @ self.strides
            nbr[:, 2 * i + 1] = plus @ self.strides
        self.neighbors = nbr

        seen = set()
        bx, by, bdir = [], [], []
        for x in range(self.nsites):
            for i in range(d):
                y = int(nbr[x, 2 * i + 1])
                key = (min(x, y), max(x, y), i)
                if key in seen:
                    continue
                seen.add(key)
                bx.append(x)
                by.append(y)
                bdir.append(i)
        self.bond_x = np.array(bx, dtype=np.int32)
        self.bond_y = np.array(by, dtype=np.int32)
        self.bond_dir = np.array(bdir, dtype=np.int32)
        self.nbonds = len(bx)

    def all_coords(self) -> np.ndarray:
        """(nsites, d) coordinate table, row-major order."""
        idx = np.arange(self.nsites)
        out = np.empty((self.nsites, self.d), dtype=np.int64)
        for i in range(self.d):
            out[:, i] = (idx // self.strides[i]) % self.N
        return out

    def site_index(self, coord) -> int:
        c = np.mod(np.asarray(coord, dtype=np.int64), self.N)
        return int(c @ self.strides)

    def site_coords(self, index: int) -> tuple:
        return tuple(int((index // s) % self.N) for s in self.strides)

    def bonds(self):
        return [Bond(int(x), int(y), int(i))
                for x, y, i in zip(self.bond_x, self.bond_y, self.bond_dir)]

    def bond(self, x, direction: int) -> Bond:
        if not isinstance(x, (int, np.integer)):
            x = self.site_index(x)
        y = int(self.neighbors[x, 2 * direction + 1])
        return Bond(int(x), y, direction)

    def site_positions(self) -> np.ndarray:
        """Macroscopic embedding x -> x/N, shape (nsites, d)."""
        return self.all_coords() / self.N

    def __repr__(self):
        return f"Torus(d={self.d}, N={self.N})"


def make_torus(d: int, N: int) -> Torus:
    return Torus(d, N)


class Configuration:
    """Occupation numbers on a torus with cached particle count.

    Treated as immutable: all operations return fresh instances.
    """

    __slots__ = ("occupancy", "count")

    def __init__(self, occupancy, count: int | None = None):
        occ = np.ascontiguousarray(occupancy, dtype=np.uint8)
        if occ.ndim != 1:
            occ = occ.ravel()
        if not np.all((occ == 0) | (occ == 1)):
            raise LatticeError("occupancy entries must be 0 or 1")
        self.occupancy = occ
        self.count = int(occ.sum()) if count is None else int(count)

    @classmethod
    def empty(cls, torus: Torus) -> "Configuration":
        return cls(np.zeros(torus.nsites, dtype=np.uint8), 0)

    @classmethod
    def from_sites(cls, torus: Torus, sites) -> "Configuration":
        occ = np.zeros(torus.nsites, dtype=np.uint8)
        occ[list(sites)] = 1
        return cls(occ)

    def bits(self) -> int:
        """Occupancy packed into a single int (site i -> bit i)."""
        return int(sum(1 << i for i in np.flatnonzero(self.occupancy)))

    def __eq__(self, other):
        return isinstance(other, Configuration) and np.array_equal(
            self.occupancy, other.occupancy)

    def __hash__(self):
        return hash(self.occupancy.tobytes())

    def __repr__(self):
        s = "".join(str(int(v)) for v in self.occupancy[:32])
        if len(self.occupancy) > 32:
            s += "..."
        return f"Configuration({s}, count={self.count})"


def exchange(config: Configuration, bond: Bond) -> Configuration:
    """Swap the occupancies at the two bond endpoints."""
    occ = config.occupancy.copy()
    occ[bond.x], occ[bond.y] = occ[bond.y], occ[bond.x]
    return Configuration(occ, config.count)


def shift(config: Configuration, torus: Torus, z) -> Configuration:
    """Translate: (shift_z eta)_y = eta_{y+z}, indices mod N."""
    if isinstance(z, (int, np.integer)) and torus.d == 1:
        z = (int(z),)
    z = np.asarray(z, dtype=np.int64)
    grid = config.occupancy.reshape((torus.N,) * torus.d)
    # value at y comes from y+z: a roll by -z along every axis
    rolled = np.roll(grid, shift=tuple(-int(zi) for zi in z), axis=tuple(range(torus.d)))
    return Configuration(rolled.ravel(), config.count)


def enumerate_sector(torus: Torus, K: int) -> list[Configuration]:
    """All C(nsites, K) configurations with K particles, lexicographic in
    the occupied-site tuple."""
    n = torus.nsites
    if n > MAX_SECTOR_SITES:
        raise LatticeError(
            f"sector enumeration limited to {MAX_SECTOR_SITES} sites, got {n}")
    if not 0 <= K <= n:
        raise LatticeError(f"particle number K={K} outside 0..{n}")
    out = []
    for occ_sites in itertools.combinations(range(n), K):
        out.append(Configuration.from_sites(torus, occ_sites))
    return out
