"""Rejection-free kinetic Monte Carlo for the weakly asymmetric Kawasaki chain.

Event selection uses a binary indexed tree over bond rates with incremental
updates (only bonds whose rate window touches a flipped site are re-rated).
Waiting times are exponential at the diffusive speed N^2 * total(c).  For
time-dependent drives the chain is thinned against the uniform-in-time
upper bound of each bond rate, which keeps the trajectory law exact.

Randomness: xoshiro256** seeded per trajectory from
``numpy.random.SeedSequence(master_seed, spawn_key=(k,))``, a splittable
counter-derived contract, so ensembles are reproducible independently of
scheduling.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numba import njit

from .dynamics import RateFamily, SSEP
from .fields import Field, bond_work_table
from .gibbs import Interaction, ZERO_INTERACTION
from .lattice import Configuration, Torus

_REBUILD_EVERY = 1 << 16


# -- xoshiro256** ------------------------------------------------------------

@njit(inline="always")
def _rotl(x, k):
    return np.uint64((x << np.uint64(k)) | (x >> np.uint64(64 - k)))


@njit(inline="always")
def _next_u64(s):
    res = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return res


@njit(inline="always")
def _unif(s):
    # (0, 1]: safe for log
    return (np.float64(_next_u64(s) >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)


# -- binary indexed tree -----------------------------------------------------

@njit(inline="always")
def _fen_build(tree, rates):
    n = rates.shape[0]
    for i in range(n + 1):
        tree[i] = 0.0
    for i in range(1, n + 1):
        tree[i] += rates[i - 1]
        j = i + (i & (-i))
        if j <= n:
            tree[j] += tree[i]


@njit(inline="always")
def _fen_total(tree, n):
    s = 0.0
    i = n
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@njit(inline="always")
def _fen_set(tree, rates, b, new):
    delta = new - rates[b]
    rates[b] = new
    n = rates.shape[0]
    i = b + 1
    while i <= n:
        tree[i] += delta
        i += i & (-i)


@njit(inline="always")
def _fen_find(tree, rates, topbit, target):
    n = rates.shape[0]
    idx = 0
    bit = topbit
    rem = target
    while bit > 0:
        nxt = idx + bit
        if nxt <= n and tree[nxt] < rem:
            idx = nxt
            rem -= tree[nxt]
        bit >>= 1
    if idx >= n:
        idx = n - 1
    while idx > 0 and rates[idx] <= 0.0:
        idx -= 1
    return idx


# -- bond rate ---------------------------------------------------------------

@njit(inline="always")
def _bond_rate(occ, b, bond_x, bond_y, half_work, kindcode, a, wit_ptr, wit_idx,
               J, px_ptr, px_idx, py_ptr, py_idx):
    x = bond_x[b]
    y = bond_y[b]
    ex = occ[x]
    ey = occ[y]
    if ex == ey:
        return 0.0
    c = 1.0
    if J != 0.0:
        nx = 0.0
        for p in range(px_ptr[b], px_ptr[b + 1]):
            nx += occ[px_idx[p]]
        ny = 0.0
        for p in range(py_ptr[b], py_ptr[b + 1]):
            ny += occ[py_idx[p]]
        dh = -J * (np.float64(ey) - np.float64(ex)) * (nx - ny)
        c = np.exp(-0.5 * dh)
    if kindcode == 1:
        w = 0.0
        for p in range(wit_ptr[b], wit_ptr[b + 1]):
            w += occ[wit_idx[p]]
        c *= 1.0 + a * w
    return c * np.exp(half_work[b] * (np.float64(ex) - np.float64(ey)))


@njit(nogil=True, cache=True)
def _kmc_kernel(occ, bond_x, bond_y, half_work, kindcode, a, wit_ptr, wit_idx,
                J, px_ptr, px_idx, py_ptr, py_idx, sb_ptr, sb_idx,
                speed, obs_times, snaps, rng,
                timedep, tgrid, wtab, bound_half, rates_out):
    nb = bond_x.shape[0]
    rates = np.zeros(nb)
    tree = np.zeros(nb + 1)
    for b in range(nb):
        r = _bond_rate(occ, b, bond_x, bond_y, half_work, kindcode, a,
                       wit_ptr, wit_idx, J, px_ptr, px_idx, py_ptr, py_idx)
        if timedep:
            r *= np.exp(bound_half[b])
        rates[b] = r
    _fen_build(tree, rates)
    total = _fen_total(tree, nb)
    topbit = 1
    while (topbit << 1) <= nb:
        topbit <<= 1

    t = 0.0
    k = 0
    m = obs_times.shape[0]
    events = np.int64(0)
    rejected = np.int64(0)
    cursor = 0
    while k < m:
        if total <= 1e-300:
            while k < m:
                snaps[k] = occ
                k += 1
            break
        dt = -np.log(_unif(rng)) / (speed * total)
        tnext = t + dt
        while k < m and obs_times[k] < tnext:
            snaps[k] = occ
            k += 1
        if k >= m:
            break
        t = tnext
        target = _unif(rng) * total
        b = _fen_find(tree, rates, topbit, target)

        if timedep:
            # thinning: accept with prob rate(t)/bound
            x = bond_x[b]
            y = bond_y[b]
            diff = np.float64(occ[x]) - np.float64(occ[y])
            nt = tgrid.shape[0]
            while cursor + 1 < nt and tgrid[cursor + 1] < t:
                cursor += 1
            if cursor + 1 < nt and tgrid[cursor + 1] > tgrid[cursor]:
                frac = (t - tgrid[cursor]) / (tgrid[cursor + 1] - tgrid[cursor])
                if frac < 0.0:
                    frac = 0.0
                elif frac > 1.0:
                    frac = 1.0
                w = wtab[cursor, b] + frac * (wtab[cursor + 1, b] - wtab[cursor, b])
            else:
                w = wtab[nt - 1, b]
            logacc = w * diff - bound_half[b]
            if logacc < 0.0 and _unif(rng) > np.exp(logacc):
                rejected += 1
                continue

        x = bond_x[b]
        y = bond_y[b]
        tmp = occ[x]
        occ[x] = occ[y]
        occ[y] = tmp
        events += 1
        for p in range(sb_ptr[x], sb_ptr[x + 1]):
            bb = sb_idx[p]
            r = _bond_rate(occ, bb, bond_x, bond_y, half_work, kindcode, a,
                           wit_ptr, wit_idx, J, px_ptr, px_idx, py_ptr, py_idx)
            if timedep:
                r *= np.exp(bound_half[bb])
            _fen_set(tree, rates, bb, r)
        for p in range(sb_ptr[y], sb_ptr[y + 1]):
            bb = sb_idx[p]
            r = _bond_rate(occ, bb, bond_x, bond_y, half_work, kindcode, a,
                           wit_ptr, wit_idx, J, px_ptr, px_idx, py_ptr, py_idx)
            if timedep:
                r *= np.exp(bound_half[bb])
            _fen_set(tree, rates, bb, r)
        if events % _REBUILD_EVERY == 0:
            _fen_build(tree, rates)
        total = _fen_total(tree, nb)
    for b in range(nb):
        rates_out[b] = rates[b]
    return events, rejected


# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    torus: Torus
    times: np.ndarray            # (m,)
    snapshots: np.ndarray        # (m, nsites) uint8
    seed: int
    events: int
    rejected: int = 0

    def configuration(self, j: int) -> Configuration:
        return Configuration(self.snapshots[j])

    def counts(self) -> np.ndarray:
        return self.snapshots.sum(axis=1)


def _csr(lists, n, dtype=np.int32):
    ptr = np.zeros(n + 1, dtype=np.int64)
    for i, l in enumerate(lists):
        ptr[i + 1] = ptr[i] + len(l)
    idx = np.empty(ptr[-1], dtype=dtype)
    for i, l in enumerate(lists):
        idx[ptr[i]:ptr[i + 1]] = l
    return ptr, idx


class KmcModel:
    """Precomputed bond tables for a (torus, interaction, rate family, field)."""

    def __init__(self, torus: Torus, interaction: Interaction = ZERO_INTERACTION,
                 family: RateFamily = SSEP, field: Field | None = None):
        self.torus = torus
        self.interaction = interaction
        self.family = family
        self.field = field
        nb = torus.nbonds
        self.half_work = (0.5 * bond_work_table(field, torus)
                          if field is not None else np.zeros(nb))
        self.kindcode = 1 if family.kind == "neighbor_weighted" else 0
        self.speed = float(torus.N**2)

        bonds = torus.bonds()
        wit = [list(family.witness_sites(torus, b)) for b in bonds]
        self.wit_ptr, self.wit_idx = _csr(wit, nb)

        J = interaction.coupling
        self.J = J
        incident = [[] for _ in range(torus.nsites)]
        for b, (x, y) in enumerate(zip(torus.bond_x, torus.bond_y)):
            incident[x].append((b, y))
            incident[y].append((b, x))
        px, py = [], []
        for b in bonds:
            px.append([z for (_, z) in incident[b.x] if z != b.y] if J != 0.0 else [])
            py.append([z for (_, z) in incident[b.y] if z != b.x] if J != 0.0 else [])
        self.px_ptr, self.px_idx = _csr(px, nb)
        self.py_ptr, self.py_idx = _csr(py, nb)

        reads = [set() for _ in range(torus.nsites)]
        for b in range(nb):
            sites = {int(torus.bond_x[b]), int(torus.bond_y[b])}
            sites.update(int(s) for s in wit[b])
            sites.update(int(s) for s in px[b])
            sites.update(int(s) for s in py[b])
            for s in sites:
                reads[s].add(b)
        self.sb_ptr, self.sb_idx = _csr([sorted(r) for r in reads], torus.nsites)

        self._no_tgrid = np.zeros(1)
        self._no_wtab = np.zeros((1, nb))
        self._no_bound = np.zeros(nb)

    def rate_table(self, occ: np.ndarray) -> np.ndarray:
        """Fresh full rate table (reference for incremental-update checks)."""
        out = np.empty(self.torus.nbonds)
        for b in range(self.torus.nbonds):
            out[b] = _bond_rate(occ, b, self.torus.bond_x, self.torus.bond_y,
                                self.half_work, self.kindcode, self.family.a,
                                self.wit_ptr, self.wit_idx, self.J,
                                self.px_ptr, self.px_idx, self.py_ptr, self.py_idx)
        return out

    def run(self, initial, T: float, obs_times, seed: int,
            extra: "TimeDependentWork | None" = None) -> Trajectory:
        obs = np.asarray(obs_times, dtype=np.float64)
        if obs.size == 0 or obs.min() < 0 or obs.max() > T:
            raise ValueError("observation times must lie in [0, T]")
        if isinstance(initial, Configuration):
            occ = initial.occupancy.copy()
        else:
            occ = np.ascontiguousarray(initial, dtype=np.uint8).copy()
        snaps = np.zeros((obs.size, self.torus.nsites), dtype=np.uint8)
        rng = np.random.SeedSequence(entropy=seed).generate_state(4, np.uint64)
        rates_out = np.zeros(self.torus.nbonds)
        if extra is None:
            events, rejected = _kmc_kernel(
                occ, self.torus.bond_x, self.torus.bond_y, self.half_work,
                self.kindcode, self.family.a, self.wit_ptr, self.wit_idx,
                self.J, self.px_ptr, self.px_idx, self.py_ptr, self.py_idx,
                self.sb_ptr, self.sb_idx, self.speed, obs, snaps, rng,
                False, self._no_tgrid, self._no_wtab, self._no_bound,
                rates_out)
        else:
            events, rejected = _kmc_kernel(
                occ, self.torus.bond_x, self.torus.bond_y, self.half_work,
                self.kindcode, self.family.a, self.wit_ptr, self.wit_idx,
                self.J, self.px_ptr, self.px_idx, self.py_ptr, self.py_idx,
                self.sb_ptr, self.sb_idx, self.speed, obs, snaps, rng,
                True, extra.times, extra.half_work, extra.bound_half,
                rates_out)
        traj = Trajectory(self.torus, obs, snaps, int(seed),
                          int(events), int(rejected))
        traj.final_rates = rates_out
        return traj


@dataclass
class TimeDependentWork:
    """Piecewise-linear-in-time extra half-work per bond (for steering runs)."""

    times: np.ndarray        # (nt,)
    half_work: np.ndarray    # (nt, nbonds)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.half_work = np.ascontiguousarray(self.half_work, dtype=np.float64)
        self.bound_half = np.abs(self.half_work).max(axis=0)


def face_field_to_bond_work(torus: Torus, face_values: list[np.ndarray]) -> np.ndarray:
    """Map PDE face-field samples (grid M == N) to per-bond work E_N.

    ``face_values[i][j...]`` is the drift at the face between cells j and
    j+1 along axis i; the bond across that face picks up work value/N.
    """
    M = face_values[0].shape[0]
    if M != torus.N:
        raise ValueError("face grid must match the lattice (M == N)")
    out = np.empty(torus.nbonds)
    coords = torus.all_coords()
    for b in range(torus.nbonds):
        i = int(torus.bond_dir[b])
        c = tuple(coords[torus.bond_x[b]])
        out[b] = face_values[i][c if torus.d > 1 else c[0]] / torus.N
    return out


def sample_profile_configuration(torus: Torus, profile_values: np.ndarray,
                                 rng: np.random.Generator) -> np.ndarray:
    """Product-Bernoulli configuration associated to a macroscopic profile."""
    p = np.asarray(profile_values, dtype=np.float64).ravel()
    if p.size != torus.nsites:
        raise ValueError("profile grid must match the lattice")
    return (rng.random(torus.nsites) < p).astype(np.uint8)


def run_ensemble(model: KmcModel, initial, n_traj: int, T: float, obs_times,
                 master_seed: int, extra: TimeDependentWork | None = None,
                 threads: int = 1) -> list[Trajectory]:
    """Independent trajectories with per-index derived seeds.

    ``initial`` is either a fixed configuration/occupancy or a density
    profile array (values in [0,1]) sampled product-Bernoulli per trajectory.
    """
    initial = np.asarray(initial.occupancy if isinstance(initial, Configuration)
                         else initial, dtype=np.float64).ravel()
    is_profile = not np.all((initial == 0) | (initial == 1))

    def make_args(k):
        ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(k,))
        child_init, child_run = ss.spawn(2)
        if is_profile:
            occ = sample_profile_configuration(
                model.torus, initial, np.random.Generator(np.random.Philox(child_init)))
        else:
            occ = initial.astype(np.uint8)
        return occ, int(child_run.generate_state(1, np.uint64)[0])

    jobs = [make_args(k) for k in range(n_traj)]
    if threads <= 1:
        return [model.run(occ, T, obs_times, seed, extra=extra)
                for occ, seed in jobs]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as ex:
        futs = [ex.submit(model.run, occ, T, obs_times, seed, extra=extra)
                for occ, seed in jobs]
        return [f.result() for f in futs]


# -- serialization -----------------------------------------------------------

_MAGIC = b"KWSK1"


def trajectory_to_binary(traj: Trajectory) -> bytes:
    """Compact little-endian layout: magic "KWSK1", uint32 d, N, m, then m
    float64 times and m bitset blocks of ceil(nsites/8) bytes
    (bit i of a block = occupancy of site i, LSB-first)."""
    head = _MAGIC + struct.pack("<III", traj.torus.d, traj.torus.N,
                                traj.times.size)
    times = traj.times.astype("<f8").tobytes()
    blocks = b"".join(
        np.packbits(row, bitorder="little").tobytes() for row in traj.snapshots)
    return head + times + blocks


def trajectory_from_binary(data: bytes) -> Trajectory:
    if data[:5] != _MAGIC:
        raise ValueError("bad magic; not a KWSK1 trajectory blob")
    d, N, m = struct.unpack("<III", data[5:17])
    torus = Torus(d, N)
    off = 17
    times = np.frombuffer(data, dtype="<f8", count=m, offset=off).copy()
    off += 8 * m
    nbytes = (torus.nsites + 7) // 8
    snaps = np.zeros((m, torus.nsites), dtype=np.uint8)
    for j in range(m):
        block = np.frombuffer(data, dtype=np.uint8, count=nbytes, offset=off)
        snaps[j] = np.unpackbits(block, bitorder="little")[:torus.nsites]
        off += nbytes
    return Trajectory(torus, times, snaps, seed=0, events=0)


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Rows (t, site, occupancy)."""
    with open(path, "w") as fh:
        fh.write("t,site,occupancy\n")
        for t, row in zip(traj.times, traj.snapshots):
            for s, v in enumerate(row):
                fh.write(f"{t:.17g},{s},{int(v)}\n")
