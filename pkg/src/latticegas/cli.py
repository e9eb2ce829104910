"""Configuration-driven experiment runner.

Subcommands: simulate | hydro-compare | exact-stationary | mobility | thermo
| ratefn | quasipotential | duality-check | check, each taking
``--config <path> --out <dir> --seed <u64> --threads <n>``.

Exit codes: 0 success, 2 config error, 3 invariant failure, 4
numerical-guard trip.  Every emitted file carries the config hash and a
version string; reruns with identical config and seed are byte-identical
(wall-clock timings go to stdout, never into files).
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import time
from pathlib import Path as FsPath

import numpy as np

from . import __version__, checks, coarse, dynamics, gibbs, kmc, ldp, pde, transport
from .config import ConfigError, ExperimentConfig
from .dynamics import DynamicsError
from .fields import FieldError
from .lattice import LatticeError, Torus
from .ldp import LdpError
from .pde import PdeError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_NUMERICS = 4


def _version_string() -> str:
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=FsPath(__file__).parent, capture_output=True, text=True,
            timeout=5, check=False).stdout.strip()
    except Exception:
        desc = ""
    return f"latticegas-{__version__}" + (f"+{desc}" if desc else "")


class Emitter:
    def __init__(self, outdir: str, cfg: ExperimentConfig):
        self.dir = FsPath(outdir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.meta = {"version": _version_string(), "config_hash": cfg.hash()}

    def csv(self, name: str, header: str, rows) -> FsPath:
        path = self.dir / name
        with open(path, "w") as fh:
            for k, v in self.meta.items():
                fh.write(f"# {k} {v}\n")
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(format(v, ".17g") if isinstance(v, float)
                                  else str(v) for v in row) + "\n")
        return path

    def json(self, name: str, payload: dict) -> FsPath:
        path = self.dir / name
        body = dict(self.meta)
        body.update(payload)
        with open(path, "w") as fh:
            json.dump(body, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return path


def _thermo(cfg: ExperimentConfig) -> gibbs.ThermoTable:
    return gibbs.free_energy_table(cfg.interaction())


def _mobility_model(cfg: ExperimentConfig, thermo) -> transport.MobilityModel:
    fam = cfg.rate_family()
    if fam.kind == "heatbath" and cfg.interaction().coupling == 0.0:
        return transport.MobilityModel("ssep")
    return transport.MobilityModel(
        "variational", family=fam, interaction=cfg.interaction(),
        support_radius=cfg._num("numerics", "support_radius", int, 1))


def _initial_profile(cfg: ExperimentConfig, thermo, M: int, d: int):
    """Stationary profile plus the configured target perturbation, evaluated
    at cell centers (shared by the micro sampler and the macro solver)."""
    rho_bar = cfg._num("numerics", "rho_bar", float, 0.5)
    return _perturbed_profile(cfg, thermo, M, d, rho_bar)


def cmd_simulate(cfg: ExperimentConfig, out: Emitter, threads: int) -> int:
    d, N = cfg._num("model", "d", int), cfg._num("model", "N", int)
    ntraj = cfg._num("run", "trajectories", int)
    if ntraj <= 0:
        raise ConfigError("[run] trajectories must be > 0 for simulate")
    seed = cfg._num("run", "seed", int)
    T = cfg._num("run", "T", float)
    obs = cfg.obs_times()
    torus = Torus(d, N)
    thermo = _thermo(cfg)
    field = cfg.build_field()
    model = kmc.KmcModel(torus, cfg.interaction(), cfg.rate_family(), field)
    prof = _initial_profile(cfg, thermo, N, d)
    t0 = time.time()
    trajs = kmc.run_ensemble(model, prof, ntraj, T, obs, seed, threads=threads)
    wall = time.time() - t0
    M = cfg._num("numerics", "M", int)
    for t in obs:
        mean, se = coarse.ensemble_mean(trajs, float(t), M)
        idx = np.indices(mean.values.shape).reshape(d, -1).T
        rows = [tuple(int(c) for c in cell) + (float(v), float(e))
                for cell, v, e in zip(idx, mean.values.ravel(), se.ravel())]
        out.csv(f"density_t{t:.6g}.csv",
                ",".join(f"cell{i}" for i in range(d)) + ",mean,stderr", rows)
    counts = np.array([tr.counts() for tr in trajs])
    conserved = bool(np.all(counts == counts[:, :1]))
    out.json("summary.json", {
        "trajectories": ntraj, "events": int(sum(tr.events for tr in trajs)),
        "rejected": int(sum(tr.rejected for tr in trajs)),
        "conservation_ok": conserved, "N": N, "d": d, "T": T,
        "obs_times": [float(t) for t in obs]})
    print(f"simulate: {ntraj} trajectories, wall {wall:.2f}s, "
          f"conservation_ok={conserved}")
    return EXIT_OK if conserved else EXIT_NUMERICS


def cmd_hydro_compare(cfg: ExperimentConfig, out: Emitter, threads: int) -> int:
    d, N = cfg._num("model", "d", int), cfg._num("model", "N", int)
    M = cfg._num("numerics", "M", int)
    ntraj = cfg._num("run", "trajectories", int)
    seed = cfg._num("run", "seed", int)
    T = cfg._num("run", "T", float)
    obs = cfg.obs_times()
    torus = Torus(d, N)
    thermo = _thermo(cfg)
    field = cfg.build_field()
    mob = _mobility_model(cfg, thermo)
    D = transport.diffusion_model(mob, thermo)
    prof = _initial_profile(cfg, thermo, N, d)

    model = kmc.KmcModel(torus, cfg.interaction(), cfg.rate_family(), field)
    trajs = kmc.run_ensemble(model, prof, ntraj, T, obs, seed, threads=threads)

    n_out = cfg._num("numerics", "n_out", int, 80)
    problem = pde.PdeProblem(d, N, mob.sigma, D, field, prof, T, n_out=n_out)
    path = pde.solve_hydro(problem)
    out.json("pde_run.json", path.metadata)

    report = {"N": N, "M": M, "trajectories": ntraj, "errors": {}}
    for t in obs:
        mean, _ = coarse.ensemble_mean(trajs, float(t), M)
        j = int(round(float(t) / T * n_out))
        ref = coarse.coarsen(path.values[j], M)
        l1 = float(np.mean(np.abs(mean.values - ref)))
        report["errors"][f"{t:.6g}"] = l1
        if abs(mean.mass - float(ref.mean())) > 1e-12 + 1e-12 * N:
            report["mass_mismatch"] = True
    out.json("hydro_compare.json", report)
    print("hydro-compare:", report["errors"])
    return EXIT_OK


def cmd_exact_stationary(cfg: ExperimentConfig, out: Emitter, threads: int) -> int:
    d, N = cfg._num("model", "d", int), cfg._num("model", "N", int)
    torus = Torus(d, N)
    rho_bar = cfg._num("numerics", "rho_bar", float, 0.5)
    K = int(round(rho_bar * torus.nsites))
    inter = cfg.interaction()
    fam = cfg.rate_family()
    field = cfg.build_field()

    def rate(s, b):
        if field is None:
            return dynamics.rate_symmetric(fam, inter, torus, s, b)
        return dynamics.rate_asymmetric(fam, inter, field, torus, s, b)

    states, L = dynamics.generator_matrix(torus, K, rate)
    pi = dynamics.stationary_exact(L)
    gibbs_w = dynamics.gibbs_weights_with_potential(inter, torus, states, None)
    dev_canonical = float(np.max(np.abs(pi - gibbs_w)))
    payload = {"N": N, "K": K, "states": len(states),
               "deviation_from_canonical": dev_canonical}
    if field is not None and field.U is not None and field.etilde_const is None \
            and field.stream is None:
        w_u = dynamics.gibbs_weights_with_potential(inter, torus, states,
                                                    field.U)
        payload["deviation_from_potential_gibbs"] = float(np.max(np.abs(pi - w_u)))
    verdict = ("gradient-invariant" if dev_canonical <= 1e-8
               else "non-gradient (expected nonzero)")
    payload["verdict"] = verdict
    out.json("exact_stationary.json", payload)
    print(f"exact-stationary: dev={dev_canonical:.3e} -> {verdict}")
    return EXIT_OK


def cmd_mobility(cfg: ExperimentConfig, out: Emitter, threads: int) -> int:
    thermo = _thermo(cfg)
    fam = cfg.rate_family()
    inter = cfg.interaction()
    k = cfg._num("numerics", "support_radius", int, 1)
    rows = []
    for rho in np.linspace(0.0, 1.0, 21):
        sig = transport.mobility_variational(float(rho), k, 1, fam, inter)[0, 0]
        Dv = (sig * float(thermo.fsecond(rho))) if 0 < rho < 1 else 0.0
        rows.append((float(rho), float(sig), float(Dv)))
    out.csv("mobility.csv", "rho,sigma,D", rows)
    print(f"mobility: wrote sigma_k table at k={k}")
    return EXIT_OK


def cmd_thermo(cfg: ExperimentConfig, out: Emitter, threads: int) -> int:
    thermo = _thermo(cfg)
    rows = zip(thermo.rho_grid, thermo.f_grid, thermo.fprime_grid,
               thermo.fsecond_grid, thermo.chi_grid)
    out.csv("thermo.csv", "rho,f,fprime,fsecond,chi",
            [tuple(map(float, r)) for r in rows])
    mask = (thermo.rho_grid >= 0.02) & (thermo.rho_grid <= 0.98)
    ratio = thermo.chi_grid[mask] / (thermo.rho_grid[mask] * (1 - thermo.rho_grid[mask]))
    out.json("thermo.json", {
        "compressibility_bound_C": float(max(ratio.max(), 1 / ratio.min())),
        "f_convex": bool(np.all(np.diff(thermo.f_grid, 2) > -1e-12))})
    print("thermo: table written")
    return EXIT_OK


def cmd_ratefn(cfg: ExperimentConfig, out: Emitter, threads: int) -> int:
    d = cfg._num("model", "d", int)
    M = cfg._num("numerics", "M", int)
    T = cfg._num("run", "T", float)
    thermo = _thermo(cfg)
    field = cfg.build_field()
    mob = _mobility_model(cfg, thermo)
    D = transport.diffusion_model(mob, thermo)
    rho_bar = cfg._num("numerics", "rho_bar", float, 0.5)
    payload = {}
    for grid in (M // 2, M):
        prof = _perturbed_profile(cfg, thermo, grid, d, rho_bar)
        problem = pde.PdeProblem(d, grid, mob.sigma, D, field, prof, T,
                                 n_out=max(8, grid // 2))
        path = pde.solve_hydro(problem)
        ev = ldp.rate_functional(path, mob.sigma, D, field, gamma=prof)
        payload[f"I_hydro_M{grid}"] = ev.value
    payload["order"] = float(np.log2(payload[f"I_hydro_M{M//2}"]
                                     / max(payload[f"I_hydro_M{M}"], 1e-300)))
    out.json("ratefn.json", payload)
    print("ratefn:", payload)
    return EXIT_OK


def _perturbed_profile(cfg, thermo, M, d, rho_bar):
    field = cfg.build_field()
    U = field.U if field is not None else None
    gamma = pde.stationary_profile(rho_bar, U, thermo, M, d).values
    pert = _target_perturbation(cfg, M, d)
    prof = gamma + pert
    prof -= prof.mean() - rho_bar
    if prof.min() <= 0 or prof.max() >= 1:
        raise ConfigError("target perturbation leaves (0,1)")
    return prof


def _target_perturbation(cfg, M, d):
    from .fields import fourier_scalar
    tcos = cfg._coeffs(cfg.numerics.get("target_cos", ""), d)
    tsin = cfg._coeffs(cfg.numerics.get("target_sin", ""), d)
    if not (tcos or tsin):
        return np.zeros((M,) * d)
    fn, _ = fourier_scalar(d, cos=tcos, sin=tsin)
    centers = (np.arange(M) + 0.5) / M
    if d == 1:
        return fn(centers[:, None]).reshape(M)
    grids = np.meshgrid(*([centers] * d), indexing="ij")
    pts = np.stack(grids, axis=-1).reshape(-1, d)
    return fn(pts).reshape((M,) * d)


def cmd_quasipotential(cfg: ExperimentConfig, out: Emitter, threads: int) -> int:
    d = cfg._num("model", "d", int)
    M = cfg._num("numerics", "M", int)
    thermo = _thermo(cfg)
    field = cfg.build_field()
    mob = _mobility_model(cfg, thermo)
    D = transport.diffusion_model(mob, thermo)
    rho_bar = cfg._num("numerics", "rho_bar", float, 0.5)
    rho = _perturbed_profile(cfg, thermo, M, d, rho_bar)
    relax_tol = cfg._num("numerics", "relax_tol", float, 1e-4)
    plan = ldp.optimal_exit_path(rho, rho_bar, field, thermo, mob.sigma, D,
                                 relax_tol=relax_tol, slices_per_chunk=400)
    out.json("quasipotential.json", json.loads(plan.to_json()))
    m = plan.path.times.size
    flat = plan.path.values.reshape(m, -1)
    idx = np.indices(plan.path.values.shape[1:]).reshape(d, -1).T
    rows = [(float(plan.path.times[j]),)
            + tuple(int(c) for c in cell) + (float(v),)
            for j in range(m) for cell, v in zip(idx, flat[j])]
    out.csv("exit_path.csv",
            "t," + ",".join(f"cell{i}" for i in range(d)) + ",value", rows)
    print(f"quasipotential: F={plan.value:.6g} I(theta v)={plan.rate_value:.6g}")
    return EXIT_OK


def cmd_duality_check(cfg: ExperimentConfig, out: Emitter, threads: int) -> int:
    d = cfg._num("model", "d", int)
    M = cfg._num("numerics", "M", int)
    T = cfg._num("run", "T", float)
    thermo = _thermo(cfg)
    field = cfg.build_field()
    if field is None or field.U is None:
        raise ConfigError("duality-check needs a field with a potential part")
    mob = _mobility_model(cfg, thermo)
    D = transport.diffusion_model(mob, thermo)
    rho_bar = cfg._num("numerics", "rho_bar", float, 0.5)
    payload = {}
    for grid in (M // 2, M):
        gamma = pde.stationary_profile(rho_bar, field.U, thermo, grid, d).values
        problem = pde.PdeProblem(d, grid, mob.sigma, D, field, gamma, T,
                                 n_out=max(16, grid))

        def pot(t, pts):
            return 2.0 * np.sin(np.pi * t / T) * _target_potential(cfg, pts, d)

        path = pde.solve_hydro(problem, extra_potential=pot)
        res = ldp.duality_defect(path, field, rho_bar, thermo, mob.sigma, D,
                                 gamma=gamma)
        payload[f"duality_defect_M{grid}"] = res["defect"]
        relax = pde.solve_adjoint(_perturbed_profile(cfg, thermo, grid, d, rho_bar),
                                  field, d, grid, mob.sigma, D, T=T,
                                  n_out=2 * grid)
        recs = ldp.lyapunov_series(relax, rho_bar, thermo, mob.sigma,
                                   gamma=gamma, U=field.U)
        payload[f"lyapunov_defect_M{grid}"] = max(
            r["defect"] for r in recs if "defect" in r)
    payload["duality_shrink"] = (payload[f"duality_defect_M{M//2}"]
                                 / max(payload[f"duality_defect_M{M}"], 1e-300))
    payload["lyapunov_shrink"] = (payload[f"lyapunov_defect_M{M//2}"]
                                  / max(payload[f"lyapunov_defect_M{M}"], 1e-300))
    out.json("duality_check.json", payload)
    print("duality-check:", {k: f"{v:.3e}" for k, v in payload.items()})
    return EXIT_OK


def _target_potential(cfg, pts, d):
    from .fields import fourier_scalar
    tcos = cfg._coeffs(cfg.numerics.get("target_cos", ""), d)
    tsin = cfg._coeffs(cfg.numerics.get("target_sin", ""), d)
    if not (tcos or tsin):
        raise ConfigError("duality-check needs target_* coefficients as the drive")
    fn, _ = fourier_scalar(d, cos=tcos, sin=tsin)
    return fn(pts)


def cmd_check(cfg: ExperimentConfig, out: Emitter, threads: int) -> int:
    report = checks.run_invariant_suite()
    out.json("check.json", report)
    for name, res in report.items():
        if isinstance(res, dict):
            print(f"{'PASS' if res['pass'] else 'FAIL'} {name}")
    print("check:", "all green" if report["all_pass"] else "FAILURES")
    return EXIT_OK if report["all_pass"] else EXIT_INVARIANT


COMMANDS = {
    "simulate": cmd_simulate,
    "hydro-compare": cmd_hydro_compare,
    "exact-stationary": cmd_exact_stationary,
    "mobility": cmd_mobility,
    "thermo": cmd_thermo,
    "ratefn": cmd_ratefn,
    "quasipotential": cmd_quasipotential,
    "duality-check": cmd_duality_check,
    "check": cmd_check,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="latticegas",
        description="Driven Kawasaki lattice gas experiments")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None, help="config file path")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    try:
        cfg = (ExperimentConfig.load(args.config) if args.config
               else ExperimentConfig.parse(""))
        if args.seed is not None:
            cfg.run["seed"] = str(args.seed)
        outdir = args.out or cfg.output.get("dir", "out")
        emitter = Emitter(outdir, cfg)
        code = COMMANDS[args.command](cfg, emitter, max(1, args.threads))
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PdeError, LdpError, DynamicsError, LatticeError, FieldError,
            gibbs.ThermoError, transport.TransportError,
            coarse.CoarseError) as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    return code


if __name__ == "__main__":
    sys.exit(main())
