import numpy as np
import pytest

from latticegas import (Configuration, DensityField, KmcModel, block_average,
                        coarsen, empirical_density, ensemble_mean, make_torus,
                        mollify, run_ensemble, shift)
from latticegas.coarse import CoarseError, mollifier_kernel_1d


def test_empirical_density_basic():
    t = make_torus(1, 4)
    full = Configuration(np.ones(4, dtype=np.uint8))
    assert np.all(empirical_density(full, t).values == 1.0)
    alt = Configuration(np.array([1, 0, 1, 0], dtype=np.uint8))
    df = empirical_density(alt, t)
    assert list(df.values) == [1.0, 0.0, 1.0, 0.0]
    assert df.mass == alt.count / 4


def test_empirical_density_commutes_with_shift(rng):
    t = make_torus(2, 6)
    occ = (rng.random(36) < 0.4).astype(np.uint8)
    c = Configuration(occ)
    a = empirical_density(shift(c, t, (2, 1)), t).values
    b = np.roll(empirical_density(c, t).values, (-2, -1), axis=(0, 1))
    assert np.array_equal(a, b)


def test_block_average_examples():
    t = make_torus(1, 6)
    c = Configuration(np.array([1, 1, 0, 1, 0, 0], dtype=np.uint8))
    assert block_average(c, t, 0, 0) == 1.0
    assert block_average(c, t, 0, 1) == pytest.approx(2 / 3)
    assert block_average(c, t, 2, 5) == pytest.approx(0.5)  # covers the torus
    assert block_average(c, t, 2, 40) == pytest.approx(0.5)


def test_coarsen_conserves_mass(rng):
    vals = rng.random((64, 64))
    out = coarsen(vals, 16)
    assert out.shape == (16, 16)
    assert out.mean() == pytest.approx(vals.mean(), abs=1e-14)
    with pytest.raises(CoarseError):
        coarsen(vals, 24)


def test_mollifier_kernel_properties():
    k = mollifier_kernel_1d(256, kappa=0.4, eps=0.1)
    assert k.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(k >= 0)
    # flat on the inner plateau
    half = (len(k) - 1) // 2
    r = np.arange(-half, half + 1) / 256
    inner = np.abs(r) <= (1 - 0.4) * 0.1 - 1 / 256
    assert np.ptp(k[inner]) < 1e-15
    with pytest.raises(CoarseError):
        mollifier_kernel_1d(16, kappa=0.1, eps=0.05)  # too coarse


def test_mollify_constant_and_mass(rng):
    const = DensityField(np.full(128, 0.42))
    out = mollify(const, 0.5, 0.1)
    assert np.max(np.abs(out.values - 0.42)) < 1e-14
    vals = rng.random(128)
    f = DensityField(vals)
    sm = mollify(f, 0.5, 0.1)
    assert sm.mass == pytest.approx(f.mass, abs=1e-12)
    # sup-norm contraction
    assert sm.values.min() >= vals.min() - 1e-12
    assert sm.values.max() <= vals.max() + 1e-12


def test_mollify_transition_layer():
    M = 512
    vals = np.zeros(M)
    vals[:M // 2] = 1.0
    sm = mollify(DensityField(vals), kappa=0.3, eps=0.1)
    # smooth output with transition layer width <= 2 eps per jump
    inside_hi = sm.values[int(0.15 * M):int(0.35 * M)]
    inside_lo = sm.values[int(0.65 * M):int(0.85 * M)]
    assert np.all(inside_hi > 0.999)
    assert np.all(inside_lo < 0.001)
    assert np.max(np.abs(np.diff(sm.values))) < 0.05  # no jumps survive


def test_mollify_2d_mass():
    rng = np.random.default_rng(3)
    f = DensityField(rng.random((64, 64)))
    sm = mollify(f, 0.4, 0.12)
    assert sm.mass == pytest.approx(f.mass, abs=1e-12)


def test_ensemble_mean_basics():
    t = make_torus(1, 16)
    model = KmcModel(t)
    prof = np.full(16, 0.5)
    trajs = run_ensemble(model, prof, 5, 0.05, [0.05], master_seed=4)
    mean, se = ensemble_mean(trajs, 0.05)
    assert mean.mass == pytest.approx(np.mean([tr.counts()[0] for tr in trajs]) / 16)
    single, se0 = ensemble_mean(trajs[:1], 0.05)
    assert np.array_equal(single.values,
                          trajs[0].snapshots[0].astype(float))
    assert np.all(se0 == 0.0)
    again, _ = ensemble_mean(run_ensemble(model, prof, 5, 0.05, [0.05],
                                          master_seed=4), 0.05)
    assert np.array_equal(mean.values, again.values)


def test_ensemble_mean_guards():
    t = make_torus(1, 16)
    model = KmcModel(t)
    trajs = run_ensemble(model, np.full(16, 0.5), 2, 0.05, [0.05], master_seed=1)
    with pytest.raises(CoarseError):
        ensemble_mean(trajs, 0.04)
    with pytest.raises(CoarseError):
        ensemble_mean([], 0.05)
