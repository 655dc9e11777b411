"""Noise module: mollifier invariants, covariance oracle, sampling laws,
large-field box classification."""

import math

import numpy as np
import pytest

from kpzlab.config import SimConfig
from kpzlab.noise import (Mollifier, NoiseField, ResolutionError, classify_boxes,
                          covariance, gauss_legendre, sample_noise, sphere_area)
from kpzlab.streams import stream


@pytest.fixture(scope="module")
def moll3():
    return Mollifier(d=3)


def test_mollifier_unit_mass(moll3):
    assert abs(moll3.total_mass() - 1.0) < 1e-6


def test_mollifier_parabolic_support(moll3):
    # vanishes identically outside the parabolic ball of radius 1/2
    rng = np.random.default_rng(0)
    for _ in range(200):
        t = rng.uniform(-0.6, 0.6)
        r = rng.uniform(0, 0.8)
        if abs(t) + r * r >= 0.25:
            assert moll3.profile(t, r) == 0.0
    assert moll3.profile(0.0, 0.0) > 0.0


def test_mollifier_isotropy(moll3):
    # depends on |x| only: same radius, different directions
    r = 0.2
    vals = [moll3.profile(0.05, np.linalg.norm(v))
            for v in ([r, 0, 0], [0, r, 0], [r / math.sqrt(2), r / math.sqrt(2), 0])]
    assert max(vals) - min(vals) < 1e-14


def test_covariance_symmetric_and_finite_range(moll3):
    rng = np.random.default_rng(1)
    for _ in range(30):
        dt = rng.uniform(-0.3, 0.3)
        dx = rng.uniform(0, 1.0, size=3)
        a = covariance(moll3, dt, dx)
        b = covariance(moll3, -dt, -dx)
        assert a == b
        if math.sqrt(dt * dt + float(dx @ dx)) >= 1.0:
            assert a == 0.0
    # parabolic distance >= 1 (the spec's finite-range invariant)
    assert covariance(moll3, 0.6, 0.0) == 0.0
    assert covariance(moll3, 0.0, [1.0, 0, 0]) == 0.0


def test_covariance_positive_at_origin(moll3):
    assert covariance(moll3, 0.0, np.zeros(3)) > 0.0


def test_covariance_refinement_oracle(moll3):
    """Separable factors against dense-grid brute-force convolutions at double
    resolution; 1e-4 absolute."""
    # time factor: brute force on a uniform grid
    for tau in (0.05, 0.12, -0.2):
        for n in (4096,):
            h = 2 * moll3.time_halfwidth / n
            s = np.linspace(-moll3.time_halfwidth, moll3.time_halfwidth, n + 1)
            brute = float(np.trapezoid(moll3.time_part(s) * moll3.time_part(tau - s), s))
            assert abs(brute - moll3.time_autocov(tau)) < 1e-4
    # spatial factor: dense 2D radial-grid convolution (double the standard density)
    R = moll3.space_radius
    for r in (0.0, 0.17, 0.41):
        n = 900
        rho = np.linspace(1e-6, R, n)
        th = np.linspace(0.0, math.pi, n)
        dist = np.sqrt(rho[:, None] ** 2 + r * r - 2 * r * rho[:, None] * np.cos(th)[None, :])
        integrand = (rho[:, None] ** 2 * moll3.space_part(rho)[:, None]
                     * moll3.space_part(dist) * np.sin(th)[None, :])
        brute = 2 * math.pi * np.trapezoid(np.trapezoid(integrand, th, axis=1), rho)
        assert abs(brute - moll3.space_autocov(r)) < 1e-4


def test_sampling_deterministic():
    cfg = SimConfig(d=2, L=8, dx=0.25, T=0.2, noise="mollified", seed=9)
    a = sample_noise(cfg, 3)
    b = sample_noise(cfg, 3)
    assert np.array_equal(a.values, b.values)
    c = sample_noise(cfg, 4)
    assert not np.array_equal(a.values, c.values)


def test_mollified_unit_strength_and_variance(moll3):
    # field is unit-strength regardless of D0; empirical variance ~ cov(0,0)
    cfg = SimConfig(d=3, L=12, dx=0.25, T=0.5, D0=0.0, noise="mollified", seed=2)
    field = sample_noise(cfg, 0)
    var = field.values.var()
    target = covariance(moll3, 0.0, np.zeros(3))
    # lattice sampling renormalization keeps mass, shifts the pointwise
    # variance at O(dx^2); allow 15% plus statistics
    assert abs(var - target) / target < 0.15


def test_mollified_time_decorrelation():
    """Slices at |dt| >= 1 share no white-noise input (kernel range is 1/4), so
    the replica-averaged product is pure noise around zero; at dt = 0 it is the
    field variance."""
    cfg = SimConfig(d=1, L=64, dx=0.25, T=1.5, noise="mollified", seed=5)
    i2 = int(round(1.0 / cfg.dt))
    taps = int(math.ceil(0.125 / cfg.dt))
    assert i2 > 2 * taps
    same, far = [], []
    for r in range(40):
        f = sample_noise(cfg, r)
        same.append(np.mean(f.values[0] * f.values[0]))
        far.append(np.mean(f.values[0] * f.values[i2]))
    same, far = np.array(same), np.array(far)
    z = far.mean() / (far.std(ddof=1) / math.sqrt(len(far)))
    assert abs(z) < 4.0
    assert same.mean() > 10.0 * abs(far.mean())


def test_kick_constant_on_unit_intervals():
    cfg = SimConfig(d=2, L=8, dx=1.0, dt=0.125, T=3.0, noise="kick", seed=3)
    f = sample_noise(cfg, 0)
    per = int(round(1.0 / cfg.dt))
    for n in range(3):
        block = f.values[n * per:(n + 1) * per]
        assert np.all(block == block[0])
    assert not np.array_equal(f.values[0], f.values[per])


def test_resolution_error():
    cfg = SimConfig(d=2, L=8, dx=1.0, T=0.5, noise="mollified")
    with pytest.raises(ResolutionError):
        sample_noise(cfg, 0)


def test_classification_examples():
    # sup = 5 with lam = 0.01 -> small; sup = 15 -> k = 0
    cfg = SimConfig(d=1, L=4, dx=0.25, dt=0.25 / 8, T=1.0, noise="white")
    values = np.full((8, 4), 5.0)
    f = NoiseField(values=values, dt=1.0 / 8, dx=0.25, kind="white")
    lab = classify_boxes(f, 0.01)
    assert np.all(lab.labels == -1)
    f2 = NoiseField(values=np.full((8, 4), 15.0), dt=1.0 / 8, dx=0.25, kind="white")
    lab2 = classify_boxes(f2, 0.01)
    assert np.all(lab2.labels == 0)


def test_classification_partition_and_monotone():
    rng = np.random.default_rng(8)
    values = rng.normal(size=(16, 8, 8)) * 4.0      # d = 2, two time units
    f = NoiseField(values=values, dt=1.0 / 8, dx=0.25, kind="mollified")
    lab = classify_boxes(f, 0.05)
    assert lab.labels.shape == (2, 2, 2)            # (8 sites * 0.25)^2 -> 2x2 blocks
    # every box got exactly one label, monotone in sup|eta|
    sups = lab.sup_values.ravel()
    labs = lab.labels.ravel()
    order = np.argsort(sups)
    assert np.all(np.diff(labs[order]) >= 0)
    # boundary rule: 2^k < sup sqrt(lam) <= 2^{k+1}, small iff <= 1
    for s, k in zip(sups, labs):
        u = s * math.sqrt(0.05)
        if k == -1:
            assert u <= 1.0 + 1e-12
        else:
            assert 2.0 ** k < u * (1 + 1e-12) and u <= 2.0 ** (k + 1) * (1 + 1e-12)


def test_classification_decay_envelope():
    """Fraction of boxes with label >= k decays at least like exp(-c 4^k / lam)
    with a fitted c > 0 over k in {0, 1}; run on a synthetic unit-variance
    Gaussian field where the threshold scale is controlled."""
    rng = np.random.default_rng(12)
    lam = 0.25
    counts = {0: 0, 1: 0}
    total = 0
    for _ in range(40):
        values = rng.normal(size=(8, 16, 16))
        f = NoiseField(values=values, dt=1.0 / 8, dx=0.25, kind="white")
        lab = classify_boxes(f, lam)
        total += lab.labels.size
        counts[0] += int(np.sum(lab.labels >= 0))
        counts[1] += int(np.sum(lab.labels >= 1))
    p0 = counts[0] / total
    p1 = counts[1] / total
    assert 0 < p1 < p0
    c = lam * math.log(p0 / p1) / (4.0 - 1.0)
    assert c > 0


def test_noisefield_roundtrip(tmp_path):
    cfg = SimConfig(d=2, L=6, dx=0.25, T=0.25, noise="mollified", seed=1)
    f = sample_noise(cfg, 0)
    path = tmp_path / "noise.field"
    f.save(path)
    g = NoiseField.load(path)
    assert np.array_equal(f.values, g.values)
    assert g.kind == "mollified" and g.dx == f.dx and g.dt == f.dt
