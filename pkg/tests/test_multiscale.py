"""Dyadic partition, kernels, effective propagator, Neumann series."""

import math

import numpy as np
import pytest

from kpzlab.config import SimConfig
from kpzlab.multiscale import (KernelScale, ScalePartition, SeriesDivergenceError,
                               SpatialBump, build_partition, chi0_profile, chi_profile,
                               effective_propagator, vertex_neumann)
from kpzlab.noise import sample_noise
from kpzlab.spde import run
from kpzlab.streams import stream


@pytest.fixture(scope="module")
def part():
    return build_partition(6)


def test_cutoff_supports():
    t = np.linspace(-1, 5, 400)
    c0 = chi0_profile(t)
    c = chi_profile(t)
    assert np.all(c0[(t < 0) | (t > 1)] == 0)
    assert np.all(c[(t < 0.5) | (t > 2)] == 0)
    assert c0.max() <= 1.0 and c.max() <= 1.0
    assert chi0_profile(0.1) > 0.9


def test_partition_window_and_reconstruction(part):
    assert np.all(part.S_values >= part.s_window[0])
    assert np.all(part.S_values <= part.s_window[1])
    taus = part.tau_grid
    weights = sum(part.time_weight(j, taus) for j in range(part.jmax + 1))
    assert np.abs(weights - 1.0).max() < 1e-10
    for xi in (0.0, 0.5, 1.7):
        total = sum(part.g_fourier(j, taus, xi) for j in range(part.jmax + 1))
        assert np.abs(total - np.exp(-taus * xi * xi)).max() < 1e-8


def test_partition_causality(part):
    taus = np.array([-2.0, -0.1])
    for j in range(part.jmax + 1):
        assert np.all(part.g_fourier(j, taus, 0.7) == 0.0)
    ker = KernelScale(j=2, nu=1.0, d=3, partition=part)
    assert np.all(ker.a_kernel(np.array([-1.0, 0.0]), 0.3) == 0.0)


def test_kernel_time_supports(part):
    for j in (1, 3):
        ker = KernelScale(j=j, nu=1.0, d=3, partition=part)
        lo, hi = ker.time_support()
        assert (lo, hi) == (2.0 ** (j - 1), 2.0 ** (j + 1))
        taus = np.array([lo * 0.9, hi * 1.1])
        assert np.all(ker.a_kernel(taus, 0.0) == 0.0)
        grid = np.linspace(lo * 1.05, hi * 0.95, 7)
        assert np.all(ker.a_kernel(grid, 0.0) > 0.0)
        # G^j support is the convolved one
        assert np.all(ker.g_raw_time(np.array([2.0 ** j * 0.95,
                                               2.0 ** (j + 2) * 1.05])) == 0.0)


def test_scale0_weight_is_one_inside(part):
    taus = np.array([0.05, 0.3, 0.9, 1.2])
    w = part.time_weight(0, taus)
    assert np.abs(w - 1.0).max() < 1e-12


def test_monotone_in_viscosity(part):
    """G^j_{nu'} <= (nu/nu')^{d/2} G^j_nu pointwise for nu' <= nu."""
    nu, nup, d = 1.0, 0.6, 3
    k1 = KernelScale(j=2, nu=nu, d=d, partition=part)
    k2 = KernelScale(j=2, nu=nup, d=d, partition=part)
    taus = np.linspace(4.2, 15.5, 12)[:, None]
    xs = np.linspace(0.0, 10.0, 40)[None, :]
    ratio_bound = (nu / nup) ** (d / 2.0)
    a, b = k2.g_kernel_raw(taus, xs), k1.g_kernel_raw(taus, xs)
    mask = b > 1e-300
    assert np.all(a[mask] <= ratio_bound * b[mask] * (1 + 1e-12))


def test_spatial_bump_fourier():
    bump = SpatialBump(d=3)
    assert abs(bump.fourier(0.0) - 1.0) < 1e-8
    xi = np.linspace(0.0, 6.0, 13)
    vals = bump.fourier(xi)
    assert np.all(np.abs(vals) <= 1.0 + 1e-9)
    assert vals[1] < vals[0]


def test_effective_propagator_zero_shift(part):
    ep = effective_propagator(part, 0.0, "resummed", tau_max=12.0)
    taus = np.array([3.0, 6.0, 10.0])
    for xi in (0.3, 1.0):
        low = np.exp(-taus * xi * xi)       # G^{->1} on tau > 2
        assert np.abs(ep.fourier(taus, xi) - low).max() < 1e-12


def test_effective_propagator_volterra_oracle(part):
    """Volterra iteration equals the closed Fourier form of the UV-regularized
    kernel to 1e-8 (per-mode diagonal)."""
    ep = effective_propagator(part, 0.12, "regularized", tau_max=16.0)
    taus = np.array([2.0, 4.0, 8.0, 14.0])
    for xi in (0.4, 1.3, 2.4):
        series = ep.fourier(taus, xi, via="series")
        closed = ep.fourier(taus, xi)
        assert np.abs(series - closed).max() < 1e-8


def test_effective_propagator_rejects_large_shift(part):
    with pytest.raises(ValueError):
        effective_propagator(part, 0.3, "resummed")


def test_effective_propagator_scaling_regime(part):
    ep_res = effective_propagator(part, 0.1, "resummed", tau_max=18.0)
    ep_heat = effective_propagator(part, 0.1, "heat")
    devs = []
    for tau in (4.0, 16.0):
        g1 = ep_res.real_space_origin(np.array([tau]))[0]
        g2 = ep_heat.real_space_origin(np.array([tau]))[0]
        bare = (4.0 * math.pi * tau) ** -1.5
        devs.append(abs(g1 - g2) / bare)
    assert devs[1] < devs[0] / 2.0


def test_vertex_neumann_orders():
    cfg = SimConfig(d=2, L=12, dx=1.0, dt=1.0 / 8, T=1.0, lam=0.1, v0=0.0,
                    noise="kick", seed=3)
    noise = sample_noise(cfg, 0)
    res0 = vertex_neumann(noise, cfg, order=0)
    assert np.allclose(res0.w, 1.0)          # heat evolution of w0 = 1
    res_g0 = vertex_neumann(noise, cfg.with_(lam=0.0), order=3)
    assert np.allclose(res_g0.w, 1.0)        # g0 = 0: independent of order
    assert all(n == 0.0 for n in res_g0.order_norms[1:])

    res = vertex_neumann(noise, cfg, order=4)
    traj = run(cfg, "she", noise=noise)
    trunc = res.truncation
    disc = np.abs(res.w - traj.final).max()
    res_half = vertex_neumann(noise, cfg.with_(dt=1.0 / 16), order=4)
    disc_est = np.abs(res.w - res_half.w).max()
    assert disc < max(trunc, 3.0 * disc_est) + 5e-3


def test_vertex_neumann_divergence_guard():
    cfg = SimConfig(d=1, L=8, dx=1.0, dt=0.25, T=8.0, lam=60.0, v0=0.0,
                    noise="kick", seed=4)
    noise = sample_noise(cfg, 0)
    with pytest.raises((SeriesDivergenceError, OverflowError)):
        vertex_neumann(noise, cfg, order=8)


def test_vertex_neumann_order_cap():
    cfg = SimConfig(d=1, L=8, dx=1.0, T=1.0, noise="white")
    noise = sample_noise(cfg, 0)
    with pytest.raises(ValueError):
        vertex_neumann(noise, cfg, order=9)
