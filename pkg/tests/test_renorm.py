"""Renormalized constants: trivial values, MC quadrature oracles, scaling."""

import math

import numpy as np
import pytest

from kpzlab.config import SimConfig
from kpzlab.multiscale import build_partition
from kpzlab.noise import Mollifier
from kpzlab.renorm import (boundary_decay_check, compute_constants, coupling,
                           d_eff_ratio, delta_nu_alt_form, delta_nu_leading,
                           v0_fixed_point, v0_leading)


@pytest.fixture(scope="module")
def part():
    return build_partition(4)


@pytest.fixture(scope="module")
def moll():
    return Mollifier(d=3)


def _cfg(lam=0.2, **kw):
    return SimConfig(d=3, L=16, dx=0.25, lam=lam, noise="mollified", **kw)


def test_coupling_values():
    assert coupling(_cfg(lam=0.0)) == 0.0
    assert coupling(SimConfig(lam=1.0, nu0=1.0, D0=1.0, dx=0.25)) == 1.0
    got = coupling(SimConfig(lam=0.1, nu0=0.5, D0=2.0, dx=0.25))
    assert abs(got - 0.2 * math.sqrt(2.0)) < 1e-15


def test_v0_leading_zero_coupling(part, moll):
    assert v0_leading(_cfg(lam=0.0), part, mollifier=moll).value == 0.0


def test_v0_leading_monte_carlo_oracle(part, moll):
    """Importance-sampled MC of the same integral, 10^6 samples, 3 stderr."""
    cfg = _cfg(lam=0.2, nu0=1.0)
    quad = v0_leading(cfg, part, mollifier=moll)
    rng = np.random.default_rng(42)
    N = 10 ** 6
    tmax = 2.0 * moll.time_halfwidth
    t = rng.uniform(0.0, tmax, size=N)
    x = rng.normal(size=(N, 3)) * np.sqrt(2.0 * cfg.nu0 * t)[:, None]
    vals = moll.time_autocov(t) * moll.space_autocov(np.linalg.norm(x, axis=1))
    est = cfg.g0 * tmax * vals.mean()
    se = cfg.g0 * tmax * vals.std(ddof=1) / math.sqrt(N)
    assert abs(quad.value - est) < 3.0 * se


def test_v0_requires_mollified(part):
    with pytest.raises(ValueError):
        v0_leading(_cfg().with_(noise="kick", dx=1.0), part)


def test_v0_fixed_point_properties(part, moll):
    val0, it0 = v0_fixed_point(_cfg(lam=0.0), part, mollifier=moll)
    assert val0.value == 0.0
    val, iters = v0_fixed_point(_cfg(lam=0.2), part, mollifier=moll)
    assert iters < 20
    lead = v0_leading(_cfg(lam=0.2), part, mollifier=moll).value
    # correction is O(g^3): the normalized difference is stable under halving lam
    val_h, _ = v0_fixed_point(_cfg(lam=0.1), part, mollifier=moll)
    lead_h = v0_leading(_cfg(lam=0.1), part, mollifier=moll).value
    g, gh = _cfg(lam=0.2).g0, _cfg(lam=0.1).g0
    r1 = (val.value - lead) / g ** 3
    r2 = (val_h.value - lead_h) / gh ** 3
    assert 0.5 < r1 / r2 < 2.0


def test_delta_nu_oracle_and_axis_independence(part, moll):
    cfg = _cfg(lam=0.2)
    quad = delta_nu_leading(cfg, part, mollifier=moll)
    assert quad.value > 0
    # MC oracle with the x1^2 weight evaluated directly (no radial reduction)
    rng = np.random.default_rng(7)
    N = 10 ** 6
    tmax = 2.0 * moll.time_halfwidth
    t = rng.uniform(0.0, tmax, size=N)
    x = rng.normal(size=(N, 3)) * np.sqrt(2.0 * cfg.nu0 * t)[:, None]
    r = np.linalg.norm(x, axis=1)
    pref = 0.5 * cfg.lam ** 2 * cfg.D0 / cfg.nu0 ** 2
    for axis in (0, 1):
        vals = x[:, axis] ** 2 * moll.time_autocov(t) * moll.space_autocov(r)
        est = pref * tmax * vals.mean()
        se = pref * tmax * vals.std(ddof=1) / math.sqrt(N)
        assert abs(quad.value - est) < 3.0 * se


def test_delta_nu_dual_forms_agree(part, moll):
    a = delta_nu_leading(_cfg(), part, mollifier=moll)
    b = delta_nu_alt_form(_cfg(), part, mollifier=moll)
    assert abs(a.value - b.value) <= a.error + b.error


def test_d_eff_ratio_properties(part, moll):
    assert d_eff_ratio(_cfg(lam=0.0), part, mollifier=moll).value == 1.0
    r = d_eff_ratio(_cfg(lam=0.2), part, mollifier=moll)
    assert r.value > 1.0
    # (ratio - 1)/lam^2 stable within 5% between lam = 0.1 and 0.2
    r2 = d_eff_ratio(_cfg(lam=0.1), part, mollifier=moll)
    k1 = (r.value - 1.0) / 0.2 ** 2
    k2 = (r2.value - 1.0) / 0.1 ** 2
    assert abs(k1 - k2) / k1 < 0.05


def test_quadrature_self_consistency(part, moll):
    cfg = _cfg(lam=0.2)
    coarse = v0_leading(cfg, part, mollifier=moll, n_t=32, n_s=64)
    fine = v0_leading(cfg, part, mollifier=moll, n_t=64, n_s=128)
    assert abs(coarse.value - fine.value) <= coarse.error + fine.error


def test_boundary_decay(part, moll):
    cfg = _cfg(lam=0.2)
    rep = boundary_decay_check(cfg, part, T_list=[0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 2.0],
                               mollifier=moll)
    assert rep.truncated[0] == 0.0                      # T = 0: nothing integrated
    assert rep.residual[0] == pytest.approx(
        v0_leading(cfg, part, mollifier=moll).value, rel=1e-9)
    assert abs(rep.residual[-1]) < 1e-12                # beyond the kernel support
    assert rep.monotone and rep.at_least_linear


def test_compute_constants_bundle(part, moll):
    consts = compute_constants(_cfg(lam=0.2), part, mollifier=moll)
    d = consts.to_dict()
    assert d["g0"] == 0.2
    assert d["v0_leading"] > 0 and d["delta_nu"] > 0 and d["d_eff_ratio"] > 1
    assert consts.d_eff_curvature == pytest.approx(
        (d["d_eff_ratio"] - 1) / 0.04, rel=1e-12)
    assert set(d["errors"]) == {"v0_leading", "v0_fixed_point", "delta_nu",
                                "delta_nu_alt", "d_eff_ratio"}
