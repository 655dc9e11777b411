"""Power-counting checks: scale uniformity, divergent exponents, volume margins,
gradient bound."""

import numpy as np
import pytest

from kpzlab.multiscale import build_partition
from kpzlab.powercount import (check_pw1, check_pw1_divergent, check_pw2,
                               check_single_scale, check_two_scale,
                               gradient_bound_check)


@pytest.fixture(scope="module")
def part():
    return build_partition(8)


def test_single_scale_mass_and_sup_uniform(part):
    masses, sups = [], []
    for j in (1, 4, 8):
        rep = check_single_scale(part, j, kappa=(0, 0))
        masses.append(rep.mass_constant)
        sups.append(rep.sup_constant)
    assert max(masses) / min(masses) < 2.0
    assert max(sups) / min(sups) < 2.0
    # mass(A^1)/2^(1/2) vs mass(A^8)/2^4 within a factor 2
    assert 0.5 < masses[0] / masses[-1] < 2.0


def test_single_scale_quadrature_oracle(part):
    """j=1 absolute mass against an independent direct quadrature."""
    rep = check_single_scale(part, 1)
    taus = np.linspace(1.0, 4.0, 20001)      # scale-1 support [2^0, 2^2]
    direct = np.trapezoid(2.0 ** -0.5 * part.chi(taus / 2.0), taus)
    assert abs(rep.mass - direct) < 1e-4 * direct


def test_single_scale_rejects_high_order(part):
    with pytest.raises(ValueError):
        check_single_scale(part, 1, kappa=(1, 2))
    with pytest.raises(ValueError):
        check_single_scale(part, 0)


def test_two_scale_uniform(part):
    consts = [check_two_scale(part, j, 1, 1).sup_constant for j in (1, 4, 8)]
    assert max(consts) / min(consts) < 2.0
    consts2 = [check_two_scale(part, j, 0, 3).sup_constant for j in (1, 5)]
    assert max(consts2) / min(consts2) < 2.0


def test_pw1_constants_uniform(part):
    reports = check_pw1(part, [1, 3, 6, 8])
    for label in ("grad3", "dt_grad"):
        consts = [r.constant for r in reports if r.kappa_label == label]
        assert max(consts) / min(consts) < 2.0


def test_pw1_divergent_exponents():
    rep0 = check_pw1_divergent(0, t_values=2.0 ** np.arange(3, 10))
    assert abs(rep0.fitted_exponent - 1.0) <= 0.1
    rep1 = check_pw1_divergent(1, t_values=2.0 ** np.arange(3, 9))
    assert abs(rep1.fitted_exponent - 0.5) <= 0.15
    rep2 = check_pw1_divergent(2, t_values=2.0 ** np.arange(3, 9))
    assert rep2.log_r2 > 0.99


def test_pw2_examples():
    holds, margin = check_pw2(3, 4, 4)
    assert holds and abs(margin) < 1e-12        # d=3, j1=j2: equality
    holds, margin = check_pw2(4, 1, 3)
    assert holds and abs(margin - 4.0) < 1e-12  # 9 - 5 = 4 bits
    with pytest.raises(ValueError):
        check_pw2(3, 0, 3)
    with pytest.raises(ValueError):
        check_pw2(3, 5, 2)
    for d in (3, 4, 5):
        for j1 in range(1, 13):
            for j2 in range(j1, 13):
                assert check_pw2(d, j1, j2)[0]


def test_gradient_bound_identity_case():
    rep = gradient_bound_check(1.0, 0.2, 0, (np.linspace(0.5, 4, 5), np.linspace(0, 5, 7)))
    assert rep.constant == 1.0 and rep.nu_shifted == rep.nu


def test_gradient_bound_stable_under_refinement():
    grid1 = (np.linspace(0.5, 8.0, 10), np.linspace(0.0, 14.0, 300))
    grid2 = (np.linspace(0.5, 8.0, 20), np.linspace(0.0, 14.0, 600))
    a = gradient_bound_check(1.0, 0.2, 1, grid1).constant
    b = gradient_bound_check(1.0, 0.2, 1, grid2).constant
    assert abs(a - b) / a < 0.10


def test_gradient_bound_fails_without_shift():
    narrow = gradient_bound_check(1.0, 0.2, 1, (np.array([1.0]), np.linspace(0, 15, 300)),
                                  shift_factor=0.0)
    wide = gradient_bound_check(1.0, 0.2, 1, (np.array([1.0]), np.linspace(0, 40, 800)),
                                shift_factor=0.0)
    assert wide.constant > 1.25 * narrow.constant
