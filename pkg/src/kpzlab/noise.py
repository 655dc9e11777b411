"""Regularized space-time forcing: mollified noise, kick forces, white noise.

The mollified field is white noise convolved with a fixed smooth bump
``omega(t, x) = f(t) * gamma(|x|)`` of unit space-time mass whose support sits
inside the parabolic ball of radius 1/2 (|t| + |x|^2 <= 1/4), so the exact
covariance factorizes:

    <eta(t,x) eta(t',x')> = (f*f)(t-t') * (gamma*gamma)(|x-x'|)

and vanishes whenever the parabolic distance reaches 1.  The kick force is
piecewise constant on unit time intervals with a heat-smoothed spatial
covariance; the white kind is the bare lattice noise used as the
Edwards-Wilkinson reference driver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .arrays import SpaceTimeField
from .config import SimConfig
from .streams import stream

TIME_HALFWIDTH = 1.0 / 8.0          # f supported in |t| <= 1/8
SPACE_RADIUS = 1.0 / (2.0 * math.sqrt(2.0))   # gamma supported in |x| <= 1/(2 sqrt 2)
# so |t| + |x|^2 <= 1/8 + 1/8 = (1/2)^2: support inside the parabolic ball B(0, 1/2).


def bump(u):
    """C-infinity bump exp(-1/(1-u^2)) on |u| < 1, 0 outside."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    v = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - v * v))
    return out


def gauss_legendre(a: float, b: float, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^{d-1}."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass
class Mollifier:
    """Product bump f(t) * gamma(|x|), unit mass, parabolic support radius 1/2.

    The profile is isotropic in space and C-infinity; both factors are
    normalized numerically so the total space-time integral is 1.
    """

    d: int = 3
    time_halfwidth: float = TIME_HALFWIDTH
    space_radius: float = SPACE_RADIUS
    quad_nodes: int = 96
    _norm_t: float = field(init=False, repr=False, default=0.0)
    _norm_x: float = field(init=False, repr=False, default=0.0)
    _space_table: tuple = field(init=False, repr=False, default=None)

    def __post_init__(self):
        u, w = gauss_legendre(-1.0, 1.0, 256)
        self._norm_t = self.time_halfwidth * float(np.sum(w * bump(u)))
        u, w = gauss_legendre(0.0, 1.0, 256)
        self._norm_x = (self.space_radius ** self.d) * sphere_area(self.d) * \
            float(np.sum(w * bump(u) * u ** (self.d - 1)))

    # profile -----------------------------------------------------------

    def time_part(self, t):
        return bump(np.asarray(t, float) / self.time_halfwidth) / self._norm_t

    def space_part(self, r):
        return bump(np.asarray(r, float) / self.space_radius) / self._norm_x

    def profile(self, t, r):
        """omega(t, x) as a function of t and |x|."""
        return self.time_part(t) * self.space_part(r)

    def total_mass(self, n: int = 192) -> float:
        """Numerical space-time integral of the profile (should be 1)."""
        t, wt = gauss_legendre(-self.time_halfwidth, self.time_halfwidth, n)
        r, wr = gauss_legendre(0.0, self.space_radius, n)
        shell = sphere_area(self.d) * r ** (self.d - 1)
        return float(np.sum(wt * self.time_part(t)) * np.sum(wr * shell * self.space_part(r)))

    # exact covariance factors -------------------------------------------

    def time_autocov(self, tau):
        """(f*f)(tau), supported in |tau| <= 2 * time_halfwidth."""
        tau = np.atleast_1d(np.asarray(tau, float))
        out = np.zeros_like(tau)
        h = self.time_halfwidth
        for i, t in enumerate(np.abs(tau)):
            lo, hi = max(-h, t - h), min(h, t + h)
            if hi <= lo:
                continue
            s, w = gauss_legendre(lo, hi, self.quad_nodes)
            out[i] = float(np.sum(w * self.time_part(s) * self.time_part(t - s)))
        return out if out.shape != () else float(out)

    def _space_autocov_direct(self, r_values, n: int):
        """(gamma_d * gamma_d)(r) by radial quadrature (angle-reduced for d >= 2)."""
        R = self.space_radius
        r_values = np.atleast_1d(np.asarray(r_values, float))
        rho, w_rho = gauss_legendre(0.0, R, n)
        if self.d == 1:
            out = np.empty_like(r_values)
            for i, r in enumerate(r_values):
                # gamma is even; integrate over the two support branches of y
                s, w = gauss_legendre(-R, R, 2 * n)
                out[i] = float(np.sum(w * self.space_part(np.abs(s)) * self.space_part(np.abs(s - r))))
            return out
        th, w_th = gauss_legendre(0.0, math.pi, n)
        sin_pow = np.sin(th) ** (self.d - 2)
        pref = sphere_area(self.d - 1) if self.d > 2 else 2.0
        g_rho = self.space_part(rho) * rho ** (self.d - 1) * w_rho
        out = np.empty_like(r_values)
        cos_th = np.cos(th)
        for i, r in enumerate(r_values):
            dist = np.sqrt(np.maximum(rho[:, None] ** 2 + r * r - 2.0 * r * rho[:, None] * cos_th[None, :], 0.0))
            inner = (self.space_part(dist) * (sin_pow * w_th)[None, :]).sum(axis=1)
            out[i] = pref * float(np.sum(g_rho * inner))
        return out

    def space_autocov(self, r):
        """(gamma*gamma)(|x|); tabulated once, linearly interpolated."""
        if self._space_table is None:
            grid = np.linspace(0.0, 2.0 * self.space_radius, 4097)
            self._space_table = (grid, self._space_autocov_direct(grid, 72))
        grid, vals = self._space_table
        r = np.abs(np.asarray(r, float))
        out = np.interp(r, grid, vals, right=0.0)
        return out if out.shape != () else float(out)

    def covariance(self, dt, dx) -> float | np.ndarray:
        """(omega * omega)(dt, dx); dx may be a vector or a radius."""
        dxa = np.asarray(dx, float)
        r = np.linalg.norm(dxa, axis=-1) if dxa.ndim and dxa.shape[-1:] == (self.d,) and dxa.ndim >= 1 else np.abs(dxa)
        return self.time_autocov(dt) * self.space_autocov(r)

    def covariance_support(self) -> tuple[float, float]:
        """(time, space) extents outside which the covariance vanishes."""
        return 2.0 * self.time_halfwidth, 2.0 * self.space_radius


def covariance(mollifier: Mollifier, dt: float, dx) -> float:
    """Exact noise covariance (omega*omega)(dt, dx); symmetric in both signs."""
    return float(mollifier.covariance(dt, dx))


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


class NoiseField(SpaceTimeField):
    """A forcing realization on the lattice; values are unit-strength.

    Downstream users scale by sqrt(D0).  ``kind`` is one of the configured
    noise kinds; time interpolation is linear for mollified/white fields and
    piecewise constant for kick forces.
    """

    @property
    def time_interp(self) -> str:
        return "floor" if self.kind == "kick" else "linear"

    def eval_time(self, t: float) -> np.ndarray:
        return self.slice_at(t, self.time_interp)

    def time_shifted(self, shift: float) -> "NoiseField":
        """View of the forcing with time origin moved to ``shift``."""
        i = int(round(shift / self.dt))
        if abs(i * self.dt - shift) > 1e-9:
            raise ValueError("shift must align with the noise time grid")
        return NoiseField(values=self.values[i:], dt=self.dt, dx=self.dx, kind=self.kind,
                          seed=self.seed, t0=0.0, meta=dict(self.meta))

    def value_at(self, t: float, positions: np.ndarray) -> np.ndarray:
        """Multilinear space interpolation (periodic) at continuum positions.

        positions: array (n, d) in physical units.
        """
        sl = self.eval_time(t)
        return interp_periodic(sl, positions, self.dx)


def interp_periodic(grid: np.ndarray, positions: np.ndarray, dx: float) -> np.ndarray:
    """d-linear periodic interpolation of ``grid`` at physical positions."""
    d = grid.ndim
    L = grid.shape[0]
    s = np.asarray(positions, float) / dx
    base = np.floor(s).astype(np.int64)
    frac = s - base
    out = np.zeros(s.shape[0])
    for corner in range(1 << d):
        idx = []
        weight = np.ones(s.shape[0])
        for axis in range(d):
            bit = (corner >> axis) & 1
            idx.append((base[:, axis] + bit) % L)
            weight = weight * (frac[:, axis] if bit else (1.0 - frac[:, axis]))
        out += weight * grid[tuple(idx)]
    return out


class ResolutionError(ValueError):
    """Lattice too coarse to resolve the mollifier support."""


def _check_resolution(cfg: SimConfig, mollifier: Mollifier) -> None:
    if cfg.dx >= mollifier.space_radius or cfg.dt >= mollifier.time_halfwidth:
        raise ResolutionError(
            f"lattice (dx={cfg.dx}, dt={cfg.dt}) too coarse to resolve the mollifier "
            f"support (radius 1/2 parabolic: |t|<{mollifier.time_halfwidth}, "
            f"|x|<{mollifier.space_radius})")


def _kernel_taps(cfg: SimConfig, mollifier: Mollifier):
    """Discrete separable mollifier: time taps and periodic spatial kernel FFT.

    Both factors are renormalized to unit discrete mass so the sampled field
    keeps exactly unit total covariance on the lattice.
    """
    n_half = int(math.ceil(mollifier.time_halfwidth / cfg.dt)) - 1
    n_half = max(n_half, 1)
    taps = mollifier.time_part(np.arange(-n_half, n_half + 1) * cfg.dt) * cfg.dt
    taps = taps / taps.sum()

    axes = np.arange(cfg.L)
    axes = np.minimum(axes, cfg.L - axes) * cfg.dx    # periodic distance per axis
    grids = np.meshgrid(*([axes] * cfg.d), indexing="ij")
    r = np.sqrt(sum(g * g for g in grids))
    kernel = mollifier.space_part(r) * cfg.dx ** cfg.d
    kernel = kernel / kernel.sum()
    return taps, np.fft.rfftn(kernel)


def noise_slice_iter(cfg: SimConfig, rng: np.random.Generator, n_slices: int,
                     mollifier: Mollifier | None = None):
    """Yield forcing slices at times 0, dt, 2dt, ... (memory-bounded).

    The stream is consumed in a fixed order, so a given (seed, stream) always
    produces the same slices regardless of how many are taken.
    """
    shape = cfg.shape
    if cfg.noise == "white":
        scale = 1.0 / math.sqrt(cfg.dt * cfg.dx ** cfg.d)
        for _ in range(n_slices):
            yield scale * rng.standard_normal(shape)
        return

    if cfg.noise == "kick":
        sym = np.exp(-cfg.kick_smoothing * _lattice_symbol(cfg))
        scale = 1.0 / math.sqrt(cfg.dx ** cfg.d)
        current = None
        unit = -1
        for i in range(n_slices):
            u = int(math.floor(i * cfg.dt + 1e-12))
            while unit < u:
                w = scale * rng.standard_normal(shape)
                current = np.fft.irfftn(np.fft.rfftn(w) * sym, s=shape, axes=range(len(shape)))
                unit += 1
            yield current
        return

    # mollified: white noise convolved with the separable bump, streamed in time
    m = mollifier or Mollifier(d=cfg.d)
    _check_resolution(cfg, m)
    taps, kernel_hat = _kernel_taps(cfg, m)
    n_half = (len(taps) - 1) // 2
    scale = 1.0 / math.sqrt(cfg.dt * cfg.dx ** cfg.d)
    ring: list[np.ndarray] = []
    # spectral white slices for times (-n_half .. n_slices + n_half - 1)
    def white_hat():
        return np.fft.rfftn(scale * rng.standard_normal(shape))
    for _ in range(2 * n_half + 1):
        ring.append(white_hat())
    for i in range(n_slices):
        acc = taps[0] * ring[0]
        for a in range(1, len(taps)):
            acc = acc + taps[a] * ring[a]
        yield np.fft.irfftn(acc * kernel_hat, s=shape, axes=range(len(shape)))
        ring.pop(0)
        ring.append(white_hat())


def _lattice_symbol(cfg: SimConfig) -> np.ndarray:
    """Eigenvalues of minus the lattice Laplacian on the rfftn grid."""
    full = [2.0 * (1.0 - np.cos(2.0 * math.pi * np.arange(cfg.L) / cfg.L)) / cfg.dx ** 2
            for _ in range(cfg.d)]
    full[-1] = full[-1][: cfg.L // 2 + 1]
    grids = np.meshgrid(*full, indexing="ij")
    return sum(grids)


def sample_noise(cfg: SimConfig, rng_or_label=None, n_slices: int | None = None,
                 mollifier: Mollifier | None = None) -> NoiseField:
    """Materialize a forcing realization for the configured kind.

    ``rng_or_label`` is an explicit generator, an integer replica label
    (stream = (seed, "noise", replica)), or None for replica 0.  Deterministic
    given (seed, stream).
    """
    if isinstance(rng_or_label, np.random.Generator):
        rng = rng_or_label
    else:
        replica = 0 if rng_or_label is None else int(rng_or_label)
        rng = stream(cfg.seed, "noise", replica=replica)
    n = n_slices if n_slices is not None else cfg.n_steps + 1
    slices = list(noise_slice_iter(cfg, rng, n, mollifier=mollifier))
    return NoiseField(values=np.stack(slices), dt=cfg.dt, dx=cfg.dx, kind=cfg.noise,
                      seed=cfg.seed, meta={"L": cfg.L, "d": cfg.d, "side": cfg.side})


# --------------------------------------------------------------------------
# small/large-field boxes
# --------------------------------------------------------------------------


@dataclass
class BoxClassification:
    """Per unit space-time box: -1 for small field, k >= 0 for large field.

    Box (n, j1..jd) has label k iff 2^k < sup|eta| * sqrt(lam) <= 2^(k+1),
    and is small iff sup|eta| <= lam^(-1/2).
    """

    labels: np.ndarray            # shape (units_t, blocks, ..., blocks)
    lam: float
    sup_values: np.ndarray

    def fraction_at_least(self, k: int) -> float:
        return float(np.mean(self.labels >= k))

    def counts(self) -> dict[int, int]:
        vals, cnt = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, cnt)}


def classify_boxes(noise: NoiseField, lam: float) -> BoxClassification:
    """Label every unit box by its large-field size class."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    d = noise.d
    block = int(round(1.0 / noise.dx))
    if abs(block * noise.dx - 1.0) > 1e-9:
        raise ValueError("unit boxes need 1/dx to be an integer")
    L = noise.values.shape[1]
    if L % block:
        raise ValueError("lattice side must tile into unit boxes")
    per_unit = int(round(1.0 / noise.dt))
    n_units = noise.n_t // max(per_unit, 1)
    if n_units == 0:
        raise ValueError("field shorter than one unit time interval")
    blocks = L // block

    a = np.abs(noise.values[: n_units * per_unit])
    a = a.reshape((n_units, per_unit) + (L,) * d).max(axis=1)
    # collapse each spatial axis into blocks
    for axis in range(d):
        new_shape = a.shape[:1 + axis] + (blocks, block) + a.shape[2 + axis:]
        a = a.reshape(new_shape).max(axis=2 + axis)
    sup = a

    u = sup * math.sqrt(lam)
    labels = np.full(sup.shape, -1, dtype=np.int64)
    large = u > 1.0
    if large.any():
        k = np.ceil(np.log2(u[large])).astype(np.int64) - 1
        # float-safe adjustment to the half-open dyadic intervals
        v = u[large]
        k = np.where(v > 2.0 ** (k + 1), k + 1, k)
        k = np.where(v <= 2.0 ** k, k - 1, k)
        labels[large] = np.maximum(k, 0)
    return BoxClassification(labels=labels, lam=lam, sup_values=sup)


def covariance_table(mollifier: Mollifier, dts, rs) -> list[tuple[float, float, float]]:
    """Rows (dt, |dx|, value) for CSV export."""
    rows = []
    for dt in dts:
        for r in rs:
            rows.append((float(dt), float(r), covariance(mollifier, dt, r)))
    return rows


class BandlimitedKick:
    """Kick force as a lattice-independent continuum field.

    Per unit time interval, a smooth periodic field built from Fourier modes
    |m|_inf <= m_max with heat-smoothed amplitudes; it can be synthesized
    exactly on any lattice of the same physical side, so one realization can
    drive runs at several resolutions (used by the refinement tests).
    """

    def __init__(self, side: float, d: int, n_units: int, m_max: int = 3,
                 smoothing: float = 0.25, rng=None, seed: int = 0):
        rng = rng if rng is not None else stream(seed, "bandlimited-kick")
        self.side = side
        self.d = d
        self.m_max = m_max
        shape = (2 * m_max + 1,) * d
        k2 = self._mode_k2()
        amp = np.exp(-smoothing * k2) / side ** (d / 2.0)
        self.coeffs = []
        for _ in range(n_units):
            c = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * amp
            self.coeffs.append(c)

    def _mode_k2(self) -> np.ndarray:
        m = np.arange(-self.m_max, self.m_max + 1)
        grids = np.meshgrid(*([m] * self.d), indexing="ij")
        return sum(g * g for g in grids) * (2.0 * math.pi / self.side) ** 2

    def field_on_lattice(self, unit: int, L: int) -> np.ndarray:
        """Exact Fourier synthesis of interval ``unit`` on an L^d lattice."""
        if L < 2 * self.m_max + 1:
            raise ValueError("lattice too small for the mode content")
        spec = np.zeros((L,) * self.d, dtype=complex)
        m = self.m_max
        c = self.coeffs[unit]
        for idx in np.ndindex(*c.shape):
            modes = tuple((i - m) % L for i in idx)
            spec[modes] += c[idx]
            conj = tuple((-(i - m)) % L for i in idx)
            spec[conj] += np.conj(c[idx])
        return np.real(np.fft.ifftn(spec)) * L ** self.d / 2.0

    def slices(self, cfg: SimConfig, n_slices: int):
        """Forcing slices on cfg's lattice at times 0, dt, ..."""
        if abs(cfg.side - self.side) > 1e-9:
            raise ValueError("physical side mismatch")
        cache: dict[int, np.ndarray] = {}
        for i in range(n_slices):
            u = min(int(math.floor(i * cfg.dt + 1e-12)), len(self.coeffs) - 1)
            if u not in cache:
                cache[u] = self.field_on_lattice(u, cfg.L)
            yield cache[u]
