"""Explicit finite-difference steppers for KPZ, Edwards-Wilkinson, and the
Cole-Hopf stochastic heat equation on a periodic lattice.

One KPZ step advances

    h <- h + dt * ( nu0 * Lap h + lam * |grad h|^2 + sqrt(D0) * (eta - v0) )

with the standard lattice Laplacian and centered gradients.  The EW step is
the same update at lam = 0 and v = 0 (shared code path, so the lam = 0
reduction is exact bit for bit).  The SHE step keeps w positive by applying
the multiplicative noise as an exponential factor after a heat half of the
update:

    w <- exp(dt * g0 * (eta - v0)) * (w + dt * nu0 * Lap w).
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Callable, Iterable

import numpy as np

from .config import SimConfig
from .noise import NoiseField, noise_slice_iter


class StepInstabilityError(RuntimeError):
    """A step produced non-finite values (blow-up of the explicit scheme)."""


def _neighbor_sums(h: np.ndarray):
    """Per-axis (forward + backward) sums and centered differences."""
    sums, cdiffs = [], []
    for axis in range(h.ndim):
        fwd = np.roll(h, -1, axis=axis)
        bwd = np.roll(h, 1, axis=axis)
        sums.append(fwd + bwd)
        cdiffs.append(fwd - bwd)
    return sums, cdiffs


def laplacian(h: np.ndarray, dx: float) -> np.ndarray:
    sums, _ = _neighbor_sums(h)
    out = sums[0].copy()
    for s in sums[1:]:
        out += s
    out -= 2.0 * h.ndim * h
    out /= dx * dx
    return out


def grad_sq(h: np.ndarray, dx: float) -> np.ndarray:
    """|grad h|^2 with centered differences."""
    _, cdiffs = _neighbor_sums(h)
    out = np.zeros_like(h)
    for c in cdiffs:
        out += (c / (2.0 * dx)) ** 2
    return out


def _kpz_core(h, eta, cfg: SimConfig, lam: float, v: float) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        sums, cdiffs = _neighbor_sums(h)
        lap = sums[0].copy()
        for s in sums[1:]:
            lap += s
        lap -= 2.0 * h.ndim * h
        lap /= cfg.dx * cfg.dx
        drift = cfg.nu0 * lap
        if lam != 0.0:
            gs = np.zeros_like(h)
            for c in cdiffs:
                gs += (c / (2.0 * cfg.dx)) ** 2
            drift += lam * gs
        forcing = math.sqrt(cfg.D0) * (eta - v) if v != 0.0 else math.sqrt(cfg.D0) * eta
        out = h + cfg.dt * (drift + forcing)
    if not np.isfinite(out).all():
        raise StepInstabilityError("non-finite height after step (reduce dt or lam)")
    return out


def step_kpz(h: np.ndarray, eta: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """One explicit Euler step of the KPZ equation."""
    return _kpz_core(h, eta, cfg, cfg.lam, cfg.v0)


def step_ew(h: np.ndarray, eta: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """One Edwards-Wilkinson step: the KPZ update without the nonlinearity, v = 0."""
    return _kpz_core(h, eta, cfg, 0.0, 0.0)


def step_she(w: np.ndarray, eta: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """One positivity-preserving step of the Cole-Hopf heat equation."""
    if not (w > 0).all():
        raise ValueError("SHE state must be strictly positive")
    heat = w + cfg.dt * cfg.nu0 * laplacian(w, cfg.dx)
    out = np.exp(cfg.dt * cfg.g0 * (eta - cfg.v0)) * heat
    if not np.isfinite(out).all():
        raise StepInstabilityError("non-finite Cole-Hopf field after step")
    return out


def cole_hopf(h: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """w = exp((lam / nu0) h)."""
    return np.exp((cfg.lam / cfg.nu0) * h)


def inverse_cole_hopf(w: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """h = (nu0 / lam) log w; requires lam > 0 and w > 0."""
    if cfg.lam <= 0:
        raise ValueError("inverse Cole-Hopf needs lam > 0")
    if not (w > 0).all():
        raise ValueError("inverse Cole-Hopf needs a strictly positive field")
    return (cfg.nu0 / cfg.lam) * np.log(w)


_STEPPERS = {"kpz": step_kpz, "ew": step_ew, "she": step_she}


@dataclass
class Trajectory:
    """Snapshots of a run at requested times (always includes the final one)."""

    cfg: SimConfig
    equation: str
    times: list
    snapshots: list

    def at(self, t: float) -> np.ndarray:
        for ti, s in zip(self.times, self.snapshots):
            if abs(ti - t) < 1e-9:
                return s
        raise KeyError(f"no snapshot at t={t}")

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]


def run(cfg: SimConfig, equation: str = "kpz",
        noise: NoiseField | Iterable[np.ndarray] | None = None,
        rng=None, h0: np.ndarray | Callable | None = None,
        snapshot_times: Iterable[float] = ()) -> Trajectory:
    """Advance one trajectory to cfg.T, reading forcing slice by slice.

    ``noise`` may be a materialized NoiseField (interpolated at step times,
    so the same realization can drive runs at different dt) or any iterable
    of slices aligned with the step grid; None streams a fresh realization
    from (seed, "noise", 0) or from ``rng``.
    """
    if equation not in _STEPPERS:
        raise ValueError(f"unknown equation {equation!r}")
    stepper = _STEPPERS[equation]
    n_steps = cfg.n_steps

    state = _initial_state(cfg, equation, h0)
    want = sorted(set(float(t) for t in snapshot_times) | {cfg.T})
    times, snaps = [], []
    if want and abs(want[0]) < 1e-12:
        times.append(0.0)
        snaps.append(state.copy())
        want = want[1:]

    if noise is None:
        from .streams import stream as _stream
        gen = rng if rng is not None else _stream(cfg.seed, "noise", replica=0)
        slices = noise_slice_iter(cfg, gen, n_steps)
    elif isinstance(noise, NoiseField):
        slices = (noise.eval_time(i * cfg.dt) for i in range(n_steps))
    else:
        slices = iter(noise)

    for i in range(n_steps):
        state = stepper(state, next(slices), cfg)
        t = (i + 1) * cfg.dt
        while want and want[0] <= t + 1e-9:
            times.append(want.pop(0))
            snaps.append(state.copy())
    if not times or abs(times[-1] - cfg.T) > 1e-9:
        times.append(cfg.T)
        snaps.append(state.copy())
    return Trajectory(cfg=cfg, equation=equation, times=times, snapshots=snaps)


def _initial_state(cfg: SimConfig, equation: str, h0) -> np.ndarray:
    if callable(h0):
        coords = np.meshgrid(*[np.arange(cfg.L) * cfg.dx] * cfg.d, indexing="ij")
        init = np.asarray(h0(*coords), dtype=float)
    elif h0 is not None:
        init = np.array(h0, dtype=float).reshape(cfg.shape)
    else:
        init = np.zeros(cfg.shape)
    if equation == "she":
        w0 = cole_hopf(init, cfg) if h0 is not None else np.ones(cfg.shape)
        if not (w0 > 0).all():
            raise ValueError("initial Cole-Hopf field must be positive")
        return w0
    return init


def default_bump_h0(cfg: SimConfig, amplitude: float = 1.0, width: float | None = None):
    """Documented smooth bump initial condition centered on the torus."""
    width = width or cfg.side / 8.0
    center = cfg.side / 2.0

    def h0(*coords):
        r2 = sum((c - center) ** 2 for c in coords)
        return amplitude * np.exp(-r2 / (2.0 * width ** 2))

    return h0
