"""Monte Carlo evaluation of the Cole-Hopf field as a directed-polymer average.

For a frozen forcing realization eta, the Cole-Hopf field has the Wiener
representation

    w(T, a) = E_a[ exp( g0 * int_0^T (eta(T - t, B_t) - v0) dt )
                   * exp( (lam / nu0) h0(B_T) ) ]

over Brownian paths with per-component variance E[(B_t^i - a_i)^2] = 2 nu0 t.
Paths are discretized with the SPDE time step; the time integral uses the
trapezoid rule; the forcing is read off the lattice by multilinear
interpolation.  Averages over paths are quenched; annealing is an outer loop
over noise replicas.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .config import SimConfig
from .noise import NoiseField, sample_noise
from .streams import stream


@dataclass
class PolymerEstimate:
    value: float
    stderr: float
    n_paths: int
    T: float
    endpoint: tuple
    endpoint_b: tuple | None = None

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("polymer partition estimate must be positive")


def _check_horizon(noise: NoiseField, T: float) -> None:
    if T > (noise.n_t - 1) * noise.dt + 1e-9:
        raise ValueError(f"horizon T={T} exceeds noise field range")


def _path_weights(T: float, a, noise: NoiseField, cfg: SimConfig, n_paths: int,
                  rng, h0=None, bridge_to=None) -> np.ndarray:
    """exp-weights of n_paths discretized Brownian (or bridge) paths."""
    n = int(round(T / cfg.dt))
    dt = T / n
    a = np.asarray(a, dtype=float).reshape(1, cfg.d)
    sig = math.sqrt(2.0 * cfg.nu0 * dt)

    if bridge_to is None:
        pos = np.repeat(a, n_paths, axis=0)
        integral = np.zeros(n_paths)
        f_prev = noise.value_at(T, pos) - cfg.v0
        for k in range(1, n + 1):
            pos = pos + sig * rng.standard_normal((n_paths, cfg.d))
            f_cur = noise.value_at(T - k * dt, pos) - cfg.v0
            integral += 0.5 * dt * (f_prev + f_cur)
            f_prev = f_cur
        final_pos = pos
    else:
        b = np.asarray(bridge_to, dtype=float).reshape(1, cfg.d)
        incs = sig * rng.standard_normal((n, n_paths, cfg.d))
        walk = np.cumsum(incs, axis=0)
        t_frac = (np.arange(1, n + 1) * dt / T)[:, None, None]
        path = a[None] + t_frac * (b - a)[None] + (walk - t_frac * walk[-1][None])
        integral = np.zeros(n_paths)
        f_prev = noise.value_at(T, np.repeat(a, n_paths, axis=0)) - cfg.v0
        for k in range(1, n + 1):
            f_cur = noise.value_at(T - k * dt, path[k - 1]) - cfg.v0
            integral += 0.5 * dt * (f_prev + f_cur)
            f_prev = f_cur
        final_pos = path[-1]

    weights = np.exp(cfg.g0 * integral)
    if h0 is not None and bridge_to is None:
        weights = weights * np.exp((cfg.lam / cfg.nu0) * _eval_h0(h0, final_pos))
    return weights


def _eval_h0(h0, pos: np.ndarray) -> np.ndarray:
    if callable(h0):
        return np.asarray(h0(*(pos[:, i] for i in range(pos.shape[1]))), dtype=float)
    raise TypeError("h0 must be a callable of the coordinates")


def estimate_w(T: float, a, noise: NoiseField, cfg: SimConfig, n_paths: int,
               rng=None, h0=None) -> PolymerEstimate:
    """Unbiased quenched estimate of w(T, a) for the frozen forcing."""
    _check_horizon(noise, T)
    gen = rng if rng is not None else stream(cfg.seed, "polymer-paths")
    w = _path_weights(T, a, noise, cfg, n_paths, gen, h0=h0)
    return PolymerEstimate(value=float(w.mean()),
                           stderr=float(w.std(ddof=1) / math.sqrt(n_paths)),
                           n_paths=n_paths, T=T, endpoint=tuple(np.atleast_1d(a)))


def estimate_w_bridge(T: float, a, b, noise: NoiseField, cfg: SimConfig,
                      n_paths: int, rng=None) -> PolymerEstimate:
    """Bridge-conditioned kernel w_T(a, b | eta - v0), endpoints pinned."""
    _check_horizon(noise, T)
    gen = rng if rng is not None else stream(cfg.seed, "polymer-bridge")
    w = _path_weights(T, a, noise, cfg, n_paths, gen, bridge_to=b)
    return PolymerEstimate(value=float(w.mean()),
                           stderr=float(w.std(ddof=1) / math.sqrt(n_paths)),
                           n_paths=n_paths, T=T, endpoint=tuple(np.atleast_1d(a)),
                           endpoint_b=tuple(np.atleast_1d(b)))


def estimate_v0_tilde(cfg: SimConfig, n_paths: int, n_noise: int,
                      rng_seed_label: str = "v0tilde") -> tuple[float, float]:
    """Velocity counterterm of the kick force:

        v0~ = (1/g0) log < E_0[ exp(g0 * int_0^1 eta(0, B_t) dt) ] >

    averaged over paths (inner) and kick realizations (outer).  Returns
    (value, stderr); stderr propagates the outer average through the log.
    """
    if cfg.noise != "kick":
        raise ValueError("v0~ is defined for the kick force kind")
    if cfg.g0 == 0.0:
        return 0.0, 0.0
    n_slices = int(round(1.0 / cfg.dt)) + 1
    origin = np.zeros(cfg.d)
    samples = np.empty(n_noise)
    for r in range(n_noise):
        gen_noise = stream(cfg.seed, rng_seed_label, "noise", replica=r)
        field = sample_noise(cfg, gen_noise, n_slices=n_slices)
        gen_paths = stream(cfg.seed, rng_seed_label, "paths", replica=r)
        w = _path_weights(1.0, origin, field, cfg.with_(v0=0.0), n_paths, gen_paths)
        samples[r] = w.mean()
    mean = samples.mean()
    se = samples.std(ddof=1) / math.sqrt(n_noise)
    return float(math.log(mean) / cfg.g0), float(se / mean / cfg.g0)


@dataclass
class FeketeRow:
    T: float
    mean_h: float
    stderr: float

    @property
    def rate(self) -> float:
        return self.mean_h / self.T


@dataclass
class FeketeReport:
    rows: list
    superadditivity: list      # (T, Tp, gap, z) with gap = <h_{T+Tp}> - <h_T> - <h_Tp>
    nonnegative_z: list        # per horizon: mean / stderr
    v0_tilde: float | None = None
    v0_tilde_stderr: float | None = None

    def violations(self, z_crit: float = 3.0) -> list[str]:
        out = []
        for T, Tp, gap, z in self.superadditivity:
            if z < -z_crit:
                out.append(f"superadditivity violated at ({T},{Tp}): z={z:.2f}")
        for row, z in zip(self.rows, self.nonnegative_z):
            if z < -z_crit:
                out.append(f"<h_T> < 0 at T={row.T}: z={z:.2f}")
        return out


def fekete_diagnostics(cfg: SimConfig, horizons, replicas: int,
                       with_v0_tilde: bool = False, n_paths: int = 2000) -> FeketeReport:
    """Growth-rate table <h(T, x)> / T at zero bare velocity.

    Each replica runs one trajectory to max(horizons) with snapshots at every
    horizon; means combine the spatial average (translation invariance) with
    the replica scatter for error bars.
    """
    from .spde import run

    horizons = sorted(float(T) for T in horizons)
    cfg0 = cfg.with_(v0=0.0, T=horizons[-1])
    means = np.empty((replicas, len(horizons)))
    for r in range(replicas):
        gen = stream(cfg.seed, "fekete", replica=r)
        traj = run(cfg0, "kpz", rng=gen, snapshot_times=horizons)
        for i, T in enumerate(horizons):
            means[r, i] = traj.at(T).mean()
    mu = means.mean(axis=0)
    se = means.std(axis=0, ddof=1) / math.sqrt(replicas)
    rows = [FeketeRow(T, float(m), float(s)) for T, m, s in zip(horizons, mu, se)]

    supcheck = []
    idx = {T: i for i, T in enumerate(horizons)}
    for i, T in enumerate(horizons):
        for j, Tp in enumerate(horizons):
            tot = T + Tp
            if j < i or tot not in idx:
                continue
            k = idx[tot]
            # correlated replicas: use per-replica gap scatter
            gaps = means[:, k] - means[:, i] - means[:, j]
            gap = float(gaps.mean())
            gap_se = float(gaps.std(ddof=1) / math.sqrt(replicas))
            supcheck.append((T, Tp, gap, gap / gap_se if gap_se > 0 else math.inf))

    nn_z = [float(m / s) if s > 0 else math.inf for m, s in zip(mu, se)]
    report = FeketeReport(rows=rows, superadditivity=supcheck, nonnegative_z=nn_z)
    if with_v0_tilde and cfg.noise == "kick":
        report.v0_tilde, report.v0_tilde_stderr = estimate_v0_tilde(cfg, n_paths, replicas)
    return report
