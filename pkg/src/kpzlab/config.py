"""Simulation configuration: parameters, validation, and the key=value file format.

The config file is a flat, human-editable list of ``key = value`` lines
(``#`` starts a comment).  Values are parsed as int, float, bool, or string.
CLI overrides use the same ``key=value`` syntax.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
import json
import math

NOISE_KINDS = ("mollified", "kick", "white")


class SchemaError(ValueError):
    """Configuration rejected; ``keys`` names the offending entries."""

    def __init__(self, message: str, keys: list[str]):
        super().__init__(message)
        self.keys = list(keys)


@dataclass(frozen=True)
class SimConfig:
    """Physical and numerical parameters of a lattice run.

    Attributes
    ----------
    d : spatial dimension (1..4)
    L : lattice sites per axis
    dx : lattice spacing; unit boxes then hold (1/dx)^d sites per time unit
    dt : time step; defaults to the explicit-Euler stability bound dx^2/(2 d nu0)
    T : time horizon
    nu0 : bare viscosity
    D0 : bare noise strength (0 allowed for deterministic runs)
    lam : nonlinear coupling (lambda >= 0)
    v0 : bare interface velocity subtracted from the forcing
    seed : RNG seed; all streams derive from it
    noise : forcing kind, one of "mollified", "kick", "white"
    kick_smoothing : heat-smoothing time c of the kick force covariance
    """

    d: int = 3
    L: int = 16
    dx: float = 1.0
    dt: float | None = None
    T: float = 4.0
    nu0: float = 1.0
    D0: float = 1.0
    lam: float = 0.2
    v0: float = 0.0
    seed: int = 0
    noise: str = "mollified"
    kick_smoothing: float = 0.25

    def __post_init__(self):
        if self.dt is None:
            object.__setattr__(self, "dt", self.stability_limit())
        self.validate()

    def stability_limit(self) -> float:
        return self.dx ** 2 / (2.0 * self.d * self.nu0)

    @property
    def g0(self) -> float:
        """Bare coupling (lam / nu0) * sqrt(D0)."""
        return (self.lam / self.nu0) * math.sqrt(self.D0)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.L,) * self.d

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def side(self) -> float:
        """Physical torus side L * dx."""
        return self.L * self.dx

    def validate(self) -> None:
        bad: list[str] = []
        if not (1 <= self.d <= 4):
            bad.append("d")
        if self.L < 2:
            bad.append("L")
        if self.dx <= 0:
            bad.append("dx")
        if self.nu0 <= 0:
            bad.append("nu0")
        if self.D0 < 0:
            bad.append("D0")
        if self.lam < 0:
            bad.append("lam")
        if self.noise not in NOISE_KINDS:
            bad.append("noise")
        if self.kick_smoothing < 0:
            bad.append("kick_smoothing")
        if self.dt is not None and (self.dt <= 0 or self.dt > self.stability_limit() * (1 + 1e-12)):
            bad.append("dt")
        if self.T <= 0:
            bad.append("T")
        if bad:
            raise SchemaError(f"invalid config values for keys: {', '.join(bad)}", bad)

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest_text(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# Keys a config file must define explicitly (no silent physics defaults on disk).
REQUIRED_KEYS = ("d", "L", "T", "nu0", "D0", "lam")

_BOOL = {"true": True, "false": False}


def _parse_value(text: str):
    t = text.strip()
    if t.lower() in _BOOL:
        return _BOOL[t.lower()]
    for cast in (int, float):
        try:
            return cast(t)
        except ValueError:
            pass
    return t


def parse_kv_text(text: str) -> dict:
    """Parse ``key = value`` lines; '#' comments and blank lines ignored."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"line {lineno}: expected 'key = value', got {raw!r}", [])
        key, value = line.split("=", 1)
        out[key.strip()] = _parse_value(value)
    return out


def load_config(path: str | Path, overrides: dict | None = None) -> SimConfig:
    """Load a config file, apply overrides, check required keys and types."""
    entries = parse_kv_text(Path(path).read_text())
    if overrides:
        entries.update(overrides)
    missing = [k for k in REQUIRED_KEYS if k not in entries]
    if missing:
        raise SchemaError(f"missing required keys: {', '.join(missing)}", missing)
    known = set(SimConfig.__dataclass_fields__)
    unknown = [k for k in entries if k not in known]
    if unknown:
        raise SchemaError(f"unknown config keys: {', '.join(unknown)}", unknown)
    return SimConfig(**entries)
