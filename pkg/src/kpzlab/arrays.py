"""Space-time fields and their single-file binary format.

A :class:`SpaceTimeField` is a real array on a ``(time, space...)`` grid with
the metadata needed to interpret it.  Serialization is one file: a magic
string, a little-endian uint32 header length, a JSON header (shape, dt, dx,
kind, seed, extras), then the raw C-order float64 payload.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json
from pathlib import Path

import numpy as np

MAGIC = b"KPZLABF1"


@dataclass
class SpaceTimeField:
    """Values on a (n_t, L, ..., L) grid; slice i sits at time t0 + i*dt."""

    values: np.ndarray
    dt: float
    dx: float
    kind: str = "field"
    seed: int = 0
    t0: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n_t(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.ndim - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_t)

    def check_positive(self) -> None:
        if not (self.values > 0).all():
            raise ValueError(f"{self.kind} field must be strictly positive")

    def slice_at(self, t: float, time_interp: str = "linear") -> np.ndarray:
        """Spatial slice at time t.

        ``linear`` interpolates between grid slices (mollified/smooth fields);
        ``floor`` returns the slice of the enclosing grid interval (kick
        forces, piecewise constant in time).
        """
        s = (t - self.t0) / self.dt
        if s < -1e-9 or s > self.n_t - 1 + 1e-9:
            raise ValueError(f"time {t} outside field range")
        s = min(max(s, 0.0), self.n_t - 1.0)
        if time_interp == "floor":
            return self.values[min(int(np.floor(s + 1e-12)), self.n_t - 1)]
        i = int(np.floor(s))
        if i >= self.n_t - 1:
            return self.values[-1]
        w = s - i
        if w < 1e-12:
            return self.values[i]
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]

    def save(self, path: str | Path) -> None:
        header = {
            "shape": list(self.values.shape),
            "dt": self.dt,
            "dx": self.dx,
            "kind": self.kind,
            "seed": self.seed,
            "t0": self.t0,
            "meta": self.meta,
            "dtype": "float64",
        }
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(np.uint32(len(blob)).tobytes())
            fh.write(blob)
            fh.write(np.ascontiguousarray(self.values, dtype=np.float64).tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "SpaceTimeField":
        with open(path, "rb") as fh:
            if fh.read(len(MAGIC)) != MAGIC:
                raise ValueError(f"{path}: not a kpzlab field file")
            n = int(np.frombuffer(fh.read(4), dtype=np.uint32)[0])
            header = json.loads(fh.read(n).decode())
            data = np.frombuffer(fh.read(), dtype=np.float64).reshape(header["shape"]).copy()
        return cls(values=data, dt=header["dt"], dx=header["dx"], kind=header["kind"],
                   seed=header["seed"], t0=header.get("t0", 0.0), meta=header.get("meta", {}))
