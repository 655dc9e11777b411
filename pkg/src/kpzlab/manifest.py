"""Run manifests, deterministic CSV/JSON writers, and replay.

Every run writes its outputs plus one ``manifest.json`` recording the config
snapshot, invoked operation, seed, code version, and a sha256 digest per
output file.  Outputs carry no timestamps, so replaying a manifest must
reproduce byte-identical files; the manifest's own wall_time field is the one
excluded quantity.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path

from . import __version__


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(cfg) -> str:
    return hashlib.sha256(cfg.digest_text().encode()).hexdigest()[:12]


def format_value(v) -> str:
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def write_csv(path: str | Path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")
    return path


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_coerce)
        fh.write("\n")
    return path


def _coerce(obj):
    try:
        import numpy as np
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
    except ImportError:
        pass
    raise TypeError(f"not JSON serializable: {type(obj)}")


def default_outdir() -> Path:
    return Path(os.environ.get("KPZLAB_OUTDIR", "outputs"))


class ManifestWriter:
    """Collects output files for one run and finalizes the manifest."""

    def __init__(self, outdir: str | Path, subcommand: str, cfg, seed: int,
                 extra: dict | None = None):
        self.dir = Path(outdir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.subcommand = subcommand
        self.cfg = cfg
        self.seed = seed
        self.extra = extra or {}
        self.outputs: list[Path] = []
        self._t0 = time.time()

    def path(self, name: str) -> Path:
        return self.dir / name

    def add(self, path: Path) -> Path:
        self.outputs.append(Path(path))
        return Path(path)

    def csv(self, name: str, header, rows) -> Path:
        return self.add(write_csv(self.path(name), header, rows))

    def json(self, name: str, payload: dict) -> Path:
        return self.add(write_json(self.path(name), payload))

    def finalize(self) -> Path:
        manifest = {
            "subcommand": self.subcommand,
            "config": self.cfg.to_dict() if self.cfg is not None else None,
            "config_hash": config_hash(self.cfg) if self.cfg is not None else None,
            "seed": self.seed,
            "version": __version__,
            "outputs": {p.name: sha256_file(p) for p in self.outputs},
            "wall_time": time.time() - self._t0,
            "extra": self.extra,
        }
        return write_json(self.dir / "manifest.json", manifest)


def load_manifest(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def verify_outputs(manifest: dict, outdir: str | Path) -> dict:
    """Digest comparison for every output named by the manifest."""
    outdir = Path(outdir)
    result = {}
    for name, digest in manifest["outputs"].items():
        path = outdir / name
        result[name] = path.exists() and sha256_file(path) == digest
    return result
