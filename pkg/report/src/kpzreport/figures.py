"""Figure rendering for the four documented experiment CSV schemas.

Rendering is a pure transformation: inputs are never modified and re-rendering
the same spec overwrites the output byte-comparably (fixed styles, no
timestamps).  Each figure is stamped with the producing manifest hash.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGURE_KINDS = ("collapse", "covariance", "powercount", "drift")


class SchemaMismatch(ValueError):
    """Input CSV does not carry the columns the figure kind needs."""

    def __init__(self, missing, path):
        super().__init__(f"{path}: missing column(s) {', '.join(missing)}")
        self.missing = list(missing)


@dataclass
class FigureSpec:
    inputs: list
    kind: str
    output: Path
    manifest: Path | None = None       # manifest.json of the producing run
    manifest_hash: str | None = None
    title: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")
        self.inputs = [Path(p) for p in np.atleast_1d(self.inputs)]
        self.output = Path(self.output)

    def resolve_hash(self) -> str:
        if self.manifest_hash:
            return self.manifest_hash
        if self.manifest is not None:
            payload = json.loads(Path(self.manifest).read_text())
            return payload.get("config_hash") or "unstamped"
        # fall back to a manifest next to the first input
        side = self.inputs[0].parent / "manifest.json"
        if side.exists():
            payload = json.loads(side.read_text())
            return payload.get("config_hash") or "unstamped"
        return "unstamped"


def read_table(path: Path, required: tuple) -> dict:
    """CSV to {column: float-or-str array}; raises SchemaMismatch on gaps."""
    with open(path) as fh:
        reader = csv.DictReader(fh)
        names = reader.fieldnames or []
        missing = [c for c in required if c not in names]
        if missing:
            raise SchemaMismatch(missing, path)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty table")
    out = {}
    for name in names:
        col = [r[name] for r in rows]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def _stamp(fig, spec: FigureSpec) -> None:
    fig.text(0.99, 0.01, f"manifest {spec.resolve_hash()}",
             ha="right", va="bottom", fontsize=7, color="0.45",
             family="monospace")


def _finish(fig, spec: FigureSpec) -> Path:
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    _stamp(fig, spec)
    fig.savefig(spec.output, dpi=spec.options.get("dpi", 150),
                metadata=_no_timestamp_metadata(spec.output))
    plt.close(fig)
    return spec.output


def _no_timestamp_metadata(path: Path):
    if path.suffix.lower() == ".png":
        return {"Software": "kpzreport"}
    if path.suffix.lower() in (".pdf", ".svg"):
        return {"CreationDate": None}
    return None


# --------------------------------------------------------------------------
# figure kinds
# --------------------------------------------------------------------------


def _fig_collapse(spec: FigureSpec):
    table = read_table(spec.inputs[0],
                       ("epsilon", "t1", "t2", "estimate", "stderr"))
    d = sum(1 for name in table if name.startswith("x1"))
    power = d / 2.0 - 1.0
    epsilons = sorted(set(table["epsilon"]), reverse=True)
    if not epsilons:
        raise ValueError("empty epsilon list")
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    curves = {}
    for eps in epsilons:
        mask = table["epsilon"] == eps
        order = np.argsort(table["t1"][mask] * eps * 10 + table["t2"][mask] * eps)
        x = np.arange(mask.sum())
        y = table["estimate"][mask][order] * eps ** (-power)
        err = table["stderr"][mask][order] * eps ** (-power)
        curves[eps] = y
        ax.errorbar(x, y, yerr=err, marker="o", capsize=2, lw=1.2,
                    label=f"eps = {eps:g}")
    gaps = [np.abs(curves[a] - curves[b]).max()
            for a, b in zip(epsilons, epsilons[1:])]
    if gaps:
        ax.annotate(f"max overlay gap {max(gaps):.3g}",
                    xy=(0.02, 0.04), xycoords="axes fraction", fontsize=8)
    ax.set_xlabel("probe pair index")
    ax.set_ylabel(r"$\epsilon^{-(d/2-1)}\,\langle h h\rangle_c$")
    ax.set_title(spec.title or "scaling collapse")
    ax.legend(fontsize=8)
    return fig


def _fig_covariance(spec: FigureSpec):
    table = read_table(spec.inputs[0],
                       ("t1", "t2", "sep_sites", "estimate", "stderr", "analytic"))
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    x = np.arange(len(table["t1"]))
    ax.errorbar(x, table["estimate"], yerr=table["stderr"], fmt="o",
                capsize=2, label="simulation")
    ax.plot(x, table["analytic"], "s--", color="k", mfc="none",
            label="lattice EW (analytic)")
    labels = [f"({a:g},{b:g},{int(m)})" for a, b, m in
              zip(table["t1"], table["t2"], table["sep_sites"])]
    ax.set_xticks(x, labels, rotation=30, fontsize=7)
    ax.set_xlabel("probe (t1, t2, separation sites)")
    ax.set_ylabel("covariance")
    ax.set_title(spec.title or "EW covariance vs analytic")
    ax.legend(fontsize=8)
    return fig


def _fig_powercount(spec: FigureSpec):
    table = read_table(spec.inputs[0], ("check", "j", "kappa", "measured", "bound"))
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    checks = sorted(set(zip(table["check"], table["kappa"])))
    for check, kappa in checks:
        mask = (table["check"] == check) & (table["kappa"] == kappa)
        js = table["j"][mask]
        if js.size == 0 or np.all(js == js[0]):
            continue
        order = np.argsort(js)
        ax.plot(js[order], np.abs(table["measured"][mask][order]), "o-",
                label=f"{check} {kappa}", lw=1.1, ms=4)
        bound = np.abs(table["bound"][mask][order])
        ax.plot(js[order], 2.0 * bound, ":", color="0.5", lw=0.9)
    ax.set_yscale("log")
    ax.set_xlabel("scale j")
    ax.set_ylabel("measured constant (dotted: 2x reference bound)")
    ax.set_title(spec.title or "power-counting constants by scale")
    ax.legend(fontsize=7)
    return fig


def _fig_drift(spec: FigureSpec):
    table = read_table(spec.inputs[0], ("variant", "drift", "stderr"))
    fig, ax = plt.subplots(figsize=(5.4, 4.0))
    x = np.arange(len(table["variant"]))
    vals = np.abs(table["drift"])
    ax.bar(x, vals, yerr=table["stderr"], width=0.55, capsize=4,
           color=["#b23", "#27b"][: len(x)])
    ax.set_xticks(x, list(table["variant"]))
    ax.set_ylabel("|mean height rate|")
    if len(vals) >= 2 and vals.min() > 0:
        ax.annotate(f"ratio {vals.max() / vals.min():.1f}x",
                    xy=(0.5, 0.9), xycoords="axes fraction", ha="center")
    ax.set_yscale("log")
    ax.set_title(spec.title or "velocity calibration")
    return fig


_RENDERERS = {"collapse": _fig_collapse, "covariance": _fig_covariance,
              "powercount": _fig_powercount, "drift": _fig_drift}


def render(spec: FigureSpec) -> Path:
    """Render the figure for ``spec``; returns the output path."""
    for p in spec.inputs:
        if not Path(p).exists():
            raise FileNotFoundError(p)
    fig = _RENDERERS[spec.kind](spec)
    return _finish(fig, spec)
