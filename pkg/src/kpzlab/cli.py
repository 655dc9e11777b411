"""Command-line front door: configuration, orchestration, persistence.

Subcommands: simulate, polymer, renorm, powercount, cluster-selftest,
scaling, report-data, replay.  A run reads a key=value config file, applies
--set overrides, executes, and writes CSV/JSON/binary outputs plus one
manifest; (config, seed) fully determine the outputs regardless of
--threads.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .arrays import SpaceTimeField
from .config import SimConfig, SchemaError, load_config, parse_kv_text
from .manifest import (ManifestWriter, config_hash, default_outdir, load_manifest,
                       verify_outputs, write_csv)
from .streams import stream


def _add_common(p):
    p.add_argument("--config", type=Path, help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (repeatable)")
    p.add_argument("--outdir", type=Path, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--replicas", type=int, default=8)
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads; never changes results")


def _config_from_args(args) -> SimConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise SchemaError(f"--set expects KEY=VALUE, got {item!r}", [])
        key, value = item.split("=", 1)
        overrides[key.strip()] = parse_kv_text(f"x = {value}")["x"]
    if args.config is not None:
        cfg = load_config(args.config, overrides)
    else:
        cfg = SimConfig(**overrides)
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    return cfg


def _outdir(args, cfg, name: str) -> Path:
    base = args.outdir if args.outdir is not None else default_outdir()
    tag = config_hash(cfg) if cfg is not None else "global"
    return Path(base) / f"{name}-{tag}-s{getattr(cfg, 'seed', 0)}"


def _capture_args(args) -> dict:
    out = {}
    for key, value in vars(args).items():
        if key in ("fn", "config", "set", "outdir", "manifest"):
            continue
        out[key] = str(value) if isinstance(value, Path) else value
    return out


def _writer(args, cfg, name: str) -> ManifestWriter:
    return ManifestWriter(_outdir(args, cfg, name), name, cfg,
                          getattr(cfg, "seed", 0),
                          extra={"cli_args": _capture_args(args)})


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    from .spde import run

    cfg = _config_from_args(args)
    man = _writer(args, cfg, "simulate")
    cadence = args.cadence if args.cadence else cfg.T
    times = [round(k * cadence, 10) for k in range(1, int(cfg.T / cadence) + 1)]
    rows = []
    for r in range(args.replicas):
        gen = stream(cfg.seed, "noise", replica=r)
        traj = run(cfg, args.equation, rng=gen, snapshot_times=times)
        snap = SpaceTimeField(values=np.stack(traj.snapshots), dt=cadence, dx=cfg.dx,
                              kind=f"{args.equation}-trajectory", seed=cfg.seed,
                              t0=traj.times[0], meta={"replica": r, "times": traj.times,
                                                      "side": cfg.side})
        path = man.path(f"trajectory-r{r}.field")
        snap.save(path)
        man.add(path)
        for t, s in zip(traj.times, traj.snapshots):
            rows.append((r, t, float(s.mean()), float(s.var())))
    man.csv("summary.csv", ["replica", "t", "mean", "variance"], rows)
    man.finalize()
    print(f"simulate: wrote {len(man.outputs)} files to {man.dir}")
    return 0


def cmd_polymer(args) -> int:
    from .noise import sample_noise
    from .polymer import estimate_w, estimate_v0_tilde

    cfg = _config_from_args(args)
    man = _writer(args, cfg, "polymer")
    horizons = [float(t) for t in args.horizons.split(",")]
    noise = sample_noise(cfg, 0, n_slices=int(round(max(horizons) / cfg.dt)) + 1)
    a = (cfg.side / 2.0,) * cfg.d
    rows = []
    for T in horizons:
        est = estimate_w(T, a, noise, cfg, n_paths=args.paths,
                         rng=stream(cfg.seed, "polymer", T=T))
        rows.append((T, *a, est.value, est.stderr, est.n_paths))
    man.csv("polymer.csv", ["T"] + [f"a{i+1}" for i in range(cfg.d)]
            + ["value", "stderr", "n_paths"], rows)
    extra = {}
    if cfg.noise == "kick" and args.v0tilde:
        v, se = estimate_v0_tilde(cfg, n_paths=args.paths, n_noise=args.replicas)
        extra = {"v0_tilde": v, "v0_tilde_stderr": se}
        man.json("v0_tilde.json", extra)
    man.extra.update(extra)
    man.finalize()
    print(f"polymer: wrote {man.dir}")
    return 0


def cmd_renorm(args) -> int:
    from .multiscale import build_partition
    from .renorm import compute_constants

    cfg = _config_from_args(args)
    man = _writer(args, cfg, "renorm")
    part = build_partition(args.jmax)
    consts = compute_constants(cfg, part)
    payload = consts.to_dict()
    payload["provenance"] = {"config_hash": config_hash(cfg),
                             "quadrature_orders": {"time": 48, "radial": 96,
                                                   "sigma_panels": 20},
                             "jmax": args.jmax}
    man.json("renorm.json", payload)
    man.finalize()
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_powercount(args) -> int:
    from .multiscale import build_partition
    from .powercount import (check_pw1, check_pw1_divergent, check_pw2,
                             check_single_scale, check_two_scale)

    cfg = _config_from_args(args)
    man = _writer(args, cfg, "powercount")
    part = build_partition(args.jmax)
    rows = []
    js = list(range(1, args.jmax + 1))
    singles = [check_single_scale(part, j, kappa=(0, 0), nu=cfg.nu0, d=cfg.d) for j in js]
    ref = singles[0]
    for rep in singles:
        rows.append(("single_scale_mass", rep.j, "-", rep.mass_constant,
                     ref.mass_constant, _pf(rep.mass_constant, ref.mass_constant)))
        rows.append(("single_scale_sup", rep.j, "(0,0)", rep.sup_constant,
                     ref.sup_constant, _pf(rep.sup_constant, ref.sup_constant)))
    twos = [check_two_scale(part, j, 1, 1, nu=cfg.nu0, d=cfg.d) for j in js]
    for rep in twos:
        rows.append(("two_scale_sup", rep.j, "(1,1)", rep.sup_constant,
                     twos[0].sup_constant, _pf(rep.sup_constant, twos[0].sup_constant)))
    pw1 = check_pw1(part, js, nu=cfg.nu0, d=cfg.d)
    base = {lbl: next(r.constant for r in pw1 if r.j == 1 and r.kappa_label == lbl)
            for lbl in ("grad3", "dt_grad")}
    for rep in pw1:
        rows.append(("pw1", rep.j, rep.kappa_label, rep.constant,
                     base[rep.kappa_label], _pf(rep.constant, base[rep.kappa_label])))
    for kappa in (0, 1, 2):
        rep = check_pw1_divergent(kappa, nu=cfg.nu0, d=cfg.d)
        value = rep.fitted_exponent if rep.fitted_exponent is not None else rep.log_r2
        target = 1.0 - kappa / 2.0 if kappa < 2 else 0.99
        ok = (abs(value - target) <= 0.1) if kappa < 2 else (value > 0.99)
        rows.append(("pw1_divergent", 0, f"|k|={kappa}", value, target,
                     "pass" if ok else "fail"))
    for d in (3, 4, 5):
        worst = min(check_pw2(d, j1, j2)[1] for j1 in range(1, 13)
                    for j2 in range(j1, 13))
        rows.append(("pw2_margin", 0, f"d={d}", worst, 0.0,
                     "pass" if worst >= 0 else "fail"))
    man.csv("powercount.csv",
            ["check", "j", "kappa", "measured", "bound", "status"], rows)
    man.finalize()
    print(f"powercount: wrote {man.dir}")
    return 0


def _pf(value: float, reference: float, factor: float = 2.0) -> str:
    lo, hi = sorted((abs(value), abs(reference)))
    return "pass" if hi <= factor * max(lo, 1e-300) else "fail"


def cmd_cluster_selftest(args) -> int:
    from fractions import Fraction
    from . import cluster as cl

    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    failures = []

    for trial in range(20):
        obj = cl.ObjectSet(int(rng.integers(2, 5)))
        F = cl.random_pair_polynomial(obj, rng, degree=3)
        if cl.bkar_sum(F, obj) != F.eval_at_one():
            failures.append(f"bkar trial {trial}")
    for trial in range(12):
        n = int(rng.integers(2, 5))
        types = tuple(int(t) for t in rng.choice([1, 2], size=n, p=[0.7, 0.3]))
        if 1 not in types:
            types = (1,) + types[1:]
        obj = cl.ObjectSet(n, types=types)
        F = cl.random_pair_polynomial(obj, rng, degree=3)
        if cl.bkar2_sum(F, obj) != F.eval_at_one():
            failures.append(f"bkar2 trial {trial}")
    sysm = cl.mayer_weaken([({"a", "b"}, {"a"}), ({"b", "c"}, {"c"})])
    if cl.bkar2_sum(sysm.as_polynomial(), sysm.object_set()) != sysm.nonoverlap_at_one():
        failures.append("mayer reconstruction")
    C1 = np.array([[0, 0.25, 0], [0.25, 0, 0.125], [0, 0.125, 0]])
    F = (cl.Poly.variable(0) * cl.Poly.variable(1)
         + cl.Poly.variable(2) * cl.Poly.variable(2) * cl.Poly.variable(0) * cl.Poly.variable(1))
    rep = cl.gaussian_ds_identity_check(np.eye(3), C1, F)
    if not rep.exact:
        failures.append("gaussian ds identity")
    for n in range(1, 6):
        coeffs = cl.log_derivative_coeffs(n)
        for part, c in coeffs.items():
            m = len(part)
            if c != (-1) ** (m - 1) * math.factorial(m - 1):
                failures.append(f"log coeff n={n}")
                break

    outdir = args.outdir if args.outdir is not None else default_outdir()
    man = ManifestWriter(Path(outdir) / "cluster-selftest", "cluster-selftest",
                         None, args.seed or 0,
                         extra={"cli_args": _capture_args(args)})
    dump = {
        "forests_n3_complete": [list(map(list, f)) for f in
                                cl.enumerate_forests(cl.ObjectSet(3))],
        "log_derivative_coeffs_n4": {str(k): v for k, v in
                                     cl.log_derivative_coeffs(4).items()},
        "failures": failures,
    }
    man.json("selftest.json", dump)
    man.finalize()
    if failures:
        print("cluster-selftest FAILED: " + "; ".join(failures), file=sys.stderr)
        return 1
    print("cluster-selftest: all identities hold")
    return 0


def cmd_scaling(args) -> int:
    from .multiscale import build_partition
    from .renorm import delta_nu_leading, d_eff_ratio
    from .scaling import ProbePair, scaling_collapse, fit_effective_constants

    cfg = _config_from_args(args)
    man = _writer(args, cfg, "scaling")
    epsilons = [float(e) for e in args.epsilons.split(",")]
    pairs = [ProbePair(1.0, 1.0, 0), ProbePair(1.0, 1.0, 1), ProbePair(1.5, 1.0, 0),
             ProbePair(1.5, 1.0, 1), ProbePair(2.0, 1.0, 0)]
    report = scaling_collapse(cfg, epsilons, pairs, args.replicas, threads=args.threads)
    rows = []
    for eps in report.epsilons:
        rows.extend(report.estimates[eps].as_rows(cfg))
    header = (["epsilon", "t1"] + [f"x1{i+1}" for i in range(cfg.d)] + ["t2"]
              + [f"x2{i+1}" for i in range(cfg.d)] + ["estimate", "stderr", "replicas"])
    man.csv("collapse.csv", header, rows)
    fit = fit_effective_constants(cfg, report.estimates[min(epsilons)])
    summary = {
        "epsilons": report.epsilons,
        "discrepancies": [[list(k), v] for k, v in report.discrepancies],
        "shrinking": report.shrinking,
        "link_exponent": report.link_exponent,
        "link_exponent_err": report.link_exponent_err,
        "nu_fit": fit.nu, "nu_fit_err": fit.nu_err,
        "D_fit": fit.D, "D_fit_err": fit.D_err,
        "fit_condition": fit.condition,
    }
    if args.with_renorm:
        part = build_partition(4)
        summary["delta_nu"] = delta_nu_leading(cfg, part).value
        summary["d_eff_ratio"] = d_eff_ratio(cfg, part).value
    man.json("scaling_summary.json", summary)
    man.finalize()
    print(json.dumps({k: summary[k] for k in ("shrinking", "link_exponent",
                                              "nu_fit", "D_fit")}, indent=2))
    return 0


def cmd_report_data(args) -> int:
    """Produce reduced-scale CSVs in each documented schema for the figure tool."""
    from .scaling import (ProbePair, connected_two_point, ew_covariance_analytic,
                          mean_drift, scaling_collapse)

    cfg = _config_from_args(args)
    man = _writer(args, cfg, "report-data")

    pairs = [ProbePair(1.0, 1.0, m) for m in (0, 1, 2)] + [ProbePair(1.5, 1.0, 0)]
    collapse = scaling_collapse(cfg, [1.0, 0.5, 0.25], pairs, args.replicas,
                                threads=args.threads)
    rows = []
    for eps in collapse.epsilons:
        rows.extend(collapse.estimates[eps].as_rows(cfg))
    header = (["epsilon", "t1"] + [f"x1{i+1}" for i in range(cfg.d)] + ["t2"]
              + [f"x2{i+1}" for i in range(cfg.d)] + ["estimate", "stderr", "replicas"])
    man.csv("collapse.csv", header, rows)

    cfg_ew = cfg.with_(lam=0.0, noise="white")
    est = connected_two_point(cfg_ew.with_(T=2.0), pairs, 1.0, args.replicas,
                              equation="ew", threads=args.threads)
    cov_rows = []
    for pr, v, s in zip(est.pairs, est.values, est.stderr):
        (p1, p2), _ = pr.rescaled(1.0, cfg_ew)
        ana = ew_covariance_analytic(cfg.nu0, cfg.D0, (p1, p2), cfg.L, cfg.dx, cfg.d)
        cov_rows.append((p1[0], p2[0], pr.m, v, s, ana))
    man.csv("covariance.csv", ["t1", "t2", "sep_sites", "estimate", "stderr",
                               "analytic"], cov_rows)

    cmd_powercount_rows(man, cfg, jmax=6)

    drift = mean_drift(cfg, [1.0, 0.5], max(2, args.replicas // 2),
                       v_calibrated=args.v0 if args.v0 is not None else cfg.v0,
                       T=min(cfg.T, 8.0), threads=args.threads)
    man.csv("drift.csv", ["variant", "drift", "stderr"],
            [("v=0", drift.drift_uncalibrated, drift.drift_se),
             ("calibrated", drift.drift_calibrated, drift.drift_se)])
    man.finalize()
    print(f"report-data: wrote {man.dir}")
    return 0


def cmd_powercount_rows(man: ManifestWriter, cfg: SimConfig, jmax: int) -> None:
    from .multiscale import build_partition
    from .powercount import check_pw1, check_single_scale

    part = build_partition(jmax)
    rows = []
    singles = [check_single_scale(part, j, kappa=(0, 0), nu=cfg.nu0, d=cfg.d)
               for j in range(1, jmax + 1)]
    for rep in singles:
        rows.append(("single_scale_mass", rep.j, "-", rep.mass_constant,
                     singles[0].mass_constant, _pf(rep.mass_constant,
                                                   singles[0].mass_constant)))
    for rep in check_pw1(part, range(1, jmax + 1), nu=cfg.nu0, d=cfg.d):
        rows.append(("pw1", rep.j, rep.kappa_label, rep.constant, rep.constant,
                     "pass"))
    man.csv("powercount.csv", ["check", "j", "kappa", "measured", "bound", "status"],
            rows)


def cmd_replay(args) -> int:
    """Re-run the recorded subcommand and demand byte-identical outputs."""
    manifest = load_manifest(args.manifest)
    outdir = Path(args.manifest).parent
    existing = verify_outputs(manifest, outdir)
    bad = [k for k, ok in existing.items() if not ok]
    if bad:
        print("stored outputs no longer match their digests: " + ", ".join(bad),
              file=sys.stderr)
        return 1
    if args.check_only:
        print("all stored output digests match")
        return 0

    cli_args = manifest.get("extra", {}).get("cli_args")
    if cli_args is None:
        print("manifest predates args capture; digest check only", file=sys.stderr)
        return 1
    replay_base = outdir.parent / (outdir.name + "-replay")
    ns = argparse.Namespace(**cli_args)
    ns.config = None
    ns.set = [f"{k}={v}" for k, v in manifest["config"].items() if v is not None]
    ns.outdir = replay_base
    ns.seed = manifest["seed"]
    rc = _DISPATCH[manifest["subcommand"]](ns)
    if rc != 0:
        return rc
    rerun_dirs = list(replay_base.glob("*/manifest.json")) or \
        list(replay_base.glob("manifest.json"))
    rerun = load_manifest(rerun_dirs[0])
    mismatched = [name for name, digest in manifest["outputs"].items()
                  if rerun["outputs"].get(name) != digest]
    if mismatched:
        print("replay digest mismatch: " + ", ".join(mismatched), file=sys.stderr)
        return 1
    print(f"replay of {manifest['subcommand']}: all {len(manifest['outputs'])} "
          f"output digests identical")
    return 0


_DISPATCH = {
    "simulate": cmd_simulate,
    "polymer": cmd_polymer,
    "renorm": cmd_renorm,
    "powercount": cmd_powercount,
    "cluster-selftest": cmd_cluster_selftest,
    "scaling": cmd_scaling,
    "report-data": cmd_report_data,
}


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kpzlab", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="advance KPZ/EW/SHE trajectories")
    _add_common(p)
    p.add_argument("--equation", choices=["kpz", "ew", "she"], default="kpz")
    p.add_argument("--cadence", type=float, default=None,
                   help="snapshot spacing in time units")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("polymer", help="directed-polymer estimates of w")
    _add_common(p)
    p.add_argument("--horizons", default="1,2,4")
    p.add_argument("--paths", type=int, default=2000)
    p.add_argument("--v0tilde", action="store_true")
    p.set_defaults(fn=cmd_polymer)

    p = sub.add_parser("renorm", help="leading-order renormalized constants")
    _add_common(p)
    p.add_argument("--jmax", type=int, default=4)
    p.set_defaults(fn=cmd_renorm)

    p = sub.add_parser("powercount", help="multi-scale kernel estimate checks")
    _add_common(p)
    p.add_argument("--jmax", type=int, default=8)
    p.set_defaults(fn=cmd_powercount)

    p = sub.add_parser("cluster-selftest", help="exact combinatorics identity suite")
    _add_common(p)
    p.set_defaults(fn=cmd_cluster_selftest)

    p = sub.add_parser("scaling", help="diffusive rescaling experiments")
    _add_common(p)
    p.add_argument("--epsilons", default="1,0.5,0.25")
    p.add_argument("--with-renorm", action="store_true")
    p.set_defaults(fn=cmd_scaling)

    p = sub.add_parser("report-data", help="reduced-scale CSVs for the figure tool")
    _add_common(p)
    p.add_argument("--v0", type=float, default=None)
    p.set_defaults(fn=cmd_report_data)

    p = sub.add_parser("replay", help="verify a manifest's output digests")
    p.add_argument("manifest", type=Path)
    p.add_argument("--check-only", action="store_true")
    p.set_defaults(fn=cmd_replay)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except SchemaError as exc:
        record = {"error": "schema", "keys": exc.keys, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
