"""``gmc`` command line: one subcommand per experiment suite.

Exit codes: 0 success, 1 gate failure (only with ``--gate``), 2 invalid
config or usage, 3 I/O error.  Failures print one JSON object to stderr with a
``reason`` field.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, gates
from .config import SUBCOMMANDS, ConfigError, ExperimentConfig, load_config
from .ensemble import default_workers, run_ensemble
from .experiments import (backend_cross_validation, cauchy_l2_scan, girsanov_check, kl_martingale_scan,
                          moments_table, second_moment_comparison, thick_point_profile,
                          truncated_second_moment_scan, truncation_loss, typical_thickness_check,
                          universality_gap, validate_kernel)
from .field import JointGaussianSpec
from .report import ReportFile, Table, emit_report

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _clamp_table(res) -> Table:
    return Table("clamp_events", ("replicates", "clamped_total", "replicates_with_clamps"),
                 [(res.replicates, int(res.clamped.sum()), int(np.count_nonzero(res.clamped)))])


def _with_zero(gammas):
    return tuple(sorted(set(float(g) for g in gammas) | {0.0}))


# ---------------------------------------------------------------------------
# subcommands: each returns (tables, gate results)

def run_sample(cfg: ExperimentConfig, workers):
    sec = cfg.section("sample")
    atoms = [cfg.atom(a) for a in sec["atoms"]]
    table = backend_cross_validation(cfg.kernel, atoms, sec["replicates"], cfg.seed)
    spec = JointGaussianSpec.build(cfg.kernel, atoms)
    psd = Table("gram_psd", ("atoms", "jitter", "min_eigenvalue"),
                [(len(atoms), spec.jitter, float(np.linalg.eigvalsh(spec.cov)[0]))])
    return [table, psd], [gates.backend(table)]


def run_moments(cfg, workers):
    sec = cfg.section("moments")
    g2 = float(sec["second_moment_gamma"])
    res = run_ensemble(cfg.ensemble_spec(gammas=_with_zero(list(sec["gammas"]) + [g2])), workers)
    mt = moments_table(res, gammas=sec["gammas"])
    primary = res.spec.mollifiers[0]
    check = second_moment_comparison(res, cfg.kernel, primary, sec["second_moment_scales"], g2, cfg.region,
                                     outer_n=int(sec["outer_n"]))
    return [mt, check, _clamp_table(res)], [gates.normalization(mt, cfg.region.area),
                                             gates.second_moment(check)]


def run_truncation(cfg, workers):
    sec = cfg.section("truncation")
    gamma, alpha = float(sec["gamma"]), float(sec["alpha"])
    spec = cfg.ensemble_spec(gammas=_with_zero([gamma]), alphas=(alpha,), replicates=sec["replicates"],
                             thickness_alphas=tuple(sec["thickness_alphas"]),
                             thickness_eps0=tuple(sec["thickness_eps0"]))
    res = run_ensemble(spec, workers)
    scan, slopes = truncated_second_moment_scan(res, gamma, alpha)
    thick = typical_thickness_check(res)
    loss = truncation_loss(res, gamma, alpha, cfg.ladder.eps_min)
    return ([scan, slopes, thick, loss, _clamp_table(res)],
            [gates.truncation_slopes(slopes), gates.thickness_monotone(thick)])


def run_cauchy(cfg, workers):
    sec = cfg.section("cauchy")
    alpha = float(sec["alpha"])
    res = run_ensemble(cfg.ensemble_spec(gammas=tuple(sec["gammas"]), alphas=(alpha,),
                                         replicates=sec["replicates"]), workers)
    scans = {float(g): cauchy_l2_scan(res, float(g), alpha) for g in sec["gammas"]}
    merged = Table("cauchy_scan", scans[next(iter(scans))].columns,
                   [row for t in scans.values() for row in t.rows])
    gate_list = [gates.cauchy(scans)] if _standard_ladder(cfg) else []
    return [merged, _clamp_table(res)], gate_list


def _standard_ladder(cfg) -> bool:
    try:
        cfg.ladder.index(2.0 ** -4)
        cfg.ladder.index(2.0 ** -6)
        return True
    except KeyError:
        return False


def run_universality(cfg, workers):
    sec = cfg.section("universality")
    a, b = (cfg.mollifier(n) for n in sec["pair"])
    mols = tuple(dict.fromkeys((a, b)))
    res = run_ensemble(cfg.ensemble_spec(gammas=_with_zero(sec["gammas"]), mollifiers=mols), workers)
    per = {float(g): universality_gap(res, float(g), a, b) for g in sec["gammas"]}
    merged = Table("universality", per[next(iter(per))].columns, [r for t in per.values() for r in t.rows])
    gated = {g: t for g, t in per.items() if g in gates.PILOT["universality_ratio"]}
    return [merged, _clamp_table(res)], ([gates.universality(gated)] if gated else [])


def run_thickpoints(cfg, workers):
    sec = cfg.section("thickpoints")
    gamma = float(sec["gamma"])
    prof = thick_point_profile(cfg.kernel, gamma, tuple(sec["x0"]), list(cfg.ladder.scales),
                               cfg.mollifier(sec["mollifier"]), sec["replicates"], cfg.seed,
                               modes=tuple(sec["modes"]))
    gl = []
    if set(sec["modes"]) == {"tilted", "size_biased"}:
        gl.append(gates.thick_points(prof, gamma, cfg.ladder.eps_min))
    return [prof], gl


def run_girsanov(cfg, workers):
    sec = cfg.section("girsanov")
    means, covs = girsanov_check(cfg.kernel, float(sec["gamma"]), cfg.atom(sec["tilt"]),
                                 [cfg.atom(t) for t in sec["targets"]], sec["replicates"], cfg.seed)
    return [means, covs], [gates.girsanov(means, covs)]


def run_kl_martingale(cfg, workers):
    sec = cfg.section("kl-martingale")
    gamma = float(sec["gamma"])
    res = run_ensemble(cfg.ensemble_spec(gammas=_with_zero([gamma]), n_levels=tuple(sec["levels"])), workers)
    levels, gap = kl_martingale_scan(res, gamma)
    gl = [gates.kl_martingale(levels, gap, cfg.region.area, gamma)] if gamma in gates.PILOT["kl_gap_ratio"] else []
    return [levels, gap, _clamp_table(res)], gl


def run_validate_kernel(cfg, workers):
    sec = cfg.section("validate-kernel")
    tables = validate_kernel(cfg.kernel, [cfg.mollifier(f) for f in sec["families"]], cfg.ladder,
                             x=tuple(sec["x"]))
    return tables, [gates.covariance_model(tables)]


RUNNERS = {
    "sample": run_sample,
    "moments": run_moments,
    "truncation": run_truncation,
    "cauchy": run_cauchy,
    "universality": run_universality,
    "thickpoints": run_thickpoints,
    "girsanov": run_girsanov,
    "kl-martingale": run_kl_martingale,
    "validate-kernel": run_validate_kernel,
}
assert tuple(RUNNERS) == SUBCOMMANDS


def run(subcommand: str, cfg: ExperimentConfig, workers: int | None = None) -> ReportFile:
    """Run one suite and wrap its tables and gate outcomes in a :class:`ReportFile`."""
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        tables, gate_results = RUNNERS[subcommand](cfg, workers)
    messages = list(cfg.warnings) + list(dict.fromkeys(f"{w.category.__name__}: {w.message}" for w in caught))
    meta = {
        "subcommand": subcommand,
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "version": __version__,
        "wall_time_s": round(time.perf_counter() - t0, 3),
        "warnings": messages,
        "gates": [g.as_dict() for g in gate_results],
        "config": cfg.raw,
    }
    return ReportFile(meta, list(tables) + [gates.gates_table(gate_results)])


def write_report(report: ReportFile, out: Path, formats) -> list[Path]:
    name = report.metadata["subcommand"]
    paths = []
    if "json" in formats:
        paths += emit_report(report, "json", out / f"{name}.json")
    if "csv" in formats:
        paths += emit_report(report, "csv", out / name)
    return paths


def _fail(reason: str, code: int, **extra) -> int:
    print(json.dumps({"status": "error", "reason": reason, **extra}), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gmc", description="Gaussian multiplicative chaos laboratory")
    p.add_argument("--version", action="version", version=f"gmc {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, default=None, help="YAML config (defaults when omitted)")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--workers", type=int, default=None, help="worker processes (default: $GMC_WORKERS or 1)")
        s.add_argument("--out", type=Path, default=None, help="output directory (default: config output.dir)")
        s.add_argument("--gate", action="store_true", help="exit nonzero when an acceptance gate fails")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    except ConfigError as exc:
        return _fail("config_error", EXIT_CONFIG, problems=exc.problems)
    except OSError as exc:
        return _fail("io_error", EXIT_IO, message=str(exc))
    workers = default_workers() if args.workers is None else args.workers
    if workers < 1:
        return _fail("config_error", EXIT_CONFIG, problems=["--workers must be >= 1"])
    report = run(args.subcommand, cfg, workers)
    out = args.out if args.out is not None else Path(cfg.raw["output"]["dir"])
    try:
        paths = write_report(report, out, cfg.raw["output"]["formats"])
    except OSError as exc:
        return _fail("io_error", EXIT_IO, message=str(exc))
    for g in report.metadata["gates"]:
        print(gates.GateResult(**g).line())
    for path in paths:
        print(f"wrote {path}")
    failed = [g for g in report.metadata["gates"] if not g["passed"]]
    if args.gate and failed:
        return _fail("gate_failure", EXIT_GATE, subcommand=args.subcommand,
                     failures=[{k: g[k] for k in ("criterion", "name", "observed", "threshold", "detail")}
                               for g in failed])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
