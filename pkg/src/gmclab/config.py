"""YAML experiment configuration: defaults, validation and a stable content hash.

Schema version 1.  Every key must be known; a file lists only what it changes
and the rest comes from :data:`DEFAULTS`.  Loading collects every violation
before failing.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .ensemble import EnsembleSpec
from .field import Atom
from .geometry import Rect, Region, ScaleLadder
from .kernels import TWO_PI, GffSquare
from .measure import NO_TRUNCATION
from .mollifiers import FAMILIES, MollifierSpec

SCHEMA_VERSION = 1
DIM = 2
GAMMA_MAX = math.sqrt(2 * DIM)

SUBCOMMANDS = ("sample", "moments", "truncation", "cauchy", "universality", "thickpoints",
               "girsanov", "kl-martingale", "validate-kernel")


def _probe_atoms():
    fams = ("circle", "box")
    scales = (2.0 ** -3, 2.0 ** -4, 2.0 ** -5)
    return [{"mollifier": fams[i % 2], "eps": scales[i % 3],
             "x": [round(0.3 + 0.04 * i, 6), round(0.5 + 0.02 * (i % 4), 6)]} for i in range(10)]


DEFAULTS = {
    "schema": SCHEMA_VERSION,
    "seed": 2026,
    "kernel": {"type": "gff_square", "mode_cutoff": 512, "amplitude": TWO_PI},
    "mollifiers": {"circle": {"family": "circle", "base_radius": None},
                   "box": {"family": "box", "base_radius": None}},
    "ladder": {"eps0": 2.0 ** -3, "ratio": 0.5, "count": 5},
    "region": {"rect": [0.2, 0.8, 0.2, 0.8], "grid_n": 128},
    "gammas": [0.0, 0.5, 1.0, 1.4, 1.6],
    "alpha": 1.8,
    "n_modes": None,
    "replicates": 2000,
    "sample": {"replicates": 5000, "atoms": _probe_atoms()},
    "moments": {"gammas": [0.0, 0.5, 1.0, 1.4], "second_moment_gamma": 1.0,
                "second_moment_scales": [2.0 ** -4, 2.0 ** -5, 2.0 ** -6], "outer_n": 64},
    "truncation": {"gamma": 1.6, "alpha": 1.8, "replicates": 4000,
                   "thickness_alphas": [0.1, 1.2, 2.0], "thickness_eps0": [2.0 ** -3, 2.0 ** -4, 2.0 ** -5]},
    "cauchy": {"gammas": [1.0, 1.6], "alpha": 1.8, "replicates": 4000},
    "universality": {"gammas": [0.5, 1.0], "pair": ["box", "circle"]},
    "thickpoints": {"gamma": 1.0, "x0": [0.5, 0.5], "mollifier": "circle", "replicates": 20000,
                    "modes": ["tilted", "size_biased"]},
    "girsanov": {"gamma": 1.0, "replicates": 2000,
                 "tilt": {"mollifier": "circle", "eps": 2.0 ** -5, "x": [0.5, 0.5]},
                 "targets": [{"mollifier": "circle", "eps": 2.0 ** -5, "x": [0.5, 0.5]},
                             {"mollifier": "circle", "eps": 2.0 ** -3, "x": [0.5, 0.5]},
                             {"mollifier": "box", "eps": 2.0 ** -4, "x": [0.55, 0.5]},
                             {"mollifier": "circle", "eps": 2.0 ** -5, "x": [0.3, 0.7]}]},
    "kl_martingale": {"gamma": 1.0, "levels": [16, 64, 256, 1024]},
    "validate_kernel": {"x": [0.5, 0.5], "families": ["circle", "box", "truncated_gaussian"]},
    "output": {"dir": "gmc-out", "formats": ["csv", "json"]},
}

# keys whose values are free-form mappings (names chosen by the user) or lists of records
_OPEN_MAPS = {("mollifiers",)}
_ATOM_KEYS = {"mollifier", "eps", "x"}


class ConfigError(ValueError):
    """All validation problems of one config file."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(f"  - {p}" for p in self.problems))


def _merge(base, over, path, problems):
    if not isinstance(over, dict):
        problems.append(f"{'.'.join(path) or '<root>'}: expected a mapping")
        return base
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = path + (str(k),)
        if k not in base:
            if path in _OPEN_MAPS:
                out[k] = v
                continue
            problems.append(f"{'.'.join(where)}: unknown key")
            continue
        if isinstance(base[k], dict) and tuple(where) not in _OPEN_MAPS:
            out[k] = _merge(base[k], v, where, problems)
        elif tuple(where) in _OPEN_MAPS:
            if not isinstance(v, dict):
                problems.append(f"{'.'.join(where)}: expected a mapping of name -> settings")
            else:
                out[k] = v
        else:
            out[k] = v
    return out


def config_hash(raw: dict) -> str:
    """sha256 of the canonical JSON of the resolved config, excluding ``output``."""
    body = {k: v for k, v in raw.items() if k != "output"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    raw: dict
    kernel: GffSquare
    mollifiers: dict
    ladder: ScaleLadder
    region: Region
    gammas: tuple
    alpha: float
    n_modes: int | None
    replicates: int
    seed: int
    warnings: tuple = ()

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def section(self, name: str) -> dict:
        return self.raw[name.replace("-", "_")]

    def mollifier(self, name: str) -> MollifierSpec:
        if name in self.mollifiers:
            return self.mollifiers[name]
        if name in FAMILIES:
            return MollifierSpec(name)
        raise KeyError(f"unknown mollifier {name!r}")

    def atom(self, rec: dict) -> Atom:
        return Atom(self.mollifier(rec["mollifier"]), float(rec["eps"]), tuple(rec["x"]))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        raw["seed"] = int(seed)
        return from_dict(raw)

    def ensemble_spec(self, gammas=None, alphas=None, replicates=None, mollifiers=None, **kw) -> EnsembleSpec:
        mols = tuple(self.mollifiers.values()) if mollifiers is None else tuple(mollifiers)
        return EnsembleSpec(kernel=self.kernel, mollifiers=mols, ladder=self.ladder, region=self.region,
                            gammas=tuple(self.gammas if gammas is None else gammas),
                            alphas=tuple((self.alpha,) if alphas is None else alphas),
                            n_modes=self.n_modes,
                            replicates=int(self.replicates if replicates is None else replicates),
                            seed=self.seed, **kw)


def _check_gamma(gamma, where, problems):
    if not isinstance(gamma, (int, float)) or isinstance(gamma, bool):
        problems.append(f"{where}: gamma must be a number")
        return False
    if not 0.0 <= gamma < GAMMA_MAX:
        problems.append(f"{where}: gamma = {gamma} violates the subcritical condition gamma < sqrt(2d) "
                        f"= {GAMMA_MAX:.6g} (and gamma >= 0)")
        return False
    return True


def _check_truncation(gamma, alpha, where, problems):
    if alpha == NO_TRUNCATION:
        return
    if not alpha > gamma:
        problems.append(f"{where}: alpha = {alpha} must exceed gamma = {gamma} "
                        f"(truncation hypothesis alpha > gamma)")
        return
    expo = (2 * gamma - alpha) ** 2 / 2 - gamma ** 2
    if not expo > -DIM:
        problems.append(f"{where}: exponent gate (2 gamma - alpha)^2/2 - gamma^2 = {expo:.4g} must be > -d = {-DIM} "
                        f"(bounded truncated second moment)")


def _alpha(v):
    if isinstance(v, str) and v.lower() in ("inf", "infinity", "none"):
        return NO_TRUNCATION
    return float(v)


def from_dict(raw_in: dict) -> ExperimentConfig:
    problems: list[str] = []
    warns: list[str] = []
    raw = _merge(DEFAULTS, raw_in or {}, (), problems)
    if raw.get("schema") != SCHEMA_VERSION:
        problems.append(f"schema: expected {SCHEMA_VERSION}, got {raw.get('schema')!r}")

    def build(where, fn):
        try:
            return fn()
        except (TypeError, ValueError, KeyError) as exc:
            problems.append(f"{where}: {exc}")
            return None

    kc = raw["kernel"]
    if kc.get("type") != "gff_square":
        problems.append(f"kernel.type: only 'gff_square' can be sampled, got {kc.get('type')!r}")
    kernel = build("kernel", lambda: GffSquare(int(kc["mode_cutoff"]), float(kc["amplitude"])))
    mollifiers = {}
    if not raw["mollifiers"]:
        problems.append("mollifiers: at least one mollifier is required")
    for name, mc in raw["mollifiers"].items():
        if not isinstance(mc, dict):
            problems.append(f"mollifiers.{name}: expected a mapping")
            continue
        extra = set(mc) - {"family", "base_radius"}
        for k in sorted(extra):
            problems.append(f"mollifiers.{name}.{k}: unknown key")
        m = build(f"mollifiers.{name}", lambda: MollifierSpec(mc.get("family", name), mc.get("base_radius")))
        if m is not None:
            mollifiers[name] = m
    lc = raw["ladder"]
    ladder = build("ladder", lambda: ScaleLadder(float(lc["eps0"]), float(lc["ratio"]), int(lc["count"])))
    rc = raw["region"]
    region = build("region", lambda: Region(Rect(*map(float, rc["rect"])), int(rc["grid_n"])))

    gammas = tuple(raw["gammas"]) if isinstance(raw["gammas"], list) else ()
    if not gammas:
        problems.append("gammas: expected a non-empty list")
    for i, g in enumerate(gammas):
        _check_gamma(g, f"gammas[{i}]", problems)
    alpha = build("alpha", lambda: _alpha(raw["alpha"]))
    seed = raw["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        problems.append("seed: must be a non-negative integer")
    reps = raw["replicates"]
    for where, r in [("replicates", reps)] + [(f"{s}.replicates", raw[s]["replicates"])
                                             for s in ("sample", "truncation", "cauchy", "thickpoints", "girsanov")]:
        if not isinstance(r, int) or isinstance(r, bool) or r < 2:
            problems.append(f"{where}: need an integer >= 2")

    # geometry: margin, grid/eps coupling, series cutoff
    if ladder is not None and region is not None and kernel is not None:
        margin = region.rect.margin_inside(kernel.domain)
        for name, m in mollifiers.items():
            if margin < m.reach(ladder.eps0):
                problems.append(f"margin condition: region margin {margin:.4g} is smaller than the {name} "
                                f"support reach {m.reach(ladder.eps0):.4g} at eps0")
        if region.spacing > ladder.eps_min:
            problems.append(f"grid/eps coupling: grid spacing {region.spacing:.4g} exceeds eps_min = "
                            f"{ladder.eps_min:.4g}; raise region.grid_n")
        elif region.spacing > ladder.eps_min / 4:
            warns.append(f"grid/eps coupling: {ladder.eps_min / region.spacing:.2f} cells per eps_min "
                         f"(fewer than 4); discretisation bias may exceed MC noise at the finest scale")
        if kernel.mode_cutoff * ladder.eps_min < 4 - 1e-9:
            problems.append(f"series cutoff: mode_cutoff * eps_min = {kernel.mode_cutoff * ladder.eps_min:.4g} "
                            f"must be >= 4")
    n_modes = raw["n_modes"]
    if n_modes is not None and kernel is not None:
        if not isinstance(n_modes, int) or not 1 <= n_modes <= kernel.mode_cutoff ** 2:
            problems.append(f"n_modes: must be null or an integer in [1, {kernel.mode_cutoff ** 2}]")

    # sections
    def known_mollifier(name, where):
        if name not in mollifiers and name not in FAMILIES:
            problems.append(f"{where}: unknown mollifier {name!r}")

    def check_atoms(recs, where):
        if not isinstance(recs, list) or not recs:
            problems.append(f"{where}: expected a non-empty list of atoms")
            return
        for i, rec in enumerate(recs):
            w = f"{where}[{i}]"
            if not isinstance(rec, dict):
                problems.append(f"{w}: expected a mapping")
                continue
            for k in sorted(set(rec) - _ATOM_KEYS):
                problems.append(f"{w}.{k}: unknown key")
            for k in sorted(_ATOM_KEYS - set(rec)):
                problems.append(f"{w}: missing {k}")
            if _ATOM_KEYS <= set(rec):
                known_mollifier(rec["mollifier"], f"{w}.mollifier")

    check_atoms(raw["sample"]["atoms"], "sample.atoms")
    check_atoms(raw["girsanov"]["targets"], "girsanov.targets")
    check_atoms([raw["girsanov"]["tilt"]], "girsanov.tilt")
    for i, g in enumerate(raw["moments"]["gammas"]):
        _check_gamma(g, f"moments.gammas[{i}]", problems)
    _check_gamma(raw["moments"]["second_moment_gamma"], "moments.second_moment_gamma", problems)
    tr = raw["truncation"]
    if _check_gamma(tr["gamma"], "truncation.gamma", problems):
        a = build("truncation.alpha", lambda: _alpha(tr["alpha"]))
        if a is not None:
            _check_truncation(tr["gamma"], a, "truncation", problems)
    for i, a in enumerate(tr["thickness_alphas"]):
        if not (isinstance(a, (int, float)) and a > 0):
            problems.append(f"truncation.thickness_alphas[{i}]: must be > 0")
    if ladder is not None:
        for i, e in enumerate(tr["thickness_eps0"]):
            build(f"truncation.thickness_eps0[{i}]", lambda: ladder.index(float(e)))
    ca = raw["cauchy"]
    a = build("cauchy.alpha", lambda: _alpha(ca["alpha"]))
    for i, g in enumerate(ca["gammas"]):
        if _check_gamma(g, f"cauchy.gammas[{i}]", problems) and a is not None:
            _check_truncation(g, a, f"cauchy (gamma = {g})", problems)
    un = raw["universality"]
    for i, g in enumerate(un["gammas"]):
        _check_gamma(g, f"universality.gammas[{i}]", problems)
    if not (isinstance(un["pair"], list) and len(un["pair"]) == 2):
        problems.append("universality.pair: expected two mollifier names")
    else:
        for n in un["pair"]:
            known_mollifier(n, "universality.pair")
    tp = raw["thickpoints"]
    _check_gamma(tp["gamma"], "thickpoints.gamma", problems)
    known_mollifier(tp["mollifier"], "thickpoints.mollifier")
    for mode in tp["modes"]:
        if mode not in ("tilted", "size_biased"):
            problems.append(f"thickpoints.modes: unknown mode {mode!r}")
    _check_gamma(raw["girsanov"]["gamma"], "girsanov.gamma", problems)
    km = raw["kl_martingale"]
    _check_gamma(km["gamma"], "kl_martingale.gamma", problems)
    lv = km["levels"]
    if not (isinstance(lv, list) and lv and all(isinstance(v, int) and v >= 1 for v in lv) and lv == sorted(lv)):
        problems.append("kl_martingale.levels: expected an ascending list of positive integers")
    elif kernel is not None:
        cap = kernel.mode_cutoff ** 2 if n_modes is None else n_modes
        if lv[-1] > cap:
            problems.append(f"kl_martingale.levels: largest level {lv[-1]} exceeds the basis size {cap}")
    for f in raw["validate_kernel"]["families"]:
        known_mollifier(f, "validate_kernel.families")
    for fmt in raw["output"]["formats"]:
        if fmt not in ("csv", "json"):
            problems.append(f"output.formats: unknown format {fmt!r}")

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(raw, kernel, mollifiers, ladder, region, gammas, alpha,
                            n_modes, int(reps), int(seed), tuple(warns))


def load_config(path=None) -> ExperimentConfig:
    """Read and validate a YAML config; ``None`` gives the documented defaults."""
    if path is None:
        return from_dict({})
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError([f"parse error at {where}: {getattr(exc, 'problem', exc)}"]) from None
    if data is None:
        data = {}
    return from_dict(data)


def dump_defaults() -> str:
    return yaml.safe_dump(DEFAULTS, sort_keys=False)
