"""Deterministic Monte Carlo ensembles over the KL backend.

Replicate ``r`` draws its coefficients from stream ``r`` of the configured
seed, so results are independent of worker count and scheduling.  Workers
rebuild the (cheap, deterministic) basis from the spec instead of receiving
it by pickle; chunks come back through ``Executor.map`` and are concatenated in
replicate order.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .field import build_kl_basis, evaluate_field, sample_coefficients, truncated_variance_field
from .geometry import Region, ScaleLadder
from .kernels import GffSquare
from .measure import ClampCounter, _weights, total_mass
from .mollifiers import MollifierSpec


@dataclass(frozen=True)
class EnsembleSpec:
    """Everything a replicate needs.  ``mollifiers[0]`` is the primary family."""

    kernel: GffSquare = field(default_factory=GffSquare)
    mollifiers: tuple = (MollifierSpec("circle"), MollifierSpec("box"))
    ladder: ScaleLadder = field(default_factory=ScaleLadder)
    region: Region = field(default_factory=Region)
    gammas: tuple = (0.0, 0.5, 1.0, 1.4, 1.6)
    alphas: tuple = (1.8,)
    n_levels: tuple = (16, 64, 256, 1024)
    thickness_alphas: tuple = ()
    thickness_eps0: tuple = ()
    n_modes: int | None = None
    replicates: int = 2000
    seed: int = 0

    def __post_init__(self):
        for name in ("mollifiers", "gammas", "alphas", "n_levels", "thickness_alphas", "thickness_eps0"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if list(self.n_levels) != sorted(self.n_levels):
            raise ValueError("n_levels must be ascending")
        for e in self.thickness_eps0:
            self.ladder.index(e)

    def with_(self, **kw) -> "EnsembleSpec":
        from dataclasses import replace
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """Per-replicate arrays, replicate axis first.

    ``i_eps``: ``(R, gamma, mollifier, scale)``
    ``j_eps``, ``bad``: ``(R, gamma, alpha, mollifier, scale)``
    ``mu``: ``(R, gamma, level)`` for the primary mollifier's region
    ``fail``: ``(R, thickness_alpha, eps0)`` fraction of grid points leaving the good event
    """

    spec: EnsembleSpec
    i_eps: np.ndarray
    j_eps: np.ndarray
    bad: np.ndarray
    mu: np.ndarray
    fail: np.ndarray
    clamped: np.ndarray

    @property
    def replicates(self) -> int:
        return len(self.i_eps)

    def gamma_index(self, gamma: float) -> int:
        return _find(self.spec.gammas, gamma, "gamma")

    def alpha_index(self, alpha: float) -> int:
        return _find(self.spec.alphas, alpha, "alpha")

    def mollifier_index(self, m) -> int:
        if isinstance(m, str):
            fam = [x.family for x in self.spec.mollifiers]
            return _find(fam, m, "mollifier")
        return self.spec.mollifiers.index(m)

    def head(self, n: int) -> "EnsembleResult":
        """The first ``n`` replicates (identical to a run with ``replicates = n``)."""
        return EnsembleResult(self.spec.with_(replicates=n), self.i_eps[:n], self.j_eps[:n],
                              self.bad[:n], self.mu[:n], self.fail[:n], self.clamped[:n])


def _find(seq, value, what):
    for i, v in enumerate(seq):
        if v == value or (isinstance(v, float) and abs(v - value) <= 1e-12):
            return i
    raise KeyError(f"{what} {value!r} is not configured")


class _Context:
    """Per-process basis and variance grids for one spec."""

    def __init__(self, spec: EnsembleSpec):
        self.spec = spec
        self.basis = build_kl_basis(spec.kernel, spec.n_modes, spec.mollifiers, spec.ladder,
                                    spec.region, unmollified=bool(spec.n_levels))
        if spec.n_levels and spec.n_levels[-1] > self.basis.size:
            raise ValueError("largest KL level exceeds the basis size")
        n = self.basis.size
        self.var = {m: [truncated_variance_field(self.basis, n, m, e, "grid") for e in spec.ladder.scales]
                    for m in spec.mollifiers}
        self.mu_var = [truncated_variance_field(self.basis, k, None, None, "grid") for k in spec.n_levels]


@lru_cache(maxsize=4)
def _context(spec: EnsembleSpec) -> _Context:
    return _Context(spec)


def run_replicate(spec: EnsembleSpec, r: int, ctx: _Context | None = None) -> dict:
    ctx = _context(spec) if ctx is None else ctx
    basis = ctx.basis
    sample = sample_coefficients(basis.size, spec.seed, r)
    scales = spec.ladder.scales
    cell = spec.region.cell_area
    fields = {m: np.stack([evaluate_field(basis, sample, m, e) for e in scales]) for m in spec.mollifiers}
    mu_fields = [(evaluate_field(basis, sample, None, None, "grid", k), v)
                 for k, v in zip(spec.n_levels, ctx.mu_var)]
    G, A, M, S = len(spec.gammas), len(spec.alphas), len(spec.mollifiers), len(scales)
    logs = np.log(1.0 / scales)
    out_i = np.empty((G, M, S))
    out_j = np.empty((G, A, M, S))
    out_b = np.empty((G, A, M, S))
    out_mu = np.empty((G, len(spec.n_levels)))
    counter = ClampCounter()
    no_trunc = [a for a, alpha in enumerate(spec.alphas) if alpha == math.inf]
    # good[a, m, s]: ladder event from eps0 down to scale s, per grid point
    good = {}
    for a, alpha in enumerate(spec.alphas):
        for m in spec.mollifiers:
            below = fields[m] <= alpha * logs[:, None]
            good[a, m] = np.logical_and.accumulate(below, axis=0)
    for g, gamma in enumerate(spec.gammas):
        for im, m in enumerate(spec.mollifiers):
            for s in range(S):
                w = np.ones(fields[m].shape[1]) if gamma == 0.0 else _weights(fields[m][s], ctx.var[m][s], gamma, counter)
                for a in range(A):
                    mask = good[a, m][s]
                    out_j[g, a, im, s] = w[mask].sum() * cell
                    out_b[g, a, im, s] = w[~mask].sum() * cell
                # I = J + J' exactly for the first alpha, to rounding for the others
                if gamma == 0.0:
                    out_i[g, im, s] = spec.region.area
                    out_b[g, :, im, s] = spec.region.area - out_j[g, :, im, s]
                else:
                    out_i[g, im, s] = out_j[g, 0, im, s] + out_b[g, 0, im, s] if A else w.sum() * cell
                for a in no_trunc:
                    out_j[g, a, im, s], out_b[g, a, im, s] = out_i[g, im, s], 0.0
        out_mu[g] = [total_mass(h, v, gamma, cell, counter) for h, v in mu_fields]
    clamped = counter.count
    # thickness: fraction of grid points failing the ladder event from eps0 down to eps_min
    primary = fields[spec.mollifiers[0]]
    fail = np.empty((len(spec.thickness_alphas), len(spec.thickness_eps0)))
    for ia, alpha in enumerate(spec.thickness_alphas):
        over = primary > alpha * logs[:, None]
        for ie, e0 in enumerate(spec.thickness_eps0):
            s0 = spec.ladder.index(e0)
            fail[ia, ie] = np.mean(np.any(over[s0:], axis=0))
    return {"i": out_i, "j": out_j, "b": out_b, "mu": out_mu, "fail": fail, "clamped": clamped}


def _run_chunk(spec: EnsembleSpec, rs) -> list[dict]:
    ctx = _context(spec)
    return [run_replicate(spec, r, ctx) for r in rs]


def default_workers() -> int:
    env = os.environ.get("GMC_WORKERS")
    if env:
        return max(1, int(env))
    return 1


def run_ensemble(spec: EnsembleSpec, workers: int | None = None, chunk: int = 50) -> EnsembleResult:
    """All replicates of ``spec``; the output never depends on ``workers``."""
    workers = default_workers() if workers is None else max(1, int(workers))
    chunks = [range(s, min(s + chunk, spec.replicates)) for s in range(0, spec.replicates, chunk)]
    if workers == 1:
        parts = [_run_chunk(spec, c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [spec] * len(chunks), chunks))
    rows = [row for part in parts for row in part]
    stack = lambda key: np.stack([row[key] for row in rows])
    return EnsembleResult(spec, stack("i"), stack("j"), stack("b"), stack("mu"), stack("fail"),
                          np.array([row["clamped"] for row in rows]))
