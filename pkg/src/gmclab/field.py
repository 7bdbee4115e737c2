"""Field sampling: Karhunen-Loeve backend, joint-Gaussian oracle, Cameron-Martin tilt.

The KL backend writes ``h^n = sum_{k<=n} sqrt(lam_k) xi_k f_k`` and evaluates
mollified values through precomputed tables of ``f_k * theta_eps``.  For the
analytic sine basis every sine mode is an eigenfunction of convolution with a
reflection-symmetric mollifier, so the table reduces to a transfer factor per
mode and the grid evaluation is two dense products ``Sx @ C @ Sy.T``.

The joint-Gaussian oracle factors the exact Gram matrix of a finite list of
atoms ``(mollifier, eps, x)`` and samples it directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .covariance import gram_matrix, mollified_cov, psd_check, transfer_grid
from .geometry import Region, ScaleLadder
from .kernels import ExplicitMatrix, GffSquare, KernelSpec
from .mollifiers import MollifierSpec

# purpose tags for independent RNG streams sharing one (seed, replicate) pair
PURPOSE_COEFFICIENTS = 0
PURPOSE_JOINT = 1
PURPOSE_TILTED = 2

SOURCES = ("analytic_sine", "nystrom")
WHERE = ("grid", "probes")


class MissingTableError(KeyError):
    """No mollified table was built for the requested (mollifier, scale, where)."""


class NystromError(RuntimeError):
    pass


def make_rng(seed: int, stream: int, purpose: int = PURPOSE_COEFFICIENTS) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, stream, purpose)``."""
    ss = np.random.SeedSequence([int(seed), int(stream), int(purpose)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Atom:
    """One mollified point evaluation ``h^m_eps(x)``."""

    mollifier: MollifierSpec
    eps: float
    x: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "eps", float(self.eps))


def _table_key(m: MollifierSpec | None, eps: float | None):
    return (None, 0.0) if m is None else (m, float(eps))


@dataclass(frozen=True)
class FieldSample:
    """i.i.d. standard Gaussian KL coefficients for one replicate."""

    xi: np.ndarray
    seed: int
    stream: int
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.xi)


def sample_coefficients(n: int, seed: int, stream: int,
                        purpose: int = PURPOSE_COEFFICIENTS) -> FieldSample:
    """``n`` standard normals from stream ``stream``; a longer draw extends a shorter one."""
    if n < 1:
        raise ValueError("need at least one coefficient")
    xi = make_rng(seed, stream, purpose).standard_normal(n)
    xi.setflags(write=False)
    return FieldSample(xi, int(seed), int(stream))


def _sine_matrix(coords, cutoff: int) -> np.ndarray:
    """``sqrt(2) sin(j pi t)`` for ``j = 1..cutoff``; rows follow ``coords``."""
    j = np.arange(1, cutoff + 1) * np.pi
    return np.sqrt(2.0) * np.sin(np.outer(np.asarray(coords, dtype=float), j))


# ---------------------------------------------------------------------------
# KL basis

@dataclass(frozen=True, eq=False)
class KlBasis:
    """Eigenpairs of the covariance operator plus mollified evaluation tables.

    ``analytic_sine``: ``eigvals[k] = amplitude / lambda_{j_k k_k}`` and ``modes[k] = (j_k, k_k)``.
    ``nystrom``: eigenpairs of the cell-averaged operator on the region, with
    eigenfunctions stored at the cell centres (orthonormal for the cell-area weights).
    """

    source: str
    kernel: KernelSpec
    eigvals: np.ndarray
    region: Region
    probes: np.ndarray
    tables: dict
    modes: np.ndarray | None = None          # analytic: (n, 2) mode indices
    nodes: np.ndarray | None = None          # nystrom: cell centres
    node_values: np.ndarray | None = None    # nystrom: f_k at the cell centres, (nodes, n)
    node_weight: float = 0.0

    @property
    def size(self) -> int:
        return len(self.eigvals)

    def has_table(self, m, eps, where: str = "grid") -> bool:
        return (_table_key(m, eps), where) in self.tables

    def table(self, m, eps, where: str):
        try:
            return self.tables[(_table_key(m, eps), where)]
        except KeyError:
            label = "unmollified" if m is None else f"{m.family} at eps={eps!r}"
            raise MissingTableError(f"no {where} table for {label}") from None

    # -- analytic helpers ---------------------------------------------------
    @property
    def cutoff(self) -> int:
        return self.kernel.mode_cutoff

    def coefficient_grid(self, coeffs, n: int | None = None) -> np.ndarray:
        """Scatter KL-ordered coefficients into a ``[j-1, k-1]`` array (analytic basis)."""
        coeffs = np.asarray(coeffs, dtype=float)
        n = len(coeffs) if n is None else n
        N = self.cutoff
        if n == N * N:
            return coeffs[self._grid_order].reshape(N, N)
        out = np.zeros(N * N)
        out[self._flat_index[:n]] = coeffs[:n]
        return out.reshape(N, N)

    @cached_property
    def _flat_index(self) -> np.ndarray:
        N = self.cutoff
        return (self.modes[:, 0] - 1) * N + (self.modes[:, 1] - 1)

    @cached_property
    def _grid_order(self) -> np.ndarray:
        # KL position of every (j, k) cell; only valid for a complete basis
        return np.argsort(self._flat_index)

    def mode_mask(self, n: int) -> np.ndarray:
        return self.coefficient_grid(np.ones(n), n)

    def eigfunc_values(self, points, n: int | None = None) -> np.ndarray:
        """``f_k(x)`` for ``k < n`` at ``points``; shape ``(len(points), n)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.size if n is None else n
        if self.source == "analytic_sine":
            j, k = self.modes[:n, 0], self.modes[:n, 1]
            return 2.0 * np.sin(np.pi * np.outer(pts[:, 0], j)) * np.sin(np.pi * np.outer(pts[:, 1], k))
        cross = _nystrom_cross(self, pts, None)
        return cross @ (self.node_weight * self.node_values[:, :n]) / self.eigvals[:n]

    def reconstruct(self, x, y, n: int | None = None) -> np.ndarray:
        """``sum_{k<n} lam_k f_k(x) f_k(y)`` for paired rows of ``x`` and ``y``."""
        fx = self.eigfunc_values(x, n)
        fy = self.eigfunc_values(y, n)
        return (fx * fy) @ self.eigvals[:fx.shape[1]]


def build_kl_basis(K: KernelSpec, n_modes: int | None = None,
                   mollifiers: Iterable[MollifierSpec] = (),
                   ladder: ScaleLadder | None = None,
                   region: Region | None = None,
                   probes=None,
                   source: str = "analytic_sine",
                   extra_scales: Iterable[tuple[MollifierSpec, float]] = (),
                   unmollified: bool = True,
                   nystrom_nodes: int = 32,
                   grid_tables: bool = True) -> KlBasis:
    """Eigenpairs of ``T f = int K(., y) f(y) dy`` and mollified tables.

    Tables are built for every mollifier at every ladder scale, for each pair
    in ``extra_scales``, and (if ``unmollified``) for the raw field, on the
    region grid and on ``probes``.
    """
    if source not in SOURCES:
        raise ValueError(f"unknown basis source {source!r}; expected one of {SOURCES}")
    region = Region() if region is None else region
    probes = np.zeros((0, 2)) if probes is None else np.atleast_2d(np.asarray(probes, dtype=float))
    pairs = []
    scales = [] if ladder is None else list(ladder.scales)
    for m in mollifiers:
        pairs += [(m, float(e)) for e in scales]
    pairs += [(m, float(e)) for m, e in extra_scales]
    pairs = list(dict.fromkeys(pairs))
    for m, e in pairs:
        if region.rect.margin_inside(K.domain) < m.reach(e):
            raise ValueError(f"{m.family} support at eps={e} leaves the domain from the region boundary")
        if len(probes) and not np.all(K.domain.contains(probes, margin=m.reach(e))):
            raise ValueError(f"{m.family} support at eps={e} leaves the domain from a probe")
    if unmollified:
        pairs.append((None, 0.0))

    if source == "analytic_sine":
        if not isinstance(K, GffSquare):
            raise TypeError("the analytic sine basis needs a GffSquare kernel")
        total = K.mode_cutoff ** 2
        n_modes = total if n_modes is None else int(n_modes)
        if not 1 <= n_modes <= total:
            raise ValueError(f"n_modes must lie in [1, {total}]")
        modes = K.kl_modes[:n_modes]
        eig = K.eigenvalue_grid()[modes[:, 0] - 1, modes[:, 1] - 1]
        eig.setflags(write=False)
        tables = {}
        xs, ys = region.axes()
        grid_sx = _sine_matrix(xs, K.mode_cutoff)
        grid_sy = _sine_matrix(ys, K.mode_cutoff)
        probe_sx = _sine_matrix(probes[:, 0], K.mode_cutoff)
        probe_sy = _sine_matrix(probes[:, 1], K.mode_cutoff)
        for m, e in pairs:
            M = transfer_grid(m, e, K.mode_cutoff)
            if grid_tables:
                tables[(_table_key(m, e), "grid")] = SineTable(M, grid_sx, grid_sy)
            tables[(_table_key(m, e), "probes")] = SineTable(M, probe_sx, probe_sy)
        return KlBasis(source, K, eig, region, probes, tables, modes=modes)

    return _build_nystrom(K, n_modes, region, probes, pairs, nystrom_nodes, grid_tables)


@dataclass(frozen=True, eq=False)
class SineTable:
    """Transfer factors and the sine matrices of one point family (grid axes or probes)."""

    transfer: np.ndarray
    sx: np.ndarray
    sy: np.ndarray


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Explicit ``(points, modes)`` array of mollified eigenfunction values."""

    values: np.ndarray


# -- Nystrom ------------------------------------------------------------------

def _cell_geometry(region: Region, nq: int):
    sub = region.with_grid(nq)
    xs, ys = sub.axes()
    half = (0.5 * region.rect.width / nq, 0.5 * region.rect.height / nq)
    return sub, xs, ys, half


def _cell_factors(K: GffSquare, xs, ys, half):
    N = K.mode_cutoff
    j = np.arange(1, N + 1)
    cx = _sine_matrix(xs, N) * np.sinc(j * half[0])
    cy = _sine_matrix(ys, N) * np.sinc(j * half[1])
    return cx, cy


def _nystrom_cross(basis: KlBasis, pts, m: MollifierSpec | None, eps: float = 0.0) -> np.ndarray:
    """``Cov(h_eps(x), cell average of h)`` for points against every Nystrom cell."""
    K = basis.kernel
    nq = int(round(np.sqrt(len(basis.nodes))))
    _, xs, ys, half = _cell_geometry(basis.region, nq)
    cx, cy = _cell_factors(K, xs, ys, half)
    W = K.eigenvalue_grid() * transfer_grid(m, eps, K.mode_cutoff)
    px = _sine_matrix(pts[:, 0], K.mode_cutoff)
    py = _sine_matrix(pts[:, 1], K.mode_cutoff)
    left = px[:, None, :] * cx[None, :, :]            # (p, i1, j)
    right = py[:, None, :] * cy[None, :, :]           # (p, i2, k)
    out = np.einsum("paj,jk,pbk->pab", left, W, right, optimize=True)
    return out.reshape(len(pts), nq * nq)


def _nystrom_grid_cross(basis: KlBasis, m, eps) -> np.ndarray:
    """Grid version of :func:`_nystrom_cross` by separable products."""
    K = basis.kernel
    nq = int(round(np.sqrt(len(basis.nodes))))
    _, xs, ys, half = _cell_geometry(basis.region, nq)
    cx, cy = _cell_factors(K, xs, ys, half)
    gx, gy = basis.region.axes()
    W = K.eigenvalue_grid() * transfer_grid(m, eps, K.mode_cutoff)
    X = (_sine_matrix(gx, K.mode_cutoff)[:, None, :] * cx[None]).reshape(-1, K.mode_cutoff)
    Y = (_sine_matrix(gy, K.mode_cutoff)[:, None, :] * cy[None]).reshape(-1, K.mode_cutoff)
    R = (X @ W) @ Y.T                                  # ((g1, i1), (g2, i2))
    n, nq2 = len(gx), nq
    R = R.reshape(n, nq2, n, nq2).transpose(0, 2, 1, 3)
    return R.reshape(n * n, nq2 * nq2)


def _build_nystrom(K, n_modes, region, probes, pairs, nq, grid_tables) -> KlBasis:
    if isinstance(K, ExplicitMatrix):
        # eigenpairs at the given points with equal weights; no mollified tables
        w = region.area / len(K.points)
        A = w * K.matrix
        if not psd_check(K.matrix).ok:
            raise NystromError("kernel matrix is not positive semidefinite")
        vals, vecs = np.linalg.eigh(A)
        order = np.argsort(vals)[::-1]
        vals, vecs = np.clip(vals[order], 0.0, None), vecs[:, order]
        n_modes = len(vals) if n_modes is None else n_modes
        f = vecs[:, :n_modes] / np.sqrt(w)
        tables = {(_table_key(None, 0.0), "probes"): ValueTable(f)}
        return KlBasis("nystrom", K, vals[:n_modes], region, K.points, tables,
                       nodes=K.points, node_values=f, node_weight=w)
    if not isinstance(K, GffSquare):
        raise TypeError("Nystrom needs a GffSquare or ExplicitMatrix kernel")
    sub, xs, ys, half = _cell_geometry(region, nq)
    cx, cy = _cell_factors(K, xs, ys, half)
    N = K.mode_cutoff
    P = (cx[:, None, :] * cx[None, :, :]).reshape(nq * nq, N)   # ((i1, l1), j)
    Q = (cy[:, None, :] * cy[None, :, :]).reshape(nq * nq, N)
    A = (P @ K.eigenvalue_grid()) @ Q.T                        # ((i1, l1), (i2, l2))
    A = A.reshape(nq, nq, nq, nq).transpose(0, 2, 1, 3).reshape(nq * nq, nq * nq)
    A = 0.5 * (A + A.T)
    chk = psd_check(A)
    if not chk.ok:
        raise NystromError("discretised operator failed the PSD check")
    w = sub.cell_area
    vals, vecs = np.linalg.eigh(w * A)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    n_modes = len(vals) if n_modes is None else int(n_modes)
    if not 1 <= n_modes <= len(vals):
        raise ValueError(f"n_modes must lie in [1, {len(vals)}]")
    if vals[n_modes - 1] <= 0:
        raise NystromError("requested modes include non-positive eigenvalues")
    vals = vals[:n_modes]
    f = vecs[:, :n_modes] / np.sqrt(w)
    basis = KlBasis("nystrom", K, vals, region, probes, {},
                    nodes=sub.points(), node_values=f, node_weight=w)
    coef = w * f / vals                                         # (nodes, modes)
    for m, e in pairs:
        key = _table_key(m, e)
        if len(probes):
            basis.tables[(key, "probes")] = ValueTable(_nystrom_cross(basis, probes, m, e) @ coef)
        if grid_tables:
            basis.tables[(key, "grid")] = ValueTable(_nystrom_grid_cross(basis, m, e) @ coef)
    return basis


# ---------------------------------------------------------------------------
# evaluation

def _check_length(basis: KlBasis, n: int):
    if n > basis.size:
        raise ValueError(f"sample has {n} coefficients but the basis only {basis.size} modes")


def _scaled_grid(basis: KlBasis, coeffs, n: int) -> np.ndarray:
    """``sqrt(lam) * coeffs`` on the ``[j-1, k-1]`` grid, cut to the occupied block."""
    C = basis.coefficient_grid(np.sqrt(basis.eigvals[:n]) * np.asarray(coeffs)[:n], n)
    # restrict to the occupied block so low-n evaluations stay cheap
    jmax = int(basis.modes[:n, 0].max())
    kmax = int(basis.modes[:n, 1].max())
    return C[:jmax, :kmax]


def evaluate_coefficients(basis: KlBasis, coeffs, m, eps, where: str = "grid",
                          n: int | None = None, grid: np.ndarray | None = None) -> np.ndarray:
    """``sum_{k<n} sqrt(lam_k) coeffs_k (f_k * theta_eps)(x)`` at the grid or the probes.

    Grid output is flattened in the region's ``ij`` point order.
    """
    if where not in WHERE:
        raise ValueError(f"where must be one of {WHERE}")
    coeffs = np.asarray(coeffs, dtype=float)
    n = len(coeffs) if n is None else int(n)
    _check_length(basis, n)
    tab = basis.table(m, eps, where)
    if n == 0:
        size = basis.region.grid_n ** 2 if where == "grid" else len(basis.probes)
        return np.zeros(size)
    scaled = np.sqrt(basis.eigvals[:n]) * coeffs[:n]
    if isinstance(tab, ValueTable):
        return tab.values[:, :n] @ scaled
    if grid is None:
        grid = _scaled_grid(basis, coeffs, n)
    jmax, kmax = grid.shape
    C = grid * tab.transfer[:jmax, :kmax]
    if where == "grid":
        return (tab.sx[:, :jmax] @ C @ tab.sy[:, :kmax].T).ravel()
    return np.einsum("pj,jk,pk->p", tab.sx[:, :jmax], C, tab.sy[:, :kmax])


def evaluate_field(basis: KlBasis, sample: FieldSample, m, eps, where: str = "grid",
                   n: int | None = None) -> np.ndarray:
    """Mollified truncated field ``h^n_eps`` at the grid or the probes (cached on the sample)."""
    n = sample.n if n is None else int(n)
    if n > sample.n:
        raise ValueError("n exceeds the number of sampled coefficients")
    key = (_table_key(m, eps), where, n)
    if key not in sample.cache:
        grid = None
        if basis.source == "analytic_sine" and n > 0:
            gkey = ("scaled_grid", id(basis), n)
            if gkey not in sample.cache:
                sample.cache[gkey] = _scaled_grid(basis, sample.xi, n)
            grid = sample.cache[gkey]
        val = evaluate_coefficients(basis, sample.xi, m, eps, where, n, grid)
        val.setflags(write=False)
        sample.cache[key] = val
    return sample.cache[key]


def evaluate_direct(basis: KlBasis, coeffs, m, eps, points, n: int | None = None) -> np.ndarray:
    """Slow path: explicit sum over modes at arbitrary points (analytic basis)."""
    if basis.source != "analytic_sine":
        raise TypeError("direct summation is implemented for the analytic basis")
    coeffs = np.asarray(coeffs, dtype=float)
    n = len(coeffs) if n is None else n
    _check_length(basis, n)
    j, k = basis.modes[:n, 0], basis.modes[:n, 1]
    M = transfer_grid(m, eps, basis.cutoff)[j - 1, k - 1] if m is not None else 1.0
    amp = np.sqrt(basis.eigvals[:n]) * coeffs[:n] * M
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(len(pts))
    for i, (a, b) in enumerate(pts):
        out[i] = np.sum(amp * 2.0 * np.sin(np.pi * j * a) * np.sin(np.pi * k * b))
    return out


def truncated_variance_field(basis: KlBasis, n: int, m, eps, where: str = "grid") -> np.ndarray:
    """``sum_{k<n} lam_k (f_k * theta_eps)(x)^2`` at every grid point or probe."""
    _check_length(basis, n)
    tab = basis.table(m, eps, where)
    if n == 0:
        size = basis.region.grid_n ** 2 if where == "grid" else len(basis.probes)
        return np.zeros(size)
    if isinstance(tab, ValueTable):
        return (tab.values[:, :n] ** 2) @ basis.eigvals[:n]
    W = basis.coefficient_grid(basis.eigvals[:n], n) * tab.transfer ** 2
    if where == "grid":
        return ((tab.sx ** 2) @ W @ (tab.sy ** 2).T).ravel()
    return np.einsum("pj,jk,pk->p", tab.sx ** 2, W, tab.sy ** 2)


def truncated_variance(basis: KlBasis, n: int, m, eps, x) -> float:
    """``sum_{k<n} lam_k (f_k * theta_eps)(x)^2`` at a single interior point."""
    if n == 0:
        return 0.0
    _check_length(basis, n)
    x = np.asarray(x, dtype=float).reshape(1, 2)
    if basis.source == "analytic_sine":
        j, k = basis.modes[:n, 0], basis.modes[:n, 1]
        M = transfer_grid(m, eps, basis.cutoff)[j - 1, k - 1] if m is not None else 1.0
        f = 2.0 * np.sin(np.pi * j * x[0, 0]) * np.sin(np.pi * k * x[0, 1]) * M
        return float(np.sum(basis.eigvals[:n] * f * f))
    if not isinstance(basis.kernel, GffSquare):
        raise TypeError("pointwise Nystrom extension needs a GffSquare kernel")
    vals = _nystrom_cross(basis, x, m, eps) @ (basis.node_weight * basis.node_values[:, :n] / basis.eigvals[:n])
    return float((vals[0] ** 2) @ basis.eigvals[:n])


# ---------------------------------------------------------------------------
# joint Gaussian oracle

@dataclass(frozen=True, eq=False)
class JointGaussianSpec:
    """Exact law of a finite vector of mollified atoms."""

    atoms: tuple
    cov: np.ndarray
    factor: np.ndarray
    jitter: float

    @classmethod
    def build(cls, K: KernelSpec, atoms: Sequence[Atom], method: str = "quadrature") -> "JointGaussianSpec":
        atoms = tuple(atoms)
        C = gram_matrix(K, [(a.mollifier, a.eps, a.x) for a in atoms], method=method)
        return cls.from_matrix(atoms, C)

    @classmethod
    def from_matrix(cls, atoms, cov) -> "JointGaussianSpec":
        cov = np.array(cov, dtype=float)
        chk = psd_check(cov)
        if not chk.ok:
            raise ValueError("covariance matrix failed the PSD check; refusing to sample")
        cov.setflags(write=False)
        L = chk.factor
        L.setflags(write=False)
        return cls(tuple(atoms), cov, L, chk.jitter)

    def index(self, atom: Atom) -> int:
        return self.atoms.index(atom)


def cholesky_joint_sample(spec: JointGaussianSpec, seed: int, stream: int) -> np.ndarray:
    """``factor @ z`` with ``z`` standard normal from stream ``stream``."""
    z = make_rng(seed, stream, PURPOSE_JOINT).standard_normal(len(spec.atoms))
    return spec.factor @ z


def cholesky_joint_samples(spec: JointGaussianSpec, seed: int, streams,
                           purpose: int = PURPOSE_JOINT) -> np.ndarray:
    """Stack of :func:`cholesky_joint_sample` over ``streams``; shape ``(len(streams), atoms)``."""
    Z = np.stack([make_rng(seed, s, purpose).standard_normal(len(spec.atoms)) for s in streams])
    return Z @ spec.factor.T


# ---------------------------------------------------------------------------
# Cameron-Martin tilt

def tilt_shift(target, tilt_atom: Atom, gamma: float, kernel: KernelSpec | None = None) -> np.ndarray:
    """Mean shift realising the law reweighted by ``exp(gamma h(tilt) - gamma^2 Var / 2)``.

    ``target`` a :class:`KlBasis`: returns the KL coefficient shift
    ``gamma sqrt(lam_k) (f_k * theta)(x0)``; adding it to ``xi`` shifts every
    evaluated atom by ``gamma`` times its (truncated) covariance with the tilt atom.

    ``target`` a :class:`JointGaussianSpec`: returns ``gamma * Cov(atom_i, tilt_atom)``
    for every atom; the row is read off the Gram matrix when the tilt atom is
    one of the atoms, else computed with ``mollified_cov`` on ``kernel``.
    """
    gamma = float(gamma)
    if isinstance(target, KlBasis):
        if gamma == 0.0:
            return np.zeros(target.size)
        x0 = np.asarray(tilt_atom.x).reshape(1, 2)
        if target.source == "analytic_sine":
            j, k = target.modes[:, 0], target.modes[:, 1]
            M = transfer_grid(tilt_atom.mollifier, tilt_atom.eps, target.cutoff)[j - 1, k - 1]
            f = 2.0 * np.sin(np.pi * j * x0[0, 0]) * np.sin(np.pi * k * x0[0, 1]) * M
        else:
            f = (_nystrom_cross(target, x0, tilt_atom.mollifier, tilt_atom.eps)
                 @ (target.node_weight * target.node_values / target.eigvals))[0]
        return gamma * np.sqrt(target.eigvals) * f
    if isinstance(target, JointGaussianSpec):
        if gamma == 0.0:
            return np.zeros(len(target.atoms))
        if tilt_atom in target.atoms:
            return gamma * np.asarray(target.cov[target.index(tilt_atom)])
        if kernel is None:
            raise ValueError("a kernel is needed when the tilt atom is not one of the spec's atoms")
        row = [mollified_cov(kernel, a.mollifier, a.eps, tilt_atom.mollifier, tilt_atom.eps,
                             a.x, tilt_atom.x) for a in target.atoms]
        return gamma * np.array(row)
    raise TypeError("tilt_shift needs a KlBasis or a JointGaussianSpec")
