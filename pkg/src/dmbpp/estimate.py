"""Posterior functionals: predictive densities on grids, closed-form mixture
marginals by Dirichlet aggregation, L1 distances, MPEL1, credible bands and
conditional-mean credible ellipses.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import chi2

from .domain import BlockIndex, Dataset, DomainSpec, MixedPoint
from .errors import (
    BudgetTooSmall,
    EmptyInput,
    InvalidArgument,
    UnsupportedSubset,
    ZeroMarginal,
)
from .gibbs import DataLogs, PosteriorDraws
from .kernels import dirichlet_logpdf_matrix
from .model import MixtureState, atom_alphas


# --- grids --------------------------------------------------------------------


def cube_axis_grid(resolution: int) -> np.ndarray:
    """Midpoint grid on [0,1]; never touches the boundary."""
    return (np.arange(resolution) + 0.5) / resolution


def simplex_interior_grid(d: int, resolution: int, margin: float = 0.0):
    """Midpoint grid on S_d: points and the per-cell volume."""
    axis = cube_axis_grid(resolution)
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    keep = mesh.sum(axis=1) < 1.0 - margin
    return mesh[keep], (1.0 / resolution) ** d


def full_grid(spec: DomainSpec, resolution: int, margin: float = 0.0):
    """Midpoint product grid over the full space as a Dataset, plus cell volume."""
    block_grids = []
    vol = 1.0
    for d in spec.simplex_dims:
        g, v = simplex_interior_grid(d, resolution, margin)
        block_grids.append(g)
        vol *= v
    for _ in range(spec.cube_dim):
        block_grids.append(cube_axis_grid(resolution).reshape(-1, 1))
        vol *= 1.0 / resolution
    sizes = [g.shape[0] for g in block_grids]
    idx = np.stack(np.meshgrid(*[np.arange(s) for s in sizes], indexing="ij"), axis=-1).reshape(
        -1, len(sizes)
    )
    simplex = tuple(
        block_grids[m][idx[:, m]] for m in range(spec.n_simplex)
    )
    if spec.cube_dim:
        cube = np.column_stack(
            [block_grids[spec.n_simplex + l][idx[:, spec.n_simplex + l], 0] for l in range(spec.cube_dim)]
        )
    else:
        cube = np.empty((idx.shape[0], 0))
    return Dataset(spec, simplex, cube), vol


@dataclass
class DensityEstimate:
    """Pointwise posterior mean and credible band of a density on a grid."""

    points: np.ndarray  # (P, dim) coordinates of the evaluation grid
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float = 0.95

    def __post_init__(self):
        if np.any(self.lower > self.mean + 1e-12) or np.any(self.mean > self.upper + 1e-12):
            raise InvalidArgument("band ordering violated")
        if np.any(self.mean < 0):
            raise InvalidArgument("negative density estimate")

    def to_csv(self, path) -> None:
        dim = self.points.shape[1] if self.points.ndim == 2 else 1
        pts = self.points.reshape(-1, dim)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"x{i+1}" for i in range(dim)] + ["mean", "q025", "q975"])
            for p, m, lo, hi in zip(pts, self.mean, self.lower, self.upper):
                writer.writerow([repr(float(v)) for v in p] + [repr(float(m)), repr(float(lo)), repr(float(hi))])


def _band(values: np.ndarray, level: float) -> DensityEstimate | tuple:
    lo = np.quantile(values, (1.0 - level) / 2.0, axis=0)
    hi = np.quantile(values, 1.0 - (1.0 - level) / 2.0, axis=0)
    return values.mean(axis=0), lo, hi


def mixture_logpdf_batch(state: MixtureState, logs: DataLogs) -> np.ndarray:
    """Mixture log density at all points of a DataLogs container."""
    alphas = atom_alphas(state, logs.spec)
    logk = logs.loglik_matrix(alphas)
    with np.errstate(divide="ignore"):
        logw = np.log(np.maximum(state.w, 0.0))
    return logsumexp(logk + logw, axis=1)


def predictive_density(draws: PosteriorDraws, points: Dataset, level: float = 0.95) -> DensityEstimate:
    """Pointwise posterior mean and quantile band of the joint density."""
    logs = DataLogs(points)
    vals = np.array([np.exp(mixture_logpdf_batch(s, logs)) for s in draws.states])
    mean, lo, hi = _band(vals, level)
    pts = np.column_stack([a for a in points.simplex] + ([points.cube] if points.cube.size else []))
    if pts.size == 0:
        pts = np.zeros((points.n, 0))
    return DensityEstimate(pts, mean, lo, hi, level)


# --- closed-form mixture marginals by Dirichlet aggregation -------------------


@dataclass(frozen=True)
class MarginalSubset:
    """Which coordinates to keep.

    Per simplex block: None (integrate the block out), "all", ("lead", m) for
    the leading m free coordinates, or ("part", p) for the single composition
    part p in 0..d (p = d selects the implicit last part).  `cube` lists the
    kept cube coordinate indices.
    """

    simplex: tuple
    cube: tuple[int, ...] = ()

    def check(self, spec: DomainSpec):
        if len(self.simplex) != spec.n_simplex:
            raise UnsupportedSubset("one entry per simplex block required")
        for sel, d in zip(self.simplex, spec.simplex_dims):
            if sel is None or sel == "all":
                continue
            kind, arg = sel
            if kind == "lead" and 1 <= arg <= d:
                continue
            if kind == "part" and 0 <= arg <= d:
                continue
            raise UnsupportedSubset(f"selector {sel} not expressible by aggregation")
        if any(not (0 <= l < spec.cube_dim) for l in self.cube):
            raise UnsupportedSubset("cube coordinate out of range")


def _aggregated_alphas(alpha_rows: np.ndarray, sel):
    """Aggregate Dirichlet parameters for a kept sub-vector or single part."""
    if sel == "all":
        return alpha_rows
    kind, arg = sel
    total = alpha_rows.sum(axis=1)
    if kind == "lead":
        kept = alpha_rows[:, :arg]
        return np.column_stack([kept, total - kept.sum(axis=1)])
    kept = alpha_rows[:, arg]
    return np.column_stack([kept, total - kept])


def _log_coords(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.maximum(values, 1e-300))


def mixture_marginal_logpdf(
    state: MixtureState,
    spec: DomainSpec,
    keep: MarginalSubset,
    simplex_values,
    cube_values,
) -> np.ndarray:
    """Marginal mixture log density for an aggregation-expressible subset.

    simplex_values: per kept simplex block, a (P, m) array (or (P,) for a
    single part); entries for dropped blocks are ignored (may be None).
    cube_values: (P, len(keep.cube)) array for the kept cube coordinates.
    """
    keep.check(spec)
    alphas = atom_alphas(state, spec)
    P = None
    terms = None

    def add(logpdf_matrix):
        nonlocal terms
        terms = logpdf_matrix if terms is None else terms + logpdf_matrix

    for m, sel in enumerate(keep.simplex):
        if sel is None:
            continue
        A = _aggregated_alphas(alphas[m], sel)
        vals = np.asarray(simplex_values[m], dtype=float)
        if sel == "all" or sel[0] == "lead":
            vals = np.atleast_2d(vals)
            full = np.column_stack([vals, 1.0 - vals.sum(axis=1)])
        else:
            vals = vals.reshape(-1)
            full = np.column_stack([vals, 1.0 - vals])
        add(dirichlet_logpdf_matrix(A, _log_coords(full)))
        P = full.shape[0]
    for i, l in enumerate(keep.cube):
        A = alphas[spec.n_simplex + l]
        vals = np.asarray(cube_values, dtype=float)[:, i]
        full = np.column_stack([vals, 1.0 - vals])
        add(dirichlet_logpdf_matrix(A, _log_coords(full)))
        P = full.shape[0]
    if terms is None:
        raise UnsupportedSubset("empty subset")
    with np.errstate(divide="ignore"):
        logw = np.log(np.maximum(state.w, 0.0))
    return logsumexp(terms + logw, axis=1)


def predictive_marginal(
    draws: PosteriorDraws,
    keep: MarginalSubset,
    simplex_values,
    cube_values,
    level: float = 0.95,
) -> DensityEstimate:
    spec = draws.model_config.spec
    vals = np.array(
        [
            np.exp(mixture_marginal_logpdf(s, spec, keep, simplex_values, cube_values))
            for s in draws.states
        ]
    )
    mean, lo, hi = _band(vals, level)
    cols = []
    for m, sel in enumerate(keep.simplex):
        if sel is not None:
            cols.append(np.atleast_2d(np.asarray(simplex_values[m]).T).T.reshape(mean.shape[0], -1))
    if keep.cube:
        cols.append(np.asarray(cube_values).reshape(mean.shape[0], -1))
    pts = np.column_stack(cols)
    return DensityEstimate(pts, mean, lo, hi, level)


# --- conditionals -------------------------------------------------------------


def conditional_weights(
    state: MixtureState, spec: DomainSpec, target: BlockIndex, x_minus: MixedPoint
):
    """Normalized component weights W_j(x_minus) and the log marginal."""
    target.check(spec)
    alphas = atom_alphas(state, spec)
    N = state.truncation
    logk = np.zeros(N)
    for m in range(spec.n_simplex):
        if target.index == m + 1:
            continue
        x = x_minus.simplex_blocks[m]
        full = np.append(x, 1.0 - x.sum()).reshape(1, -1)
        logk += dirichlet_logpdf_matrix(alphas[m], _log_coords(full))[0]
    if spec.cube_dim and target.index != spec.n_simplex + 1:
        for l in range(spec.cube_dim):
            x = x_minus.cube_block[l]
            full = np.array([[x, 1.0 - x]])
            logk += dirichlet_logpdf_matrix(alphas[spec.n_simplex + l], _log_coords(full))[0]
    with np.errstate(divide="ignore"):
        logits = logk + np.log(np.maximum(state.w, 0.0))
    log_marg = logsumexp(logits)
    if not np.isfinite(log_marg) or log_marg < -700.0:
        raise ZeroMarginal("conditioning marginal underflows")
    return np.exp(logits - log_marg), float(log_marg)


def state_conditional_batch(
    state: MixtureState,
    spec: DomainSpec,
    target: BlockIndex,
    x_minus: MixedPoint,
    points: np.ndarray,
) -> np.ndarray:
    """Conditional density of the target block at many points, one state."""
    W, _ = conditional_weights(state, spec, target, x_minus)
    alphas = atom_alphas(state, spec)
    pts = np.atleast_2d(points)
    if 1 <= target.index <= spec.n_simplex:
        full = np.column_stack([pts, 1.0 - pts.sum(axis=1)])
        logk = dirichlet_logpdf_matrix(alphas[target.index - 1], _log_coords(full))
    else:
        logk = np.zeros((pts.shape[0], state.truncation))
        for l in range(spec.cube_dim):
            full = np.column_stack([pts[:, l], 1.0 - pts[:, l]])
            logk += dirichlet_logpdf_matrix(alphas[spec.n_simplex + l], _log_coords(full))
    return np.exp(logk) @ W


def predictive_conditional(
    draws: PosteriorDraws,
    target: BlockIndex,
    x_minus: MixedPoint,
    points: np.ndarray,
    level: float = 0.95,
) -> DensityEstimate:
    """Pointwise band for the conditional density of one block given the rest."""
    spec = draws.model_config.spec
    vals = np.array(
        [state_conditional_batch(s, spec, target, x_minus, points) for s in draws.states]
    )
    mean, lo, hi = _band(vals, level)
    return DensityEstimate(np.atleast_2d(points).reshape(mean.shape[0], -1), mean, lo, hi, level)


def conditional_mean_region(
    draws: PosteriorDraws,
    target: BlockIndex,
    x_minus: MixedPoint,
    level: float = 0.95,
):
    """Credible ellipse for the conditional mean of a 2-D target block.

    Returns (center, shape) where the region is
    {y : (y-center)' shape^{-1} (y-center) <= 1}.
    """
    spec = draws.model_config.spec
    if spec.block_dim(target.index) != 2:
        raise InvalidArgument("target block must have exactly 2 free coordinates")
    means = []
    for s in draws.states:
        W, _ = conditional_weights(s, spec, target, x_minus)
        alphas = atom_alphas(s, spec)
        if 1 <= target.index <= spec.n_simplex:
            A = alphas[target.index - 1]
            mu = A[:, :2] / A.sum(axis=1, keepdims=True)
        else:
            mu = np.column_stack(
                [
                    alphas[spec.n_simplex + l][:, 0]
                    / alphas[spec.n_simplex + l].sum(axis=1)
                    for l in range(2)
                ]
            )
        means.append(W @ mu)
    means = np.array(means)
    center = means.mean(axis=0)
    cov = np.cov(means.T) if means.shape[0] > 1 else np.zeros((2, 2))
    shape = np.atleast_2d(cov) * chi2.ppf(level, df=2)
    return center, shape


# --- distances ----------------------------------------------------------------


def l1_distance(f, g, spec: DomainSpec, method: str = "grid", budget: int = 200_000, rng=None) -> float:
    """L1 distance between two densities (callables on MixedPoint).

    Grid method: midpoint rule, total dimension <= 3 (otherwise mc is
    forced).  MC method: uniform importance sampling with the exact
    Lebesgue volume of the space.
    """
    dim = spec.total_dim
    if method == "grid" and dim > 3:
        method = "mc"
    if method == "grid":
        resolution = int(round(budget ** (1.0 / dim)))
        if resolution < 2:
            raise BudgetTooSmall(f"budget {budget} too small for a {dim}-dim grid")
        grid, vol = full_grid(spec, resolution)
        total = 0.0
        for p in grid.points():
            total += abs(f(p) - g(p)) * vol
        return float(total)
    if method == "mc":
        if budget < 100:
            raise BudgetTooSmall("mc budget below 100 draws")
        rng = rng or np.random.default_rng(0)
        V = spec.volume()
        acc = 0.0
        for _ in range(budget):
            blocks = tuple(rng.dirichlet(np.ones(d + 1))[:d] for d in spec.simplex_dims)
            cube = rng.uniform(size=spec.cube_dim)
            p = MixedPoint(blocks, cube)
            acc += abs(f(p) - g(p))
        return float(acc / budget * V)
    raise InvalidArgument(f"unknown method {method!r}")


def l1_grid_values(fvals: np.ndarray, gvals: np.ndarray, cell_volume: float) -> float:
    """Midpoint-rule L1 from precomputed density values on a shared grid."""
    return float(np.abs(fvals - gvals).sum() * cell_volume)


def mpel1(per_replicate_posterior_l1) -> float:
    """Mean across replicates of the posterior expected L1 distances."""
    vals = np.asarray(list(per_replicate_posterior_l1), dtype=float)
    if vals.size == 0:
        raise EmptyInput("no replicate values")
    return float(vals.mean())
