"""Deterministic multivariate Bernstein polynomial operator.

CDF approximation, the induced density as a finite mixture of Dirichlet
and Beta kernels, and closed-form marginals/conditionals for a fixed
weight assignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np
from scipy.integrate import quad
from scipy.special import betainc
from scipy.stats import beta as beta_dist

from .domain import BlockIndex, DomainSpec, MixedPoint
from .errors import (
    InvalidArgument,
    NormalizationError,
    ZeroMarginal,
)
from .kernels import (
    Cell,
    alpha_map,
    cell_of,
    dirichlet_logpdf_matrix,
    enumerate_I,
    enumerate_J,
    log_binomial_pmf,
    log_multinomial_pmf,
)

LOG_UNDERFLOW = -700.0


@dataclass(frozen=True)
class DegreeVector:
    """Polynomial degrees, one per simplex block plus one for the cube."""

    degrees: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "degrees", tuple(int(k) for k in self.degrees))

    def check(self, spec: DomainSpec) -> "DegreeVector":
        expected = spec.n_simplex + (1 if spec.cube_dim > 0 else 0)
        if len(self.degrees) != expected:
            raise InvalidArgument(f"expected {expected} degrees, got {len(self.degrees)}")
        for k, d in zip(self.degrees, spec.simplex_dims):
            if k < d:
                raise InvalidArgument(f"simplex degree {k} below block dimension {d}")
        if spec.cube_dim > 0 and self.degrees[-1] < 1:
            raise InvalidArgument("cube degree must be >= 1")
        return self

    def simplex(self, m: int) -> int:
        """Degree of 0-based simplex block m."""
        return self.degrees[m]

    def cube(self) -> int:
        return self.degrees[-1]


def _axis_layout(spec: DomainSpec, degrees: DegreeVector):
    """Per-axis lattice index lists: one axis per simplex block, one per cube coordinate."""
    degrees.check(spec)
    simplex_idx = [
        enumerate_I(d, degrees.simplex(m)) for m, d in enumerate(spec.simplex_dims)
    ]
    cube_axes = spec.cube_dim
    return simplex_idx, cube_axes


@dataclass
class WeightTable:
    """Dense mixture weights keyed by the lexicographic lattice layout.

    Axes: one per simplex block (over I_{d_m}^{k_m}) followed by one per
    cube coordinate (over {1..k_cube}).
    """

    spec: DomainSpec
    degrees: DegreeVector
    weights: np.ndarray
    simplex_indices: list = field(default=None)

    def __post_init__(self):
        simplex_idx, _ = _axis_layout(self.spec, self.degrees)
        if self.simplex_indices is None:
            self.simplex_indices = simplex_idx
        expected = tuple(len(ix) for ix in simplex_idx) + (self.degrees.cube(),) * self.spec.cube_dim
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != expected:
            raise InvalidArgument(
                f"weight tensor has shape {self.weights.shape}, expected {expected}"
            )
        if np.any(self.weights < -1e-14):
            raise InvalidArgument("weights must be non-negative")
        if abs(self.weights.sum() - 1.0) > 1e-10:
            raise NormalizationError(f"weights sum to {self.weights.sum()}")
        self._alphas = self._build_alphas()

    def _build_alphas(self):
        alphas = []
        for m, d in enumerate(self.spec.simplex_dims):
            k = self.degrees.simplex(m)
            alphas.append(np.array([alpha_map(k, d, j) for j in self.simplex_indices[m]]))
        if self.spec.cube_dim > 0:
            k = self.degrees.cube()
            j = np.arange(1, k + 1, dtype=float)
            cube_alpha = np.column_stack([j, k - j + 1.0])
            alphas.extend([cube_alpha] * self.spec.cube_dim)
        return alphas

    @property
    def n_axes(self) -> int:
        return self.weights.ndim

    def axis_log_kernels(self, point: MixedPoint) -> list[np.ndarray]:
        """Per-axis log kernel vectors evaluated at one point."""
        out = []
        for m, d in enumerate(self.spec.simplex_dims):
            x = point.simplex_blocks[m]
            logx = _simplex_log_coords(x).reshape(1, -1)
            out.append(dirichlet_logpdf_matrix(self._alphas[m], logx)[0])
        for l in range(self.spec.cube_dim):
            x = point.cube_block[l]
            logx = np.array([[_safe_log(x), _safe_log(1.0 - x)]])
            out.append(dirichlet_logpdf_matrix(self._alphas[self.spec.n_simplex + l], logx)[0])
        return out


def _safe_log(v: float) -> float:
    return math.log(v) if v > 0.0 else -np.inf


def _simplex_log_coords(x: np.ndarray) -> np.ndarray:
    full = np.append(x, 1.0 - np.sum(x))
    with np.errstate(divide="ignore"):
        return np.where(full > 0.0, np.log(np.maximum(full, 1e-300)), -np.inf)


def _contract(weights: np.ndarray, vectors: list) -> float:
    """Contract a weight tensor with one vector (or None = sum out) per axis."""
    t = weights
    for vec in vectors:
        if vec is None:
            t = t.sum(axis=0)
        else:
            t = np.tensordot(np.asarray(vec), t, axes=(0, 0))
    return t


def mbp_cdf(F_cdf, degrees: DegreeVector, x: MixedPoint, spec: DomainSpec) -> float:
    """Finite Bernstein sum approximating the CDF F at x.

    F_cdf is called at lattice points j_m/(k_m - d_m + 1) (simplex blocks,
    clipped to [0,1] coordinatewise) and j/k (cube coordinates).
    """
    degrees.check(spec)
    simplex_J = [enumerate_J(d, degrees.simplex(m)) for m, d in enumerate(spec.simplex_dims)]
    cube_k = degrees.cube() if spec.cube_dim > 0 else 0
    shape = tuple(len(J) for J in simplex_J) + (cube_k + 1,) * spec.cube_dim

    # F depends only on the lattice, not on x; the tensor could be cached by
    # the caller across evaluation points via functools if needed.
    F_tensor = np.empty(shape)
    simplex_pts = []
    for m, (J, d) in enumerate(zip(simplex_J, spec.simplex_dims)):
        k_eff = degrees.simplex(m) - d + 1
        simplex_pts.append([np.clip(np.asarray(j, dtype=float) / k_eff, 0.0, 1.0) for j in J])
    cube_pts = np.arange(cube_k + 1) / cube_k if spec.cube_dim > 0 else None
    for idx in np.ndindex(shape):
        blocks = tuple(
            simplex_pts[m][idx[m]] for m in range(spec.n_simplex)
        )
        cube = (
            np.array([cube_pts[idx[spec.n_simplex + l]] for l in range(spec.cube_dim)])
            if spec.cube_dim
            else np.empty(0)
        )
        F_tensor[idx] = F_cdf(MixedPoint(blocks, cube))

    vectors = []
    for m, (J, d) in enumerate(zip(simplex_J, spec.simplex_dims)):
        k = degrees.simplex(m)
        xm = x.simplex_blocks[m]
        vectors.append(np.array([math.exp(log_multinomial_pmf(j, k, xm)) for j in J]))
    for l in range(spec.cube_dim):
        xv = x.cube_block[l]
        vectors.append(
            np.array([math.exp(log_binomial_pmf(j, cube_k, xv)) for j in range(cube_k + 1)])
        )
    return float(_contract(F_tensor, vectors))


def composite_cells(spec: DomainSpec, degrees: DegreeVector):
    """Iterate (tensor_index, cells_per_block) over the weight-tensor layout."""
    simplex_idx, _ = _axis_layout(spec, degrees)
    cube_k = degrees.cube() if spec.cube_dim > 0 else 0
    shape = tuple(len(ix) for ix in simplex_idx) + (cube_k,) * spec.cube_dim
    for idx in np.ndindex(shape):
        cells = []
        for m, d in enumerate(spec.simplex_dims):
            k_eff = degrees.simplex(m) - d + 1
            cells.append(cell_of(simplex_idx[m][idx[m]], k_eff))
        if spec.cube_dim:
            j_cube = tuple(idx[spec.n_simplex + l] + 1 for l in range(spec.cube_dim))
            cells.append(cell_of(j_cube, cube_k))
        yield idx, tuple(cells)


def weights_from_measure(F_measure, degrees: DegreeVector, spec: DomainSpec) -> WeightTable:
    """Build the weight tensor by evaluating a measure on each lattice cell.

    F_measure maps a tuple of Cells (one per block; the cube block cell is
    cube_dim-dimensional) to the probability of their product.
    """
    degrees.check(spec)
    simplex_idx, _ = _axis_layout(spec, degrees)
    cube_k = degrees.cube() if spec.cube_dim > 0 else 0
    shape = tuple(len(ix) for ix in simplex_idx) + (cube_k,) * spec.cube_dim
    w = np.empty(shape)
    for idx, cells in composite_cells(spec, degrees):
        w[idx] = F_measure(cells)
    total = w.sum()
    if abs(total - 1.0) > 1e-8:
        raise NormalizationError(f"cell masses sum to {total}")
    return WeightTable(spec, degrees, w / total)


def mbp_log_density(w: WeightTable, x: MixedPoint) -> float:
    logvecs = w.axis_log_kernels(x)
    vecs = [np.exp(v) for v in logvecs]
    val = _contract(w.weights, vecs)
    return math.log(val) if val > 0.0 else -np.inf


def mbp_density(w: WeightTable, x: MixedPoint) -> float:
    vecs = [np.exp(v) for v in w.axis_log_kernels(x)]
    return float(_contract(w.weights, vecs))


def mbp_density_batch(w: WeightTable, simplex, cube) -> np.ndarray:
    """Density at many points; simplex is a list of (P, d_m) arrays, cube (P, d3)."""
    spec = w.spec
    P = cube.shape[0] if spec.cube_dim else simplex[0].shape[0]
    mats = []
    for m in range(spec.n_simplex):
        xm = np.atleast_2d(simplex[m])
        full = np.column_stack([xm, 1.0 - xm.sum(axis=1)])
        with np.errstate(divide="ignore"):
            logx = np.log(np.maximum(full, 1e-300))
        mats.append(np.exp(dirichlet_logpdf_matrix(w._alphas[m], logx)))
    for l in range(spec.cube_dim):
        xv = cube[:, l]
        with np.errstate(divide="ignore"):
            logx = np.column_stack(
                [np.log(np.maximum(xv, 1e-300)), np.log(np.maximum(1.0 - xv, 1e-300))]
            )
        mats.append(np.exp(dirichlet_logpdf_matrix(w._alphas[spec.n_simplex + l], logx)))

    # single batched contraction: one shared axis letter per tensor axis plus
    # a point axis, e.g. "ab,za,zb->z" for one simplex block and one cube
    # coordinate
    letters = "abcdefghij"[: w.n_axes]
    spec_str = letters + "," + ",".join("z" + c for c in letters) + "->z"
    return np.einsum(spec_str, w.weights, *mats, optimize=True)


def _block_axes(spec: DomainSpec, block: int) -> list[int]:
    """Tensor axes owned by the 1-based block index."""
    if 1 <= block <= spec.n_simplex:
        return [block - 1]
    if block == spec.n_simplex + 1 and spec.cube_dim > 0:
        return list(range(spec.n_simplex, spec.n_simplex + spec.cube_dim))
    raise InvalidArgument(f"block index {block} out of range")


def _off_block_vectors(w: WeightTable, block: int, x: MixedPoint):
    """Kernel vectors for all axes except those of `block` (None there)."""
    drop_axes = set(_block_axes(w.spec, block))
    logvecs = w.axis_log_kernels(x)
    return [None if a in drop_axes else np.exp(logvecs[a]) for a in range(w.n_axes)]


def mbp_marginal(w: WeightTable, drop: BlockIndex, x_minus: MixedPoint) -> float:
    """Marginal density with block `drop` integrated out.

    Only the blocks other than `drop` are read from x_minus (the dropped
    block entries may hold anything).  Dropping the only block returns 1.
    """
    vecs = _off_block_vectors(w, drop.index, x_minus)
    return float(_contract(w.weights, vecs))


def mbp_conditional(
    w: WeightTable, target: BlockIndex, x_target: MixedPoint, x_minus: MixedPoint
) -> float:
    """Conditional density of block `target` given the remaining blocks.

    Computed through the normalized cell-weight form: a single pass builds
    the shared normalizer instead of dividing two independent evaluations.
    """
    spec = w.spec
    target_axes = _block_axes(spec, target.index)
    vecs = _off_block_vectors(w, target.index, x_minus)
    # contract non-target axes only, keeping target axes intact
    t = w.weights
    for axis in reversed(range(w.n_axes)):
        if vecs[axis] is None:
            continue
        t = np.tensordot(t, vecs[axis], axes=(axis, 0))
    marg = t.sum()
    if marg <= 0.0 or math.log(marg) < LOG_UNDERFLOW:
        raise ZeroMarginal("conditioning density underflows")
    logvecs = w.axis_log_kernels(x_target)
    tvecs = [np.exp(logvecs[a]) for a in target_axes]
    num = _contract(t, tvecs)
    return float(num / marg)


# --- measure oracles ---------------------------------------------------------


def product_measure(block_masses):
    """Measure from independent per-block cell-mass callables."""

    def measure(cells):
        v = 1.0
        for fn, cell in zip(block_masses, cells):
            v *= fn(cell)
        return v

    return measure


def mixture_measure(weights, measures):
    """Convex combination of measures."""
    weights = np.asarray(weights, dtype=float)

    def measure(cells):
        return float(sum(w * m(cells) for w, m in zip(weights, measures)))

    return measure


def beta_cell_mass(a: float, b: float):
    """Cell-mass callable for a Beta(a,b) coordinate (or a product of them)."""

    def mass(cell: Cell) -> float:
        v = 1.0
        for lo, hi in zip(cell.lows, cell.highs):
            v *= betainc(a, b, min(hi, 1.0)) - betainc(a, b, max(lo, 0.0))
        return float(v)

    return mass


def beta_product_cell_mass(params):
    """Cell mass for independent Beta coordinates with per-coordinate (a,b)."""

    def mass(cell: Cell) -> float:
        v = 1.0
        for (a, b), lo, hi in zip(params, cell.lows, cell.highs):
            v *= betainc(a, b, min(hi, 1.0)) - betainc(a, b, max(lo, 0.0))
        return float(v)

    return mass


def dirichlet_box_prob(alpha, lows, highs) -> float:
    """P(lo < X <= hi) for X ~ Dirichlet(alpha) on S_d (free coordinates).

    d = 1 is an incomplete-beta difference; d = 2 reduces the inner
    coordinate analytically and quadratures the outer one.
    """
    alpha = np.asarray(alpha, dtype=float)
    d = len(alpha) - 1
    lows = np.clip(np.asarray(lows, dtype=float), 0.0, 1.0)
    highs = np.clip(np.asarray(highs, dtype=float), 0.0, 1.0)
    if d == 1:
        return float(betainc(alpha[0], alpha[1], highs[0]) - betainc(alpha[0], alpha[1], lows[0]))
    if d == 2:
        a1, a2, a3 = alpha

        def integrand(x1):
            rem = 1.0 - x1
            if rem <= 0.0:
                return 0.0
            t_hi = min(highs[1] / rem, 1.0)
            t_lo = min(max(lows[1] / rem, 0.0), 1.0)
            if t_hi <= t_lo:
                return 0.0
            outer = beta_dist.pdf(x1, a1, a2 + a3)
            return outer * (betainc(a2, a3, t_hi) - betainc(a2, a3, t_lo))

        val, _ = quad(integrand, lows[0], highs[0], limit=200)
        return float(val)
    # generic fallback: stratified Monte Carlo inside the box
    rng = np.random.default_rng(0)
    n = 20000
    pts = rng.uniform(lows, highs, size=(n, d))
    inside = pts.sum(axis=1) < 1.0
    from .kernels import log_dirichlet_pdf

    vals = np.zeros(n)
    for i in np.nonzero(inside)[0]:
        vals[i] = math.exp(log_dirichlet_pdf(pts[i], alpha))
    box_vol = float(np.prod(highs - lows))
    return float(vals.mean() * box_vol)


def dirichlet_cell_mass(alpha):
    # memoized: a product measure re-queries each simplex cell once per
    # composite cell, so uncached quadrature cost would scale with the full
    # tensor size instead of the per-block cell count
    alpha = tuple(np.asarray(alpha, dtype=float))

    @lru_cache(maxsize=None)
    def mass(cell: Cell) -> float:
        return dirichlet_box_prob(alpha, cell.lows, cell.highs)

    return mass


def measure_from_density(density_fn, spec: DomainSpec, degrees: DegreeVector, budget: int = 100_000, seed: int = 0):
    """Stratified Monte Carlo cell masses for an arbitrary density on the space.

    density_fn takes a MixedPoint and must return 0 outside the simplex
    constraints; the box volume times the in-cell mean estimates the mass.
    """
    n_cells = 1
    simplex_idx, _ = _axis_layout(spec, degrees)
    for ix in simplex_idx:
        n_cells *= len(ix)
    if spec.cube_dim:
        n_cells *= degrees.cube() ** spec.cube_dim
    per_cell = max(budget // n_cells, 32)
    rng = np.random.default_rng(seed)

    def measure(cells):
        lows = np.concatenate([np.asarray(c.lows) for c in cells])
        highs = np.concatenate([np.asarray(c.highs) for c in cells])
        pts = rng.uniform(lows, highs, size=(per_cell, len(lows)))
        vals = np.empty(per_cell)
        from .domain import point_from_flat

        for i in range(per_cell):
            vals[i] = density_fn(point_from_flat(np.clip(pts[i], 0.0, 1.0), spec))
        return float(vals.mean() * np.prod(highs - lows))

    return measure
