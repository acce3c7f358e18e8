"""Finite truncated mixture model: degree priors, stick-breaking weights,
uniform base measure, the ceiling-mapped kernel, and the mixture likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import poisson

from .bernstein import DegreeVector
from .domain import DomainSpec, MixedPoint, clamp_interior
from .errors import Infeasible, InvalidArgument, OutOfSupport
from .kernels import alpha_map, log_dirichlet_pdf


def stick_to_weights(v: np.ndarray) -> np.ndarray:
    """Stick-breaking weights: w_j = v_j prod_{l<j}(1-v_l), last takes the rest."""
    v = np.asarray(v, dtype=float)
    n = v.shape[0] + 1
    w = np.empty(n)
    remaining = np.concatenate([[1.0], np.cumprod(1.0 - v)])
    w[:-1] = v * remaining[:-1]
    w[-1] = 1.0 - w[:-1].sum()
    return w


def ceil_map(k_l: int, d_l: int, theta_block) -> tuple[int, ...]:
    """Map a continuous simplex atom to a lattice index via ceil(k * theta).

    Repair keeps the result inside I_{d}^{k}: zero entries are lifted to 1
    (decrementing the largest other entry), then while the sum exceeds k
    the largest entry is decremented, ties resolved toward the highest
    coordinate index.
    """
    if k_l < d_l:
        raise Infeasible(f"degree {k_l} cannot host {d_l} positive entries")
    theta = np.asarray(theta_block, dtype=float)
    j = np.ceil(k_l * theta).astype(int)
    j = np.minimum(j, k_l)
    for idx in np.nonzero(j < 1)[0]:
        j[idx] = 1
        others = [i for i in range(len(j)) if i != idx]
        if others and j.sum() > k_l:
            big = max(others, key=lambda i: (j[i], i))
            j[big] -= 1
    while j.sum() > k_l:
        big = max(range(len(j)), key=lambda i: (j[i], i))
        j[big] -= 1
    return tuple(int(v) for v in j)


def cube_ceil(k: int, theta: np.ndarray) -> np.ndarray:
    """Per-coordinate ceil(k * theta), clamped into {1..k}."""
    j = np.ceil(k * np.asarray(theta, dtype=float)).astype(int)
    return np.clip(j, 1, k)


# --- degree priors -----------------------------------------------------------


@dataclass(frozen=True)
class TruncatedPoisson:
    """Independent Poisson(lambda_l) degrees, renormalized over {d_l, d_l+1, ...}."""

    lams: tuple[float, ...]

    def __post_init__(self):
        if any(l <= 0 for l in self.lams):
            raise InvalidArgument("Poisson rates must be positive")
        object.__setattr__(self, "lams", tuple(float(l) for l in self.lams))

    def block_logpmf(self, block: int, k: int, lower: int) -> float:
        if k < lower:
            raise OutOfSupport(f"degree {k} below lower bound {lower}")
        lam = self.lams[block]
        return float(poisson.logpmf(k, lam) - math.log(poisson.sf(lower - 1, lam)))

    def block_sample(self, block: int, lower: int, rng) -> int:
        lam = self.lams[block]
        while True:
            k = int(rng.poisson(lam))
            if k >= lower:
                return k


@dataclass(frozen=True)
class TailModified:
    """Poisson head with an explicitly super-exponentially decaying tail.

    The head keeps the raw Poisson pmf below k_tilde; the mass at k_tilde
    absorbs the normalization remainder, and beyond it the survival
    function equals (1 - C) exp(-lambda (j + k_tilde)^exponent).
    """

    lams: tuple[float, ...]
    k_tilde: int = 30
    exponent: int = 2  # (M+1) * d for the governing space; set by make_tail_modified

    def __post_init__(self):
        if any(l <= 0 for l in self.lams):
            raise InvalidArgument("rates must be positive")
        if self.k_tilde < 2:
            raise InvalidArgument("k_tilde too small")
        object.__setattr__(self, "lams", tuple(float(l) for l in self.lams))

    def _head_mass(self, block: int, lower: int) -> float:
        lam = self.lams[block]
        ks = np.arange(lower, self.k_tilde)
        return float(poisson.pmf(ks, lam).sum())

    def tail_survival(self, block: int, j: int, lower: int = 1) -> float:
        """P(k > k_tilde + j) for j >= 1 (closed form)."""
        lam = self.lams[block]
        C = self._head_mass(block, lower)
        return float((1.0 - C) * math.exp(-lam * (j + self.k_tilde) ** self.exponent))

    def block_logpmf(self, block: int, k: int, lower: int) -> float:
        if k < lower:
            raise OutOfSupport(f"degree {k} below lower bound {lower}")
        lam = self.lams[block]
        C = self._head_mass(block, lower)
        if k < self.k_tilde:
            return float(poisson.logpmf(k, lam))
        e = lambda j: math.exp(-lam * (j + self.k_tilde) ** self.exponent)
        if k == self.k_tilde:
            # remainder so the pmf sums to one given the closed-form tail
            p = 1.0 - C - 2.0 * (1.0 - C) * e(1)
            return math.log(p) if p > 0 else -np.inf
        j = k - self.k_tilde
        if j == 1:
            p = (1.0 - C) * e(1)
        else:
            p = (1.0 - C) * (e(j - 1) - e(j))
        return math.log(p) if p > 0 else -np.inf

    def block_sample(self, block: int, lower: int, rng) -> int:
        ks = np.arange(lower, self.k_tilde + 1)
        pmf = np.exp([self.block_logpmf(block, int(k), lower) for k in ks])
        # tail mass beyond k_tilde is numerically zero at default settings
        pmf = pmf / pmf.sum()
        return int(rng.choice(ks, p=pmf))


def make_tail_modified(spec: DomainSpec, lams, k_tilde: int = 30) -> TailModified:
    exponent = (spec.n_simplex + 1) * spec.total_dim
    return TailModified(tuple(lams), k_tilde, exponent)


def degree_prior_logpmf(prior, k: DegreeVector, spec: DomainSpec) -> float:
    """Joint log pmf of a degree vector under a per-block prior."""
    k.check(spec)
    total = 0.0
    for m, d in enumerate(spec.simplex_dims):
        total += prior.block_logpmf(m, k.simplex(m), d)
    if spec.cube_dim > 0:
        total += prior.block_logpmf(spec.n_simplex, k.cube(), 1)
    return total


def sample_degrees(prior, spec: DomainSpec, rng) -> DegreeVector:
    ks = [prior.block_sample(m, d, rng) for m, d in enumerate(spec.simplex_dims)]
    if spec.cube_dim > 0:
        ks.append(prior.block_sample(spec.n_simplex, 1, rng))
    return DegreeVector(tuple(ks))


# --- model configuration and state -------------------------------------------


@dataclass(frozen=True)
class ModelConfig:
    spec: DomainSpec
    truncation: int = 25
    degree_prior: object = None  # TruncatedPoisson or TailModified
    precision_shape: float = 1.0
    precision_rate: float = 1.0
    interior_epsilon: float = 1e-6

    def __post_init__(self):
        if self.truncation < 2:
            raise InvalidArgument("truncation must be >= 2")
        if self.precision_shape <= 0 or self.precision_rate <= 0:
            raise InvalidArgument("Gamma hyperparameters must be positive")
        if self.degree_prior is None:
            n_blocks = self.spec.n_simplex + (1 if self.spec.cube_dim > 0 else 0)
            object.__setattr__(self, "degree_prior", TruncatedPoisson((15.0,) * n_blocks))


@dataclass
class MixtureState:
    """One sampler state for the truncated model."""

    v: np.ndarray  # (N-1,) stick variables
    w: np.ndarray  # (N,) weights
    theta_simplex: list  # per simplex block, (N, d_m)
    theta_cube: np.ndarray  # (N, cube_dim)
    xi: np.ndarray  # (n,) labels in {0..N-1} (0-based internally)
    M0: float
    k: DegreeVector

    @property
    def truncation(self) -> int:
        return self.w.shape[0]

    def atom(self, j: int) -> MixedPoint:
        return MixedPoint(
            tuple(t[j] for t in self.theta_simplex),
            self.theta_cube[j] if self.theta_cube.size else np.empty(0),
        )

    def atoms(self):
        return [self.atom(j) for j in range(self.truncation)]

    def copy(self) -> "MixtureState":
        return MixtureState(
            self.v.copy(),
            self.w.copy(),
            [t.copy() for t in self.theta_simplex],
            self.theta_cube.copy(),
            self.xi.copy(),
            self.M0,
            self.k,
        )

    def check(self, spec: DomainSpec) -> None:
        if abs(self.w.sum() - 1.0) > 1e-12:
            raise InvalidArgument(f"weights sum to {self.w.sum()}")
        if np.any(self.w < -1e-15):
            raise InvalidArgument("negative mixture weight")
        if self.xi.size and (self.xi.min() < 0 or self.xi.max() >= self.truncation):
            raise InvalidArgument("label out of range")
        self.k.check(spec)
        if self.M0 <= 0:
            raise InvalidArgument("precision must be positive")


def sample_prior(config: ModelConfig, rng) -> MixtureState:
    """Draw a state from the prior (no observations, empty label vector)."""
    spec = config.spec
    N = config.truncation
    M0 = float(rng.gamma(config.precision_shape, 1.0 / config.precision_rate))
    v = rng.beta(1.0, M0, size=N - 1)
    w = stick_to_weights(v)
    theta_simplex = [
        rng.dirichlet(np.ones(d + 1), size=N)[:, :d] for d in spec.simplex_dims
    ]
    theta_cube = rng.uniform(size=(N, spec.cube_dim))
    k = sample_degrees(config.degree_prior, spec, rng)
    eps = config.interior_epsilon
    clamped = [
        clamp_interior(
            MixedPoint(tuple(t[j] for t in theta_simplex), theta_cube[j]),
            spec,
            eps,
        )
        for j in range(N)
    ]
    theta_simplex = [
        np.array([clamped[j].simplex_blocks[m] for j in range(N)])
        for m in range(spec.n_simplex)
    ]
    theta_cube = np.array([clamped[j].cube_block for j in range(N)]).reshape(N, spec.cube_dim)
    return MixtureState(v, w, theta_simplex, theta_cube, np.empty(0, dtype=int), M0, k)


def kernel_logpdf(x: MixedPoint, theta: MixedPoint, k: DegreeVector, spec: DomainSpec) -> float:
    """Log kernel density: ceiling-mapped Dirichlet/Beta product at atom theta."""
    total = 0.0
    for m, d in enumerate(spec.simplex_dims):
        km = k.simplex(m)
        j = ceil_map(km, d, theta.simplex_blocks[m])
        alpha = alpha_map(km, d, j)
        total += log_dirichlet_pdf(x.simplex_blocks[m], alpha)
    if spec.cube_dim > 0:
        kc = k.cube()
        js = cube_ceil(kc, theta.cube_block)
        for l, j in enumerate(js):
            a, b = float(j), float(kc - j + 1)
            total += log_dirichlet_pdf([x.cube_block[l]], [a, b])
    return total


def mixture_logpdf(x: MixedPoint, state: MixtureState, spec: DomainSpec) -> float:
    """log sum_j w_j K(x | theta_j, k) via log-sum-exp."""
    with np.errstate(divide="ignore"):
        logw = np.log(np.maximum(state.w, 0.0))
    logk = np.array(
        [
            kernel_logpdf(x, state.atom(j), state.k, spec) if state.w[j] > 0 else -np.inf
            for j in range(state.truncation)
        ]
    )
    return float(logsumexp(logw + logk))


def atom_alphas(state: MixtureState, spec: DomainSpec):
    """Per-block kernel parameter matrices for all atoms.

    Returns a list: one (N, d_m + 1) Dirichlet parameter matrix per simplex
    block, then one (N, 2) Beta parameter matrix per cube coordinate.
    """
    N = state.truncation
    out = []
    for m, d in enumerate(spec.simplex_dims):
        km = state.k.simplex(m)
        rows = np.empty((N, d + 1))
        for j in range(N):
            rows[j] = alpha_map(km, d, ceil_map(km, d, state.theta_simplex[m][j]))
        out.append(rows)
    if spec.cube_dim > 0:
        kc = state.k.cube()
        for l in range(spec.cube_dim):
            js = cube_ceil(kc, state.theta_cube[:, l]).astype(float)
            out.append(np.column_stack([js, kc - js + 1.0]))
    return out
