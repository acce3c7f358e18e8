"""Log-space density primitives and the lattice index machinery.

All pmf/pdf values are computed with log-gamma arithmetic; mixtures are
reduced with log-sum-exp.  Index sets are enumerated lexicographically
(the order is part of the contract: weight tensors elsewhere rely on it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.special import gammaln

from .errors import InvalidArgument, SizeLimit

ENUMERATION_CAP = 10**7


@dataclass(frozen=True)
class Cell:
    """Axis-aligned half-open box prod_l ((j_l-1)/k, j_l/k]."""

    lows: tuple[float, ...]
    highs: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.lows)

    def volume(self) -> float:
        return float(np.prod(np.subtract(self.highs, self.lows)))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x > self.lows) and np.all(x <= self.highs))


def log_binomial_pmf(j: int, k: int, x: float) -> float:
    """log of C(k,j) x^j (1-x)^(k-j); -inf at zero-probability boundaries."""
    if not (0 <= j <= k):
        raise InvalidArgument(f"need 0 <= j <= k, got j={j}, k={k}")
    if not (0.0 <= x <= 1.0):
        raise InvalidArgument(f"x={x} outside [0,1]")
    if x == 0.0:
        return 0.0 if j == 0 else -np.inf
    if x == 1.0:
        return 0.0 if j == k else -np.inf
    return (
        gammaln(k + 1)
        - gammaln(j + 1)
        - gammaln(k - j + 1)
        + j * math.log(x)
        + (k - j) * math.log1p(-x)
    )


def log_multinomial_pmf(j, k: int, x) -> float:
    """log multinomial pmf of counts (j, k - sum j) under probs (x, 1 - sum x)."""
    j = np.asarray(j, dtype=int)
    x = np.asarray(x, dtype=float)
    if j.shape != x.shape:
        raise InvalidArgument("index and probability vectors differ in length")
    if np.any(j < 0) or j.sum() > k:
        raise InvalidArgument(f"counts {j} invalid for k={k}")
    rest = k - j.sum()
    xrest = 1.0 - x.sum()
    counts = np.append(j, rest)
    probs = np.append(x, xrest)
    log_coef = gammaln(k + 1) - gammaln(counts + 1).sum()
    terms = np.zeros_like(probs)
    for i, (c, p) in enumerate(zip(counts, probs)):
        if c == 0:
            continue
        if p <= 0.0:
            return -np.inf
        terms[i] = c * math.log(p)
    return float(log_coef + terms.sum())


def log_dirichlet_pdf(x, alpha) -> float:
    """log Dirichlet density on S_d parameterized by the d free coordinates."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0.0):
        raise InvalidArgument("Dirichlet parameters must be positive")
    if alpha.shape != (x.shape[0] + 1,):
        raise InvalidArgument("alpha must have length d + 1")
    full = np.append(x, 1.0 - x.sum())
    log_norm = gammaln(alpha.sum()) - gammaln(alpha).sum()
    val = log_norm
    for xi, ai in zip(full, alpha):
        if ai == 1.0:
            continue
        if xi <= 0.0:
            return -np.inf
        val += (ai - 1.0) * math.log(xi)
    return float(val)


def log_beta_pdf(x: float, a: float, b: float) -> float:
    """log Beta(a, b) density; the d = 1 Dirichlet case."""
    return log_dirichlet_pdf([x], [a, b])


def _check_cap(count: int) -> None:
    if count > ENUMERATION_CAP:
        raise SizeLimit(f"index set of size {count} exceeds cap {ENUMERATION_CAP}")


def enumerate_J(d: int, k: int) -> list[tuple[int, ...]]:
    """All j in {0..k}^d with sum <= k, lexicographic."""
    if d < 1 or k < 0:
        raise InvalidArgument(f"need d >= 1 and k >= 0, got d={d}, k={k}")
    _check_cap(math.comb(k + d, d))
    out = []

    def rec(prefix, remaining):
        if len(prefix) == d:
            out.append(tuple(prefix))
            return
        for v in range(remaining + 1):
            rec(prefix + [v], remaining - v)

    rec([], k)
    return out


def enumerate_I(d: int, k: int) -> list[tuple[int, ...]]:
    """All j in J_d^k with strictly positive entries; |I_d^k| = C(k, d)."""
    if k < d:
        return []
    _check_cap(math.comb(k, d))
    out = []

    def rec(prefix, remaining):
        if len(prefix) == d:
            out.append(tuple(prefix))
            return
        slots_left = d - len(prefix) - 1
        for v in range(1, remaining - slots_left + 1):
            rec(prefix + [v], remaining - v)

    rec([], k)
    return out


def alpha_map(block_degree: int, block_dim: int, j) -> np.ndarray:
    """Dirichlet parameters (j_1..j_d, k_l + 1 - sum j) for a lattice index.

    Entries are >= 1 and sum to block_degree + 1 whenever j lies in
    I_{d}^{k_l}.
    """
    j = np.asarray(j, dtype=float)
    if j.shape != (block_dim,):
        raise InvalidArgument(f"index has length {j.shape}, expected {block_dim}")
    s = j.sum()
    if s > block_degree:
        raise InvalidArgument(f"sum of index {j} exceeds degree {block_degree}")
    return np.append(j, block_degree + 1 - s)


def cell_of(j, k_eff: int) -> Cell:
    """Half-open cell ((j_l-1)/k_eff, j_l/k_eff] per coordinate."""
    j = np.asarray(j, dtype=int)
    if np.any(j < 1) or np.any(j > k_eff):
        raise InvalidArgument(f"entries of {j} outside 1..{k_eff}")
    lows = tuple((j - 1) / k_eff)
    highs = tuple(j / k_eff)
    return Cell(lows, highs)


def cube_index_iter(k: int, d: int):
    """Lexicographic iterator over {1..k}^d (cube-block lattice indices)."""
    return product(range(1, k + 1), repeat=d)


# --- vectorized helpers used by the mixture machinery -----------------------


def dirichlet_log_norm(alphas: np.ndarray) -> np.ndarray:
    """Row-wise log normalizing constant for an (L, d+1) parameter matrix."""
    alphas = np.atleast_2d(alphas)
    return gammaln(alphas.sum(axis=1)) - gammaln(alphas).sum(axis=1)


def dirichlet_logpdf_matrix(alphas: np.ndarray, logx: np.ndarray) -> np.ndarray:
    """Dirichlet log densities for L parameter rows at P points.

    alphas: (L, d+1); logx: (P, d+1) holding (log x_1..log x_d, log(1-sum x)).
    Returns (P, L).
    """
    alphas = np.atleast_2d(alphas)
    return logx @ (alphas - 1.0).T + dirichlet_log_norm(alphas)
