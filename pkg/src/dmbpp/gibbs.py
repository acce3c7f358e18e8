"""Blocked Gibbs / Metropolis-within-Gibbs sampler for the truncated model.

Update order is fixed (labels, sticks, atoms, degrees, precision) and each
chain owns an RNG stream derived from the master seed by a splitmix64 hash,
so runs are bitwise reproducible and chains can run in parallel.
"""

from __future__ import annotations

import csv
import pickle
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.special import gammaln

from .bernstein import DegreeVector
from .domain import Dataset, DomainSpec
from .errors import DegenerateLikelihood, InvalidArgument
from .kernels import alpha_map
from .model import (
    MixtureState,
    ModelConfig,
    atom_alphas,
    ceil_map,
    cube_ceil,
    sample_prior,
    stick_to_weights,
)

MAGIC = b"DMBPP1"


@dataclass(frozen=True)
class SamplerConfig:
    chain_length: int = 2200
    burn_in: int = 2000
    thinning: int = 10
    n_chains: int = 5
    seed: int = 0
    atom_step: float = 0.25
    degree_step: int = 1
    atom_proposal_mix: float = 0.3  # probability of an independence proposal
    n_jobs: int = -1

    def __post_init__(self):
        if not (0 <= self.burn_in < self.chain_length):
            raise InvalidArgument("need burn_in < chain_length")
        if self.thinning < 1 or self.degree_step < 1:
            raise InvalidArgument("thinning and degree_step must be >= 1")

    @property
    def retained_per_chain(self) -> int:
        return (self.chain_length - self.burn_in) // self.thinning


@dataclass
class PosteriorDraws:
    states: list
    sampler_config: SamplerConfig
    model_config: ModelConfig
    acceptance: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.states)


def splitmix64(x: int) -> int:
    """Fixed 64-bit mixing hash used to derive per-chain seeds."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def chain_seed(master_seed: int, chain_index: int) -> int:
    return splitmix64((master_seed & 0xFFFFFFFFFFFFFFFF) ^ splitmix64(chain_index + 1))


class DataLogs:
    """Per-block log-coordinate matrices; the kernel is exponential-family
    in these, so cluster updates reduce to sufficient-statistic dot products."""

    def __init__(self, data: Dataset):
        spec = data.spec
        self.spec = spec
        self.n = data.n
        self.blocks = []  # simplex blocks: (n, d_m + 1); cube coords: (n, 2)
        for m in range(spec.n_simplex):
            xm = data.simplex[m]
            full = np.column_stack([xm, 1.0 - xm.sum(axis=1)])
            self.blocks.append(np.log(np.maximum(full, 1e-300)))
        for l in range(spec.cube_dim):
            xv = data.cube[:, l]
            self.blocks.append(
                np.log(np.maximum(np.column_stack([xv, 1.0 - xv]), 1e-300))
            )

    def loglik_matrix(self, alphas) -> np.ndarray:
        """(n, N) log kernel values for all observations and atoms."""
        out = np.zeros((self.n, alphas[0].shape[0]))
        for L, A in zip(self.blocks, alphas):
            norm = gammaln(A.sum(axis=1)) - gammaln(A).sum(axis=1)
            out += L @ (A - 1.0).T + norm
        return out

    def cluster_stats(self, xi: np.ndarray, N: int):
        """Per-atom sums of the log matrices plus cluster sizes."""
        counts = np.bincount(xi, minlength=N).astype(float)
        sums = []
        for L in self.blocks:
            S = np.zeros((N, L.shape[1]))
            np.add.at(S, xi, L)
            sums.append(S)
        return counts, sums


def _block_loglik(alpha_rows: np.ndarray, counts: np.ndarray, sums: np.ndarray) -> np.ndarray:
    """Per-atom log likelihood contribution of one block given suff stats."""
    norm = gammaln(alpha_rows.sum(axis=1)) - gammaln(alpha_rows).sum(axis=1)
    return counts * norm + ((alpha_rows - 1.0) * sums).sum(axis=1)


# --- individual updates -------------------------------------------------------


def update_labels(state: MixtureState, data, rng, logs: DataLogs | None = None) -> MixtureState:
    """Resample labels from their categorical full conditional."""
    logs = logs or DataLogs(data)
    if logs.n == 0:
        return state
    new = state.copy()
    alphas = atom_alphas(state, logs.spec)
    logk = logs.loglik_matrix(alphas)
    with np.errstate(divide="ignore"):
        logits = logk + np.log(np.maximum(state.w, 0.0))
    bad = ~np.isfinite(logits).any(axis=1)
    if bad.any():
        raise DegenerateLikelihood(f"{bad.sum()} observations with zero likelihood everywhere")
    gumbel = rng.gumbel(size=logits.shape)
    new.xi = np.argmax(np.where(np.isfinite(logits), logits + gumbel, -np.inf), axis=1)
    return new


def update_sticks(state: MixtureState, rng) -> MixtureState:
    """Conjugate Beta update of the stick variables given the labels."""
    new = state.copy()
    N = state.truncation
    counts = np.bincount(state.xi, minlength=N).astype(float)
    tail = np.concatenate([np.cumsum(counts[::-1])[::-1][1:], [0.0]])[: N - 1]
    new.v = rng.beta(1.0 + counts[: N - 1], state.M0 + tail)
    new.w = stick_to_weights(new.v)
    return new


def _alr_log_jacobian(simplex_blocks, cube_block, spec: DomainSpec) -> float:
    val = 0.0
    for t in simplex_blocks:
        val += np.log(t).sum() + np.log(1.0 - t.sum())
    if spec.cube_dim:
        val += (np.log(cube_block) + np.log1p(-cube_block)).sum()
    return float(val)


def _atom_loglik(spec, k: DegreeVector, simplex_blocks, cube_block, counts_j, sums_j):
    """Log likelihood of one atom's cluster given its continuous location."""
    total = 0.0
    bi = 0
    for m, d in enumerate(spec.simplex_dims):
        km = k.simplex(m)
        alpha = alpha_map(km, d, ceil_map(km, d, simplex_blocks[m]))
        norm = gammaln(alpha.sum()) - gammaln(alpha).sum()
        total += counts_j * norm + (alpha - 1.0) @ sums_j[bi]
        bi += 1
    if spec.cube_dim:
        kc = k.cube()
        js = cube_ceil(kc, cube_block).astype(float)
        for l in range(spec.cube_dim):
            a, b = js[l], kc - js[l] + 1.0
            norm = gammaln(a + b) - gammaln(a) - gammaln(b)
            total += counts_j * norm + (a - 1.0) * sums_j[bi][0] + (b - 1.0) * sums_j[bi][1]
            bi += 1
    return total


def update_atoms(
    state: MixtureState,
    data,
    rng,
    config: SamplerConfig,
    model_config: ModelConfig,
    logs: DataLogs | None = None,
    stats=None,
):
    """Metropolis step per atom: independence draws from the base measure mixed
    with random walks in unconstrained coordinates (Jacobian corrected)."""
    logs = logs or DataLogs(data)
    spec = logs.spec
    new = state.copy()
    N = state.truncation
    if stats is None:
        counts, sums = logs.cluster_stats(state.xi, N) if logs.n else (
            np.zeros(N),
            [np.zeros((N, L.shape[1])) for L in logs.blocks],
        )
    else:
        counts, sums = stats
    accepted = 0
    for j in range(N):
        cur_s = [t[j] for t in new.theta_simplex]
        cur_c = new.theta_cube[j] if spec.cube_dim else np.empty(0)
        sums_j = [S[j] for S in sums]
        cur_ll = _atom_loglik(spec, new.k, cur_s, cur_c, counts[j], sums_j)
        use_independence = rng.uniform() < config.atom_proposal_mix
        if use_independence:
            prop_s = [rng.dirichlet(np.ones(d + 1))[:d] for d in spec.simplex_dims]
            prop_c = rng.uniform(size=spec.cube_dim)
            log_ratio_extra = 0.0
        else:
            step = config.atom_step
            prop_s = []
            for t in cur_s:
                z = np.log(t) - np.log(1.0 - t.sum())
                z = z + step * rng.normal(size=z.shape)
                e = np.exp(z - z.max()) if z.size else z
                denom = np.exp(-z.max()) + e.sum() if z.size else 1.0
                prop_s.append(e / denom)
            if spec.cube_dim:
                zc = np.log(cur_c) - np.log1p(-cur_c) + step * rng.normal(size=spec.cube_dim)
                prop_c = 1.0 / (1.0 + np.exp(-zc))
            else:
                prop_c = np.empty(0)
            log_ratio_extra = _alr_log_jacobian(prop_s, prop_c, spec) - _alr_log_jacobian(
                cur_s, cur_c, spec
            )
        # keep proposals strictly interior so the ceiling map stays defined
        eps = model_config.interior_epsilon
        prop_s = [np.clip(t, eps, None) for t in prop_s]
        prop_s = [t if t.sum() <= 1.0 - eps else t * (1.0 - eps) / t.sum() for t in prop_s]
        prop_c = np.clip(prop_c, eps, 1.0 - eps)
        prop_ll = _atom_loglik(spec, new.k, prop_s, prop_c, counts[j], sums_j)
        log_alpha = prop_ll - cur_ll + log_ratio_extra
        if np.log(rng.uniform()) < log_alpha:
            for m in range(spec.n_simplex):
                new.theta_simplex[m][j] = prop_s[m]
            if spec.cube_dim:
                new.theta_cube[j] = prop_c
            accepted += 1
    return new, accepted / N


def update_degrees(
    state: MixtureState,
    data,
    rng,
    config: SamplerConfig,
    model_config: ModelConfig,
    logs: DataLogs | None = None,
    stats=None,
):
    """Per-block +/- step Metropolis update of the polynomial degrees."""
    logs = logs or DataLogs(data)
    spec = logs.spec
    new = state.copy()
    N = state.truncation
    if stats is None:
        counts, sums = logs.cluster_stats(state.xi, N) if logs.n else (
            np.zeros(N),
            [np.zeros((N, L.shape[1])) for L in logs.blocks],
        )
    else:
        counts, sums = stats
    accepted = 0
    n_blocks = spec.n_simplex + (1 if spec.cube_dim else 0)

    def block_loglik(block: int, k_val: int) -> float:
        if block < spec.n_simplex:
            d = spec.simplex_dims[block]
            A = np.array(
                [
                    np.append(
                        ceil_map(k_val, d, new.theta_simplex[block][j]),
                        0.0,
                    )
                    for j in range(N)
                ]
            )
            A[:, -1] = k_val + 1 - A[:, :-1].sum(axis=1)
            return float(_block_loglik(A, counts, sums[block]).sum())
        total = 0.0
        for l in range(spec.cube_dim):
            js = cube_ceil(k_val, new.theta_cube[:, l]).astype(float)
            A = np.column_stack([js, k_val - js + 1.0])
            total += _block_loglik(A, counts, sums[spec.n_simplex + l]).sum()
        return float(total)

    for block in range(n_blocks):
        is_cube = block == spec.n_simplex
        lower = 1 if is_cube else spec.simplex_dims[block]
        k_cur = new.k.cube() if is_cube else new.k.simplex(block)
        step = config.degree_step * (1 if rng.uniform() < 0.5 else -1)
        k_prop = k_cur + step
        if k_prop < lower:
            continue
        prior = model_config.degree_prior
        log_prior = prior.block_logpmf(block, k_prop, lower) - prior.block_logpmf(
            block, k_cur, lower
        )
        log_like = block_loglik(block, k_prop) - block_loglik(block, k_cur) if logs.n else 0.0
        if np.log(rng.uniform()) < log_prior + log_like:
            degrees = list(new.k.degrees)
            degrees[block] = k_prop
            new.k = DegreeVector(tuple(degrees))
            accepted += 1
    return new, accepted / n_blocks


def update_precision(state: MixtureState, rng, model_config: ModelConfig) -> MixtureState:
    """Conjugate Gamma update of the concentration parameter."""
    new = state.copy()
    v = np.minimum(state.v, 1.0 - 1e-12)
    shape = model_config.precision_shape + state.truncation - 1
    rate = model_config.precision_rate - np.log1p(-v).sum()
    new.M0 = float(rng.gamma(shape, 1.0 / rate))
    return new


# --- chain driver -------------------------------------------------------------


def _sweep(state, logs, rng, cfg, model_cfg, accept_accum):
    if logs.n:
        state = update_labels(state, None, rng, logs=logs)
    stats = logs.cluster_stats(state.xi, state.truncation) if logs.n else None
    state = update_sticks(state, rng)
    state, a_atom = update_atoms(state, None, rng, cfg, model_cfg, logs=logs, stats=stats)
    state, a_deg = update_degrees(state, None, rng, cfg, model_cfg, logs=logs, stats=stats)
    state = update_precision(state, rng, model_cfg)
    accept_accum["atoms"] += a_atom
    accept_accum["degrees"] += a_deg
    return state


def run_single_chain(config: SamplerConfig, model_config: ModelConfig, data: Dataset, chain_index: int = 0):
    rng = np.random.default_rng(chain_seed(config.seed, chain_index))
    logs = DataLogs(data)
    state = sample_prior(model_config, rng)
    if logs.n:
        state.xi = rng.choice(state.truncation, size=logs.n, p=np.maximum(state.w, 0) / np.maximum(state.w, 0).sum())
    retained = []
    accept = {"atoms": 0.0, "degrees": 0.0}
    for sweep in range(config.chain_length):
        state = _sweep(state, logs, rng, config, model_config, accept)
        if sweep >= config.burn_in and (sweep - config.burn_in) % config.thinning == config.thinning - 1:
            retained.append(state.copy())
    rates = {key: val / config.chain_length for key, val in accept.items()}
    return retained, rates


def run_chain(config: SamplerConfig, model_config: ModelConfig, data: Dataset) -> PosteriorDraws:
    """Run all chains (in parallel) and merge retained states by chain index."""
    if data.n == 0:
        raise InvalidArgument("data must be non-empty; use sample_prior for prior draws")
    results = Parallel(n_jobs=min(config.n_chains, 8) if config.n_jobs == -1 else config.n_jobs)(
        delayed(run_single_chain)(config, model_config, data, c) for c in range(config.n_chains)
    )
    states = []
    rates = {"atoms": 0.0, "degrees": 0.0}
    for retained, r in results:
        states.extend(retained)
        for key in rates:
            rates[key] += r[key] / config.n_chains
    return PosteriorDraws(states, config, model_config, rates)


# --- persistence --------------------------------------------------------------


def draws_to_csv(draws: PosteriorDraws, path) -> None:
    """Columnar dump: one row per retained state per atom."""
    spec = draws.model_config.spec
    header = ["draw", "atom", "weight", "M0"]
    header += [f"k{b+1}" for b in range(len(draws.states[0].k.degrees))] if draws.states else []
    for m, d in enumerate(spec.simplex_dims):
        header += [f"theta{m+1}_{l+1}" for l in range(d)]
    header += [f"theta_cube_{l+1}" for l in range(spec.cube_dim)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for s_idx, state in enumerate(draws.states):
            for j in range(state.truncation):
                row = [s_idx, j, repr(float(state.w[j])), repr(float(state.M0))]
                row += [int(k) for k in state.k.degrees]
                for m in range(spec.n_simplex):
                    row += [repr(float(v)) for v in state.theta_simplex[m][j]]
                row += [repr(float(v)) for v in (state.theta_cube[j] if spec.cube_dim else [])]
                writer.writerow(row)


def save_draws(draws: PosteriorDraws, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        pickle.dump(draws, fh)


def load_draws(path) -> PosteriorDraws:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise InvalidArgument(f"not a draws file (bad magic {magic!r})")
        return pickle.load(fh)
