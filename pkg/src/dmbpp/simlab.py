"""Synthetic-truth generators and the replicate experiment harness.

Two benchmark mixtures of Dirichlet/Beta products define the ground truth;
the harness simulates datasets, fits the sampler, and aggregates posterior
expected L1 distances across replicates.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .bernstein import (
    beta_product_cell_mass,
    dirichlet_cell_mass,
    mixture_measure,
    product_measure,
)
from .domain import Dataset, DomainSpec, MixedPoint, clamp_dataset
from .errors import InvalidArgument
from .estimate import (
    DataLogs,
    MarginalSubset,
    cube_axis_grid,
    full_grid,
    l1_grid_values,
    mixture_logpdf_batch,
    mixture_marginal_logpdf,
    mpel1,
)
from .gibbs import PosteriorDraws, SamplerConfig, run_chain, splitmix64
from .kernels import dirichlet_logpdf_matrix
from .model import ModelConfig


@dataclass(frozen=True)
class Scenario:
    """Finite mixture of products of Dirichlet and Beta densities."""

    name: str
    spec: DomainSpec
    weights: tuple[float, ...]
    dirichlet_params: tuple  # per component: tuple over simplex blocks of (d+1,) params
    beta_params: tuple  # per component: tuple over cube coords of (a, b)

    def __post_init__(self):
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise InvalidArgument("component weights must sum to 1")
        if any(w <= 0 for w in self.weights):
            raise InvalidArgument("component weights must be positive")


def scenario_I() -> Scenario:
    spec = DomainSpec((2,), 1)
    return Scenario(
        "I",
        spec,
        weights=(0.3, 0.5, 0.2),
        dirichlet_params=(
            ((2.1, 10.0, 3.0),),
            ((10.0, 3.1, 10.0),),
            ((10.0, 3.1, 10.0),),
        ),
        beta_params=(((1.0, 10.0),), ((5.0, 5.0),), ((10.0, 1.0),)),
    )


def scenario_II() -> Scenario:
    spec = DomainSpec((3, 2), 2)
    return Scenario(
        "II",
        spec,
        weights=(0.3, 0.2, 0.2, 0.1, 0.1, 0.1),
        dirichlet_params=(
            ((8, 14, 2, 3), (2.1, 10, 3)),
            ((18, 2, 4, 5), (10, 3.1, 10)),
            ((9, 18, 2, 4), (10, 3.1, 10)),
            ((14, 2, 8, 3), (10, 3.1, 10)),
            ((2, 28, 4, 2), (10, 3.1, 10)),
            ((22, 4, 8, 1), (10, 3.1, 10)),
        ),
        beta_params=(
            ((1, 5), (1, 10)),
            ((1, 5), (5, 5)),
            ((2, 3), (5, 5)),
            ((10, 8), (5, 5)),
            ((15, 10), (10, 1)),
            ((20, 1), (10, 1)),
        ),
    )


def get_scenario(name: str) -> Scenario:
    if name.upper() == "I":
        return scenario_I()
    if name.upper() == "II":
        return scenario_II()
    raise InvalidArgument(f"unknown scenario {name!r}")


def _component_log_density_batch(s: Scenario, c: int, data: Dataset) -> np.ndarray:
    spec = s.spec
    out = np.zeros(data.n)
    for m in range(spec.n_simplex):
        alpha = np.asarray(s.dirichlet_params[c][m], dtype=float).reshape(1, -1)
        xm = data.simplex[m]
        full = np.column_stack([xm, 1.0 - xm.sum(axis=1)])
        with np.errstate(divide="ignore"):
            logx = np.log(np.maximum(full, 1e-300))
        out += dirichlet_logpdf_matrix(alpha, logx)[:, 0]
    for l in range(spec.cube_dim):
        a, b = s.beta_params[c][l]
        xv = data.cube[:, l]
        full = np.column_stack([xv, 1.0 - xv])
        with np.errstate(divide="ignore"):
            logx = np.log(np.maximum(full, 1e-300))
        out += dirichlet_logpdf_matrix(np.array([[a, b]]), logx)[:, 0]
    return out


def scenario_log_density_batch(s: Scenario, data: Dataset) -> np.ndarray:
    comps = np.stack([_component_log_density_batch(s, c, data) for c in range(len(s.weights))])
    return logsumexp(comps + np.log(s.weights)[:, None], axis=0)


def scenario_density(s: Scenario, x: MixedPoint) -> float:
    """Exact mixture density at one point."""
    from .domain import dataset_from_points

    data = dataset_from_points([x], s.spec)
    return float(np.exp(scenario_log_density_batch(s, data))[0])


def scenario_sample(s: Scenario, n: int, rng) -> Dataset:
    """Ancestral sampling: component label, then block-wise Dirichlet/Beta draws."""
    if n < 1:
        raise InvalidArgument("need n >= 1")
    spec = s.spec
    comps = rng.choice(len(s.weights), size=n, p=np.asarray(s.weights))
    simplex = [np.empty((n, d)) for d in spec.simplex_dims]
    cube = np.empty((n, spec.cube_dim))
    for i, c in enumerate(comps):
        for m, d in enumerate(spec.simplex_dims):
            simplex[m][i] = rng.dirichlet(np.asarray(s.dirichlet_params[c][m], dtype=float))[:d]
        for l in range(spec.cube_dim):
            a, b = s.beta_params[c][l]
            cube[i, l] = rng.beta(a, b)
    return Dataset(spec, tuple(simplex), cube)


def scenario_measure(s: Scenario):
    """Cell-mass oracle for the scenario's mixing measure (exact per block)."""
    measures = []
    for c in range(len(s.weights)):
        fns = [dirichlet_cell_mass(np.asarray(p, dtype=float)) for p in s.dirichlet_params[c]]
        if s.spec.cube_dim:
            fns.append(beta_product_cell_mass(s.beta_params[c]))
        measures.append(product_measure(fns))
    return mixture_measure(s.weights, measures)


# --- true marginals (Dirichlet aggregation per component) ---------------------


def scenario_marginal_part_batch(s: Scenario, block: int, part: int, t: np.ndarray) -> np.ndarray:
    """True univariate marginal of one composition part (or cube coordinate).

    block is 1-based; for the cube block, `part` is the coordinate index.
    """
    spec = s.spec
    t = np.asarray(t, dtype=float)
    full = np.column_stack([t, 1.0 - t])
    with np.errstate(divide="ignore"):
        logx = np.log(np.maximum(full, 1e-300))
    dens = np.zeros_like(t)
    for c, w in enumerate(s.weights):
        if 1 <= block <= spec.n_simplex:
            alpha = np.asarray(s.dirichlet_params[c][block - 1], dtype=float)
            a = alpha[part]
            b = alpha.sum() - a
        else:
            a, b = s.beta_params[c][part]
        dens += w * np.exp(dirichlet_logpdf_matrix(np.array([[a, b]]), logx)[:, 0])
    return dens


def univariate_labels(spec: DomainSpec) -> list[tuple[str, int, int]]:
    """(label, block, part) for every composition part and cube coordinate."""
    out = []
    for m, d in enumerate(spec.simplex_dims):
        for p in range(d + 1):
            out.append((f"x{m+1}_{p+1}", m + 1, p))
    for l in range(spec.cube_dim):
        out.append((f"x{spec.n_simplex + 1 + l}", spec.n_simplex + 1, l))
    return out


# --- replicate harness ---------------------------------------------------------


@dataclass
class ReplicateReport:
    scenario: str
    n: int
    replicates: int
    marginal_mpel1: dict
    joint_mpel1: float
    runtime_seconds: float
    per_replicate: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["distribution", "mpel1"])
            for label, val in self.marginal_mpel1.items():
                writer.writerow([label, repr(float(val))])
            writer.writerow(["joint", repr(float(self.joint_mpel1))])


def posterior_expected_l1(
    draws: PosteriorDraws,
    s: Scenario,
    marginal_resolution: int = 256,
    joint_resolution: int = 40,
    joint_mc_budget: int = 20_000,
    mc_seed: int = 0,
) -> dict:
    """Average L1 distance to the scenario truth over retained draws.

    Returns one entry per univariate marginal plus "joint".
    """
    spec = s.spec
    out = {}
    t = cube_axis_grid(marginal_resolution)
    cell = 1.0 / marginal_resolution
    for label, block, part in univariate_labels(spec):
        truth = scenario_marginal_part_batch(s, block, part, t)
        if block <= spec.n_simplex:
            keep = MarginalSubset(
                tuple(("part", part) if m == block - 1 else None for m in range(spec.n_simplex))
            )
            simplex_vals = [t if m == block - 1 else None for m in range(spec.n_simplex)]
            cube_vals = np.empty((t.shape[0], 0))
        else:
            keep = MarginalSubset((None,) * spec.n_simplex, (part,))
            simplex_vals = [None] * spec.n_simplex
            cube_vals = t.reshape(-1, 1)
        dists = [
            l1_grid_values(
                np.exp(mixture_marginal_logpdf(st, spec, keep, simplex_vals, cube_vals)),
                truth,
                cell,
            )
            for st in draws.states
        ]
        out[label] = float(np.mean(dists))

    if spec.total_dim <= 3:
        grid, vol = full_grid(spec, joint_resolution)
        truth = np.exp(scenario_log_density_batch(s, grid))
        logs = DataLogs(grid)
        dists = [
            l1_grid_values(np.exp(mixture_logpdf_batch(st, logs)), truth, vol)
            for st in draws.states
        ]
        out["joint"] = float(np.mean(dists))
    else:
        rng = np.random.default_rng(mc_seed)
        blocks = tuple(
            rng.dirichlet(np.ones(d + 1), size=joint_mc_budget)[:, :d] for d in spec.simplex_dims
        )
        cube = rng.uniform(size=(joint_mc_budget, spec.cube_dim))
        pts = Dataset(spec, blocks, cube)
        truth = np.exp(scenario_log_density_batch(s, pts))
        logs = DataLogs(pts)
        V = spec.volume()
        dists = [
            float(np.abs(np.exp(mixture_logpdf_batch(st, logs)) - truth).mean() * V)
            for st in draws.states
        ]
        out["joint"] = float(np.mean(dists))
    return out


def run_replicates(
    s: Scenario,
    n: int,
    replicates: int,
    sampler_cfg: SamplerConfig,
    model_cfg: ModelConfig,
    marginal_resolution: int = 256,
    joint_resolution: int = 40,
) -> ReplicateReport:
    """Simulate, fit, and aggregate posterior expected L1 across replicates."""
    t0 = time.time()
    per_rep = []
    for r in range(replicates):
        data_seed = splitmix64(sampler_cfg.seed ^ splitmix64(1000 + r))
        rng = np.random.default_rng(data_seed)
        data = clamp_dataset(scenario_sample(s, n, rng), model_cfg.interior_epsilon)
        rep_cfg = replace(sampler_cfg, seed=splitmix64(sampler_cfg.seed ^ splitmix64(r)))
        draws = run_chain(rep_cfg, model_cfg, data)
        per_rep.append(
            posterior_expected_l1(
                draws,
                s,
                marginal_resolution=marginal_resolution,
                joint_resolution=joint_resolution,
                mc_seed=data_seed & 0xFFFFFFFF,
            )
        )
    labels = list(per_rep[0].keys())
    marginal = {
        label: mpel1([rep[label] for rep in per_rep]) for label in labels if label != "joint"
    }
    joint = mpel1([rep["joint"] for rep in per_rep])
    return ReplicateReport(
        s.name, n, replicates, marginal, joint, time.time() - t0, per_rep
    )
