import math

import numpy as np
import pytest
from scipy.special import gammaln, logsumexp
from scipy.stats import kstest

from dmbpp.bernstein import DegreeVector, WeightTable, mbp_density
from dmbpp.domain import DomainSpec, MixedPoint
from dmbpp.errors import Infeasible, InvalidArgument, OutOfSupport
from dmbpp.kernels import enumerate_I, log_beta_pdf
from dmbpp.model import (
    MixtureState,
    ModelConfig,
    TailModified,
    TruncatedPoisson,
    atom_alphas,
    ceil_map,
    cube_ceil,
    degree_prior_logpmf,
    kernel_logpdf,
    make_tail_modified,
    mixture_logpdf,
    sample_degrees,
    sample_prior,
    stick_to_weights,
)


def test_stick_to_weights_hand_cases():
    np.testing.assert_allclose(stick_to_weights([0.5, 0.5]), [0.5, 0.25, 0.25])
    np.testing.assert_allclose(stick_to_weights([0.0, 0.0, 0.0]), [0, 0, 0, 1])


def test_stick_to_weights_sums_to_one():
    rng = np.random.default_rng(0)
    for _ in range(100):
        w = stick_to_weights(rng.uniform(size=24))
        assert abs(w.sum() - 1.0) < 1e-15
        assert w.min() >= 0


def test_ceil_map_values():
    assert ceil_map(5, 1, [0.2]) == (1,)
    # raw (3,3) sums past 5; decrement the largest, tie toward the last index
    assert ceil_map(5, 2, [0.5, 0.5]) == (3, 2)
    assert ceil_map(3, 3, [0.1, 0.1, 0.1]) == (1, 1, 1)


def test_ceil_map_zero_lift():
    j = ceil_map(4, 2, [1e-12, 0.999])
    assert min(j) >= 1
    assert j in enumerate_I(2, 4)


def test_ceil_map_infeasible():
    with pytest.raises(Infeasible):
        ceil_map(2, 3, [0.3, 0.3, 0.3])


def test_ceil_map_always_lands_in_I():
    rng = np.random.default_rng(4)
    for d, k in [(2, 3), (2, 8), (3, 5)]:
        I = set(enumerate_I(d, k))
        for _ in range(200):
            theta = rng.dirichlet(np.ones(d + 1))[:d]
            assert ceil_map(k, d, theta) in I


def test_cube_ceil():
    np.testing.assert_array_equal(cube_ceil(4, [0.6, 0.01, 1.0]), [3, 1, 4])


def test_kernel_minimal_degrees_constant():
    spec = DomainSpec((2,), 1)
    k = DegreeVector((2, 1))
    rng = np.random.default_rng(6)
    for _ in range(5):
        x = MixedPoint((rng.dirichlet([1, 1, 1])[:2],), rng.uniform(size=1))
        th = MixedPoint((rng.dirichlet([1, 1, 1])[:2],), rng.uniform(size=1))
        assert kernel_logpdf(x, th, k, spec) == pytest.approx(math.log(2.0), abs=1e-12)


def test_kernel_cube_ceiling_arithmetic():
    spec = DomainSpec((), 1)
    k = DegreeVector((4,))
    th = MixedPoint((), np.array([0.6]))
    for x in (0.2, 0.5, 0.9):
        got = kernel_logpdf(MixedPoint((), np.array([x])), th, k, spec)
        assert got == pytest.approx(log_beta_pdf(x, 3, 2), abs=1e-12)


def test_kernel_integrates_to_one_mc():
    spec = DomainSpec((2,), 1)
    rng = np.random.default_rng(8)
    n = 40000
    for _ in range(5):
        th = MixedPoint((rng.dirichlet([1, 1, 1])[:2],), rng.uniform(size=1))
        k = sample_degrees(TruncatedPoisson((6.0, 6.0)), spec, rng)
        xs = rng.dirichlet([1, 1, 1], size=n)[:, :2]
        xc = rng.uniform(size=(n, 1))
        vals = np.array(
            [
                math.exp(kernel_logpdf(MixedPoint((xs[i],), xc[i]), th, k, spec))
                for i in range(n)
            ]
        )
        est = vals.mean() * spec.volume()
        assert est == pytest.approx(1.0, abs=3 * vals.std() * spec.volume() / math.sqrt(n) + 1e-3)


def test_kernel_equals_point_mass_mbp_density():
    # cross-module identity: the ceiling-mapped kernel is the MBP density of a
    # weight table holding a single unit weight on the mapped lattice index
    spec = DomainSpec((2,), 1)
    rng = np.random.default_rng(9)
    for _ in range(10):
        k = DegreeVector((int(rng.integers(2, 9)), int(rng.integers(1, 9))))
        th = MixedPoint((rng.dirichlet([1, 1, 1])[:2],), rng.uniform(size=1))
        x = MixedPoint((rng.dirichlet([1, 1, 1])[:2],), rng.uniform(size=1))
        I = enumerate_I(2, k.simplex(0))
        j_s = ceil_map(k.simplex(0), 2, th.simplex_blocks[0])
        j_c = int(cube_ceil(k.cube(), th.cube_block)[0])
        weights = np.zeros((len(I), k.cube()))
        weights[I.index(j_s), j_c - 1] = 1.0
        table = WeightTable(spec, k, weights)
        assert math.exp(kernel_logpdf(x, th, k, spec)) == pytest.approx(
            mbp_density(table, x), rel=1e-12
        )


def test_truncated_poisson_renormalized():
    prior = TruncatedPoisson((1.0,))
    # P(k=1 | k >= 1) = e^-1 / (1 - e^-1)
    want = math.exp(-1) / (1 - math.exp(-1))
    assert math.exp(prior.block_logpmf(0, 1, 1)) == pytest.approx(want, rel=1e-12)
    total = logsumexp([prior.block_logpmf(0, k, 1) for k in range(1, 60)])
    assert total == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(OutOfSupport):
        prior.block_logpmf(0, 0, 1)


def test_tail_modified_survival_closed_form():
    spec = DomainSpec((), 1)
    prior = make_tail_modified(spec, (1.0,), k_tilde=5)
    assert prior.exponent == 1
    C = prior._head_mass(0, 1)
    for j in (1, 2, 5):
        want = (1 - C) * math.exp(-(j + 5))
        assert prior.tail_survival(0, j) == pytest.approx(want, rel=1e-12)
    # pmf sums to 1: head through k_tilde + tail remainder
    head = sum(math.exp(prior.block_logpmf(0, k, 1)) for k in range(1, 6))
    mid = sum(math.exp(prior.block_logpmf(0, k, 1)) for k in range(6, 60))
    assert head + mid + prior.tail_survival(0, 54) == pytest.approx(1.0, abs=1e-10)


def test_tail_modified_head_matches_poisson():
    from scipy.stats import poisson

    prior = TailModified((2.0,), k_tilde=10, exponent=1)
    for k in range(1, 10):
        assert prior.block_logpmf(0, k, 1) == pytest.approx(poisson.logpmf(k, 2.0))


def test_degree_prior_joint_logpmf():
    spec = DomainSpec((2,), 1)
    prior = TruncatedPoisson((3.0, 4.0))
    k = DegreeVector((4, 2))
    want = prior.block_logpmf(0, 4, 2) + prior.block_logpmf(1, 2, 1)
    assert degree_prior_logpmf(prior, k, spec) == pytest.approx(want)


def test_sample_degrees_respects_bounds():
    spec = DomainSpec((3,), 1)
    rng = np.random.default_rng(10)
    prior = TruncatedPoisson((1.0, 1.0))
    for _ in range(200):
        k = sample_degrees(prior, spec, rng)
        assert k.simplex(0) >= 3
        assert k.cube() >= 1


def test_sample_prior_invariants():
    spec = DomainSpec((2,), 1)
    cfg = ModelConfig(spec, truncation=8, degree_prior=TruncatedPoisson((5.0, 5.0)))
    rng = np.random.default_rng(11)
    for _ in range(200):
        st = sample_prior(cfg, rng)
        st.check(spec)
        assert st.xi.size == 0
        for atom in st.atoms():
            assert np.all(atom.flat() >= cfg.interior_epsilon - 1e-15)


def test_sample_prior_stick_mean():
    # E[v | M0] = 1/(1+M0), so v*(1+M0) has mean 1 regardless of the M0 draw
    spec = DomainSpec((2,), 1)
    cfg = ModelConfig(spec, truncation=10, degree_prior=TruncatedPoisson((5.0, 5.0)))
    rng = np.random.default_rng(12)
    vals = []
    for _ in range(800):
        st = sample_prior(cfg, rng)
        vals.extend(st.v * (1.0 + st.M0))
    vals = np.asarray(vals)
    se = vals.std() / math.sqrt(len(vals))
    assert vals.mean() == pytest.approx(1.0, abs=4 * se)


def test_sample_prior_cube_atoms_uniform():
    spec = DomainSpec((2,), 1)
    cfg = ModelConfig(spec, truncation=10, degree_prior=TruncatedPoisson((5.0, 5.0)))
    rng = np.random.default_rng(13)
    coords = np.concatenate(
        [sample_prior(cfg, rng).theta_cube[:, 0] for _ in range(100)]
    )
    assert kstest(coords, "uniform").pvalue > 0.01


def test_mixture_logpdf_degenerate_weight():
    spec = DomainSpec((2,), 1)
    cfg = ModelConfig(spec, truncation=4, degree_prior=TruncatedPoisson((5.0, 5.0)))
    rng = np.random.default_rng(14)
    st = sample_prior(cfg, rng)
    st.v = np.array([1.0, 0.5, 0.5])
    st.w = stick_to_weights(st.v)
    x = MixedPoint((np.array([0.3, 0.3]),), np.array([0.5]))
    assert mixture_logpdf(x, st, spec) == pytest.approx(
        kernel_logpdf(x, st.atom(0), st.k, spec), abs=1e-12
    )


def test_mixture_logpdf_identical_atoms_collapse():
    spec = DomainSpec((2,), 1)
    cfg = ModelConfig(spec, truncation=3, degree_prior=TruncatedPoisson((5.0, 5.0)))
    rng = np.random.default_rng(15)
    st = sample_prior(cfg, rng)
    for m in range(spec.n_simplex):
        st.theta_simplex[m][:] = st.theta_simplex[m][0]
    st.theta_cube[:] = st.theta_cube[0]
    x = MixedPoint((np.array([0.2, 0.4]),), np.array([0.6]))
    assert mixture_logpdf(x, st, spec) == pytest.approx(
        kernel_logpdf(x, st.atom(0), st.k, spec), abs=1e-12
    )


def test_mixture_logpdf_linear_space_oracle():
    spec = DomainSpec((2,), 1)
    cfg = ModelConfig(spec, truncation=6, degree_prior=TruncatedPoisson((5.0, 5.0)))
    rng = np.random.default_rng(16)
    st = sample_prior(cfg, rng)
    x = MixedPoint((np.array([0.25, 0.35]),), np.array([0.45]))
    direct = sum(
        st.w[j] * math.exp(kernel_logpdf(x, st.atom(j), st.k, spec))
        for j in range(st.truncation)
    )
    assert mixture_logpdf(x, st, spec) == pytest.approx(math.log(direct), rel=1e-12)


def test_atom_alphas_consistent_with_kernel():
    spec = DomainSpec((3, 2), 2)
    cfg = ModelConfig(spec, truncation=5, degree_prior=TruncatedPoisson((6.0, 6.0, 6.0)))
    rng = np.random.default_rng(17)
    st = sample_prior(cfg, rng)
    alphas = atom_alphas(st, spec)
    assert alphas[0].shape == (5, 4)
    assert alphas[1].shape == (5, 3)
    assert alphas[2].shape == (5, 2) and alphas[3].shape == (5, 2)
    x = MixedPoint(
        (np.array([0.2, 0.3, 0.1]), np.array([0.4, 0.2])), np.array([0.3, 0.8])
    )
    from dmbpp.kernels import log_dirichlet_pdf

    for j in range(5):
        total = log_dirichlet_pdf(x.simplex_blocks[0], alphas[0][j])
        total += log_dirichlet_pdf(x.simplex_blocks[1], alphas[1][j])
        total += log_beta_pdf(x.cube_block[0], *alphas[2][j])
        total += log_beta_pdf(x.cube_block[1], *alphas[3][j])
        assert total == pytest.approx(kernel_logpdf(x, st.atom(j), st.k, spec), abs=1e-12)


def test_model_config_validation():
    spec = DomainSpec((2,), 1)
    with pytest.raises(InvalidArgument):
        ModelConfig(spec, truncation=1)
    with pytest.raises(InvalidArgument):
        ModelConfig(spec, precision_shape=0.0)
    cfg = ModelConfig(spec)
    assert isinstance(cfg.degree_prior, TruncatedPoisson)
    assert len(cfg.degree_prior.lams) == 2
