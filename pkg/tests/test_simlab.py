import math

import numpy as np
import pytest
from scipy.stats import beta as beta_dist
from scipy.stats import dirichlet as scipy_dirichlet

from dmbpp.domain import DomainSpec, MixedPoint, validate
from dmbpp.errors import InvalidArgument
from dmbpp.gibbs import SamplerConfig
from dmbpp.model import ModelConfig, TruncatedPoisson
from dmbpp.simlab import (
    ReplicateReport,
    get_scenario,
    run_replicates,
    scenario_I,
    scenario_II,
    scenario_density,
    scenario_log_density_batch,
    scenario_marginal_part_batch,
    scenario_measure,
    scenario_sample,
    univariate_labels,
)


def test_scenario_shapes_and_weights():
    s1 = scenario_I()
    assert s1.spec == DomainSpec((2,), 1)
    assert sum(s1.weights) == pytest.approx(1.0)
    s2 = scenario_II()
    assert s2.spec == DomainSpec((3, 2), 2)
    assert s2.weights == (0.3, 0.2, 0.2, 0.1, 0.1, 0.1)
    assert len(s2.dirichlet_params) == 6
    with pytest.raises(InvalidArgument):
        get_scenario("III")


def test_scenario_density_component_oracle():
    # independent evaluation: sum the component pdfs by hand with scipy
    s = scenario_I()
    rng = np.random.default_rng(0)
    for _ in range(100):
        xs = rng.dirichlet([1, 1, 1])[:2]
        xc = rng.uniform(0.02, 0.98)
        x = MixedPoint((xs,), np.array([xc]))
        full = np.append(xs, 1 - xs.sum())
        want = 0.0
        for w, dp, bp in zip(s.weights, s.dirichlet_params, s.beta_params):
            want += w * scipy_dirichlet.pdf(full, dp[0]) * beta_dist.pdf(xc, *bp[0])
        assert scenario_density(s, x) == pytest.approx(want, rel=1e-12)


def test_scenario_density_integrates_to_one():
    s = scenario_I()
    rng = np.random.default_rng(1)
    n = 200_000
    data = type(scenario_sample(s, 2, rng))(
        s.spec, (rng.dirichlet([1, 1, 1], size=n)[:, :2],), rng.uniform(size=(n, 1))
    )
    vals = np.exp(scenario_log_density_batch(s, data))
    est = vals.mean() * s.spec.volume()
    assert est == pytest.approx(1.0, abs=1e-2)


def test_scenario_sample_frequencies_and_validity():
    s = scenario_I()
    rng = np.random.default_rng(2)
    n = 10_000
    data = scenario_sample(s, n, rng)
    for p in [data.point(i) for i in range(0, n, 500)]:
        validate(p, s.spec)
    # empirical mean of the bounded coordinate mixes the three Beta means
    want = 0.3 * (1 / 11) + 0.5 * 0.5 + 0.2 * (10 / 11)
    got = data.cube[:, 0].mean()
    assert got == pytest.approx(want, abs=4 * data.cube[:, 0].std() / math.sqrt(n))


def test_scenario_measure_normalizes():
    from dmbpp.bernstein import DegreeVector, weights_from_measure

    s = scenario_I()
    w = weights_from_measure(scenario_measure(s), DegreeVector((6, 5)), s.spec)
    assert w.weights.sum() == pytest.approx(1.0)


def test_true_marginal_matches_samples():
    s = scenario_I()
    rng = np.random.default_rng(3)
    data = scenario_sample(s, 60_000, rng)
    t = np.linspace(0.025, 0.975, 20)
    dens = scenario_marginal_part_batch(s, 1, 0, t)
    # kernel-free check: compare cell probabilities to empirical frequencies
    edges = np.linspace(0, 1, 21)
    hist, _ = np.histogram(data.simplex[0][:, 0], bins=edges, density=True)
    np.testing.assert_allclose(hist, dens, atol=0.15)


def test_true_marginal_integrates_to_one():
    s = scenario_II()
    t = (np.arange(4000) + 0.5) / 4000
    for _, block, part in univariate_labels(s.spec):
        dens = scenario_marginal_part_batch(s, block, part, t)
        assert dens.mean() == pytest.approx(1.0, abs=1e-3)


def test_univariate_labels_layout():
    labels = [l for l, _, _ in univariate_labels(DomainSpec((2,), 1))]
    assert labels == ["x1_1", "x1_2", "x1_3", "x2"]
    labels2 = [l for l, _, _ in univariate_labels(DomainSpec((3, 2), 2))]
    assert labels2[-2:] == ["x3", "x4"]


def _tiny_run(seed=0, replicates=2):
    s = scenario_I()
    scfg = SamplerConfig(
        chain_length=30, burn_in=20, thinning=5, n_chains=1, seed=seed, n_jobs=1
    )
    mcfg = ModelConfig(s.spec, truncation=6, degree_prior=TruncatedPoisson((6.0, 6.0)))
    return run_replicates(
        s, 40, replicates, scfg, mcfg, marginal_resolution=64, joint_resolution=10
    )


def test_run_replicates_report():
    rep = _tiny_run()
    assert rep.n == 40 and rep.replicates == 2
    assert set(rep.marginal_mpel1) == {"x1_1", "x1_2", "x1_3", "x2"}
    assert all(v >= 0 for v in rep.marginal_mpel1.values())
    assert rep.joint_mpel1 >= 0
    assert len(rep.per_replicate) == 2


def test_run_replicates_single_is_identity():
    rep = _tiny_run(replicates=1)
    assert rep.joint_mpel1 == pytest.approx(rep.per_replicate[0]["joint"])


def test_run_replicates_deterministic():
    a = _tiny_run(seed=9)
    b = _tiny_run(seed=9)
    assert a.marginal_mpel1 == b.marginal_mpel1
    assert a.joint_mpel1 == b.joint_mpel1


def test_report_csv(tmp_path):
    rep = ReplicateReport("I", 40, 1, {"x1_1": 0.25}, 0.5, 1.0)
    p = tmp_path / "report.csv"
    rep.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "distribution,mpel1"
    assert lines[1] == "x1_1,0.25"
    assert lines[-1] == "joint,0.5"
