import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import comb, logsumexp

from dmbpp.errors import InvalidArgument, SizeLimit
from dmbpp.kernels import (
    Cell,
    alpha_map,
    cell_of,
    dirichlet_logpdf_matrix,
    enumerate_I,
    enumerate_J,
    log_beta_pdf,
    log_binomial_pmf,
    log_dirichlet_pdf,
    log_multinomial_pmf,
)


def test_binomial_simple_values():
    assert log_binomial_pmf(1, 1, 0.3) == pytest.approx(math.log(0.3))
    assert log_binomial_pmf(2, 4, 0.5) == pytest.approx(math.log(0.375))


def test_binomial_boundary_and_errors():
    assert log_binomial_pmf(0, 3, 0.0) == 0.0
    assert log_binomial_pmf(1, 3, 0.0) == -np.inf
    with pytest.raises(InvalidArgument):
        log_binomial_pmf(5, 4, 0.5)
    with pytest.raises(InvalidArgument):
        log_binomial_pmf(1, 4, 1.2)


def test_binomial_normalizes():
    for k in (1, 5, 20):
        for x in (0.0, 0.13, 0.5, 0.99, 1.0):
            total = logsumexp([log_binomial_pmf(j, k, x) for j in range(k + 1)])
            assert total == pytest.approx(0.0, abs=1e-12)


def test_multinomial_hand_value():
    # 2! * 0.5 * 0.5 with the remainder exponent 0
    v = log_multinomial_pmf((1, 1), 2, np.array([0.5, 0.5]))
    assert v == pytest.approx(math.log(0.5))


def test_multinomial_reduces_to_binomial():
    for j in range(5):
        a = log_multinomial_pmf((j,), 4, np.array([0.3]))
        b = log_binomial_pmf(j, 4, 0.3)
        assert a == pytest.approx(b, abs=1e-12)


def test_multinomial_normalizes():
    rng = np.random.default_rng(0)
    for d, k in [(2, 4), (3, 8), (2, 8)]:
        x = rng.dirichlet(np.ones(d + 1))[:d]
        total = logsumexp([log_multinomial_pmf(j, k, x) for j in enumerate_J(d, k)])
        assert total == pytest.approx(0.0, abs=1e-12)


def test_multinomial_rejects_overflowing_index():
    with pytest.raises(InvalidArgument):
        log_multinomial_pmf((3, 3), 4, np.array([0.4, 0.4]))


def test_dirichlet_uniform_and_beta_cases():
    assert log_dirichlet_pdf(np.array([0.2, 0.3]), np.array([1.0, 1.0, 1.0])) == pytest.approx(math.log(2.0))
    assert log_dirichlet_pdf(np.array([0.5]), np.array([2.0, 2.0])) == pytest.approx(math.log(1.5))
    assert log_beta_pdf(0.5, 1, 1) == pytest.approx(0.0)
    assert log_beta_pdf(0.25, 2, 1) == pytest.approx(math.log(0.5))


def test_dirichlet_integrates_to_one_on_s2():
    alpha = np.array([2.0, 3.0, 1.5])
    n = 400
    h = 1.0 / n
    total = 0.0
    for i in range(n):
        for j in range(n - i):
            x = np.array([(i + 0.5) * h, (j + 0.5) * h])
            if x.sum() >= 1:
                continue
            total += math.exp(log_dirichlet_pdf(x, alpha)) * h * h
    assert total == pytest.approx(1.0, abs=1e-3)


def test_beta_quadrature_normalization():
    val, _ = quad(lambda x: math.exp(log_beta_pdf(x, 3, 2)), 0, 1)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_dirichlet_d1_equals_beta():
    rng = np.random.default_rng(3)
    for _ in range(30):
        x = rng.uniform(0.01, 0.99)
        a, b = rng.uniform(0.5, 5, 2)
        assert log_dirichlet_pdf(np.array([x]), np.array([a, b])) == pytest.approx(
            log_beta_pdf(x, a, b), abs=1e-12
        )


def test_dirichlet_rejects_bad_params():
    with pytest.raises(InvalidArgument):
        log_dirichlet_pdf(np.array([0.5]), np.array([0.0, 1.0]))


def test_dirichlet_boundary_shape_gt_one():
    assert log_dirichlet_pdf(np.array([0.0]), np.array([2.0, 2.0])) == -np.inf


def test_enumerate_J_lexicographic():
    assert enumerate_J(1, 2) == [(0,), (1,), (2,)]
    J = enumerate_J(2, 3)
    assert len(J) == comb(5, 2, exact=True)
    assert list(J) == sorted(J)
    assert len(enumerate_J(3, 2)) == comb(5, 3, exact=True)


def test_enumerate_I_values_and_counts():
    assert enumerate_I(2, 3) == [(1, 1), (1, 2), (2, 1)]
    assert enumerate_I(1, 1) == [(1,)]
    for d in range(1, 4):
        for k in range(d, 11):
            assert len(enumerate_I(d, k)) == comb(k, d, exact=True)
            assert len(enumerate_J(d, k)) == comb(k + d, d, exact=True)


def test_enumerate_size_cap():
    with pytest.raises(SizeLimit):
        enumerate_J(6, 200)


def test_alpha_map_values():
    assert alpha_map(4, 2, (1, 1)) == pytest.approx((1.0, 1.0, 3.0))
    assert alpha_map(2, 2, (1, 1)) == pytest.approx((1.0, 1.0, 1.0))
    assert alpha_map(3, 1, (3,)) == pytest.approx((3.0, 1.0))


def test_alpha_map_invariants():
    for k in range(2, 8):
        keff = k - 2 + 1
        for j in enumerate_I(2, keff):
            a = np.asarray(alpha_map(k, 2, j))
            assert a.sum() == pytest.approx(k + 1)
            assert a.min() >= 1.0


def test_alpha_map_rejects_overflow():
    with pytest.raises(InvalidArgument):
        alpha_map(3, 2, (2, 2))


def test_cell_of_examples():
    c = cell_of((1,), 2)
    assert c.lows == (0.0,) and c.highs == (0.5,)
    c = cell_of((2, 1), 3)
    assert c.lows == pytest.approx((1 / 3, 0.0))
    assert c.highs == pytest.approx((2 / 3, 1 / 3))
    with pytest.raises(InvalidArgument):
        cell_of((0,), 2)


def test_cells_tile_unit_square():
    # the k^d half-open cells partition (0,1]^d: total volume 1, no overlap
    k = 4
    cells = [cell_of((i + 1, j + 1), k) for i in range(k) for j in range(k)]
    assert sum(c.volume() for c in cells) == pytest.approx(1.0)
    pt = (0.37, 0.81)
    assert sum(c.contains(pt) for c in cells) == 1


def test_dirichlet_logpdf_matrix_agrees_scalar():
    rng = np.random.default_rng(7)
    alphas = rng.uniform(1, 6, size=(4, 3))
    pts = rng.dirichlet(np.ones(3), size=5)
    logx = np.log(pts)
    M = dirichlet_logpdf_matrix(alphas, logx)
    for p in range(5):
        for a in range(4):
            ref = log_dirichlet_pdf(pts[p, :2], alphas[a])
            assert M[p, a] == pytest.approx(ref, abs=1e-12)
