import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conclab.chaos import (ChaosProblem, convex_poincare_check, diag_comparison_check,
                           diag_removal_ratio, entropy_of_exp, entropy_variational_check,
                           exact_centering, gaussian_comparison_estimate, khinchin_check,
                           markov_truncation_check, mls_check, sup_norm_ax, tail_experiment,
                           truncate, truncation_gap, truncation_level, v_plus_exact, z_value)
from conclab.distributions import CoordinateLaw, ProductDistribution, enumerate_support
from conclab.errors import CapacityError, DomainError, InputError
from conclab.linalg import MatrixFamily, random_family, random_psd
from conclab.montecarlo import RngStream

from conftest import sym_arrays

RAD = CoordinateLaw.rademacher()
GAUSS = CoordinateLaw.gaussian()

# Ent(e^Z) for Z uniform on {0, 1}: e/2 - (1+e)/2 ln((1+e)/2), mpmath, frozen
ENT_TWO_ATOM = 0.20626066283612088
# E max_i |G_i| for n = 100 standard Gaussians, mpmath quadrature, frozen
GAUSSIAN_EMAX_100 = 2.7469576878061206


def indicator_family(n):
    mats = []
    for i in range(n):
        a = np.zeros((n, n))
        a[i, i] = 1.0
        mats.append(a)
    return MatrixFamily(mats)


# z_value and sup_norm_ax -----------------------------------------------------------

def test_z_value_identity():
    p = ChaosProblem([np.eye(3)], ProductDistribution(3, GAUSS), centering=[0.0])
    assert z_value(p, [1, 0, 0]) == (1.0, 0)


def test_z_value_indicator_family():
    x = np.array([0.5, -2.0, 1.5])
    p = ChaosProblem(indicator_family(3), ProductDistribution(3, GAUSS), centering=[1, 1, 1])
    val, k = z_value(p, x)
    assert val == pytest.approx(np.max(x * x) - 1.0, abs=1e-15) and k == 1


def test_z_value_naive_oracle(gen):
    fam = random_family(4, 5, gen)
    p = ChaosProblem(fam, ProductDistribution(5, GAUSS))
    x = gen.standard_normal(5)
    naive = []
    for k, a in enumerate(fam):
        s = 0.0
        for i in range(5):
            for j in range(5):
                s += x[i] * a.values[i, j] * x[j]
        naive.append(s - p.centering[k])
    assert z_value(p, x)[0] == pytest.approx(max(naive), abs=1e-12)


def test_z_value_ties_lowest_index():
    p = ChaosProblem([np.eye(2), np.eye(2)], ProductDistribution(2, RAD), centering=[0, 0])
    assert z_value(p, [1, 1])[1] == 0


def test_z_value_length_mismatch():
    p = ChaosProblem([np.eye(2)], ProductDistribution(2, RAD))
    with pytest.raises(InputError):
        z_value(p, [1, 2, 3])


def test_problem_invariants():
    with pytest.raises(InputError):
        ChaosProblem([np.eye(2)], ProductDistribution(3, RAD))
    with pytest.raises(InputError):
        ChaosProblem([np.eye(2)], ProductDistribution(2, RAD), centering=[0, 0])


def test_exact_centering_bernoulli():
    d = 0.3
    a = np.array([[2.0, 1.0], [1.0, -1.0]])
    dist = ProductDistribution(2, CoordinateLaw.centered_bernoulli(d))
    X, p = enumerate_support(dist)
    brute = float(np.sum(p * np.einsum("bi,ij,bj->b", X, a, X)))
    assert exact_centering(MatrixFamily([a]), dist)[0] == pytest.approx(brute, abs=1e-14)


def test_sup_norm_ax_examples(gen):
    x = np.array([3.0, -4.0, 0.5])
    assert sup_norm_ax([np.eye(3)], x) == pytest.approx(np.linalg.norm(x))
    assert sup_norm_ax(indicator_family(3), x) == 4.0
    fam = random_family(3, 3, gen)
    assert sup_norm_ax(fam, x) == pytest.approx(max(np.linalg.norm(a.values @ x) for a in fam))
    with pytest.raises(InputError):
        sup_norm_ax([np.eye(3)], [1.0])


@given(sym_arrays(2, 5), st.integers(0, 2**32 - 1))
def test_z_dominates_each_member(a, seed):
    a = (a + a.T) / 2
    g = np.random.default_rng(seed)
    fam = MatrixFamily([a, -a, np.eye(len(a))])
    p = ChaosProblem(fam, ProductDistribution(len(a), GAUSS))
    x = g.standard_normal(len(a))
    z, _ = z_value(p, x)
    forms = p.centered_forms(x)[0]
    assert all(z >= f for f in forms)


# V_plus, entropy, modified log-Sobolev ------------------------------------------------

def test_v_plus_constant_law():
    law = CoordinateLaw.finite([(1.0, 1.0)])
    p = ChaosProblem([np.array([[1.0, 2.0], [2.0, 0.0]])], ProductDistribution(2, law))
    assert v_plus_exact(p, [1.0, 1.0]) == 0.0


def test_v_plus_offdiagonal_pair():
    # Z = 2 x1 x2; flipping either coordinate sends 2 to -2 with probability 1/2
    p = ChaosProblem([np.array([[0.0, 1.0], [1.0, 0.0]])], ProductDistribution(2, RAD),
                     centering=[0.0])
    assert v_plus_exact(p, [1, 1]) == 16.0
    assert v_plus_exact(p, [-1, -1]) == 16.0
    assert v_plus_exact(p, [1, -1]) == 0.0


def test_v_plus_needs_finite_support():
    p = ChaosProblem([np.eye(2)], ProductDistribution(2, GAUSS))
    with pytest.raises(CapacityError):
        v_plus_exact(p, [0.0, 0.0])


def test_entropy_examples():
    assert entropy_of_exp([3.0, 3.0], [0.5, 0.5], 1.3) == pytest.approx(0.0, abs=1e-12)
    assert entropy_of_exp([0.0, 5.0], [0.5, 0.5], 0.0) == 0.0
    assert entropy_of_exp([0.0, 1.0], [0.5, 0.5], 1.0) == pytest.approx(ENT_TWO_ATOM, rel=1e-13)


def test_entropy_large_values_stable():
    v = entropy_of_exp([0.0, 200.0], [0.5, 0.5], 2.0)
    assert math.isfinite(v) and v > 0


@given(arrays(np.float64, st.integers(1, 6), elements=st.floats(-20, 20)),
       st.floats(0.0, 2.0))
def test_entropy_nonnegative(z, lam):
    p = np.full(len(z), 1.0 / len(z))
    v = entropy_of_exp(z, p, lam)
    assert v >= 0.0
    if np.ptp(z) == 0:
        assert v <= 1e-12


def test_mls_lambda_zero():
    p = ChaosProblem(random_family(2, 4, np.random.default_rng(0)), ProductDistribution(4, RAD))
    assert mls_check(p, 0.0) == 0.0


def test_mls_rademacher_n8():
    p = ChaosProblem(random_family(3, 8, np.random.default_rng(1)), ProductDistribution(8, RAD))
    assert mls_check(p, 0.3) >= 0.0


def test_mls_order_invariance():
    p = ChaosProblem(random_family(3, 8, np.random.default_rng(2)), ProductDistribution(8, RAD))
    perm = np.random.default_rng(3).permutation(256)
    assert mls_check(p, 0.7) == pytest.approx(mls_check(p, 0.7, order=perm), abs=1e-10)


def test_mls_negative_lambda():
    p = ChaosProblem([np.eye(2)], ProductDistribution(2, RAD))
    with pytest.raises(InputError):
        mls_check(p, -0.1)


def test_mls_capacity():
    p = ChaosProblem([np.eye(21)], ProductDistribution(21, RAD))
    with pytest.raises(CapacityError):
        mls_check(p, 0.5)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 2.0),
       st.sampled_from(["rademacher", "bernoulli", "three_point"]))
def test_mls_margin_property(seed, lam, kind):
    g = np.random.default_rng(seed)
    n = int(g.integers(2, 6))
    law = {"rademacher": RAD, "bernoulli": CoordinateLaw.centered_bernoulli(0.2),
           "three_point": CoordinateLaw.symmetric_three_point(1.5, 0.4)}[kind]
    p = ChaosProblem(random_family(int(g.integers(1, 4)), n, g), ProductDistribution(n, law))
    assert mls_check(p, lam) >= -1e-10


def test_entropy_variational_examples():
    y = np.array([0.0, 1.0, 3.0])
    p = np.array([0.2, 0.5, 0.3])
    lam = 0.8
    w0 = entropy_variational_check(y, np.zeros(3), p, lam)
    assert w0 == pytest.approx(entropy_of_exp(y, p, lam), abs=1e-12)
    assert entropy_variational_check(y, lam * y, p, lam) >= -1e-12
    with pytest.raises(InputError):
        entropy_variational_check(y, np.zeros(2), p, lam)


@given(arrays(np.float64, 5, elements=st.floats(-5, 5)),
       arrays(np.float64, 5, elements=st.floats(-5, 5)),
       arrays(np.float64, 5, elements=st.floats(0.01, 1)), st.floats(-2, 2))
def test_entropy_variational_property(y, w, raw, lam):
    p = raw / raw.sum()
    assert entropy_variational_check(y, w, p, lam) >= -1e-12


# truncation -----------------------------------------------------------------------

def test_truncate_examples():
    x = np.array([0.5, -1.0, 2.0, -3.0])
    assert not truncate(x, 5.0).W.any()
    assert not truncate(x, 0.1).Y.any()
    s = truncate(x, 1.0)
    np.testing.assert_array_equal(s.Y, [0.5, -1.0, 0.0, 0.0])
    np.testing.assert_array_equal(s.W, [0.0, 0.0, 2.0, -3.0])
    with pytest.raises(InputError):
        truncate(x, 0.0)


@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e6, 1e6)), st.floats(1e-6, 1e6))
def test_truncate_properties(x, M):
    s = truncate(x, M)
    np.testing.assert_array_equal(s.Y + s.W, x)
    assert np.all(s.Y * s.W == 0)
    assert np.all(np.abs(s.Y) <= M)


def test_truncation_level_examples():
    const = ProductDistribution(5, CoordinateLaw.finite([(-1.0, 0.5), (1.0, 0.5)]))
    assert truncation_level(const, 1000, RngStream(0)).value == 8.0
    assert truncation_level(ProductDistribution(17, RAD), 1000, RngStream(0)).value == 8.0
    with pytest.raises(InputError):
        truncation_level(const, 10, RngStream(0))


def test_truncation_level_gaussian_oracle():
    est = truncation_level(ProductDistribution(100, GAUSS), 50_000, RngStream(3))
    assert abs(est.value - 8 * GAUSSIAN_EMAX_100) <= 3 * est.stderr


def test_markov_truncation_examples():
    law = CoordinateLaw.symmetric_three_point(2.0, 0.5)
    assert markov_truncation_check(ProductDistribution(4, law), 3.0).value == 0.0
    # P(max |X_i| > 1) = 1 - 0.5^4 for the three-point law with atoms 0, +-2
    assert markov_truncation_check(ProductDistribution(4, law), 1.0).value == pytest.approx(0.9375)
    dist = ProductDistribution(50, GAUSS)
    M = truncation_level(dist, 20_000, RngStream(4)).value
    est = markov_truncation_check(dist, M, 20_000, RngStream(5))
    assert est.value <= 1 / 8 + 3 * est.stderr


def test_truncation_gap_zero_when_bounded():
    p = ChaosProblem(random_family(2, 4, np.random.default_rng(0)), ProductDistribution(4, RAD))
    assert truncation_gap(p, 2.0, 2000, RngStream(1)).value == 0.0


# Rademacher cube checks ------------------------------------------------------------------

def test_khinchin_examples():
    assert khinchin_check(np.eye(5)) == pytest.approx(1.0, abs=1e-15)
    assert khinchin_check(np.array([[0.0, 1.0], [1.0, 0.0]])) == pytest.approx(1.0, abs=1e-15)
    # B eps = (e1 + e2)(1, 1): norm 2 sqrt 2 or 0 with equal chance, HS norm 2
    assert khinchin_check(np.ones((2, 2))) == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    with pytest.raises(CapacityError):
        khinchin_check(np.eye(21))
    with pytest.raises(DomainError):
        khinchin_check(np.zeros((3, 3)))


def test_khinchin_random_dim10():
    g = np.random.default_rng(10)
    ratios = [khinchin_check(g.standard_normal((10, 10))) for _ in range(100)]
    assert min(ratios) >= 1 / math.sqrt(2) - 1e-12


@given(sym_arrays(1, 6))
def test_khinchin_lower_bound(b):
    if np.abs(b).max() == 0:
        return
    assert khinchin_check(b) >= 1 / math.sqrt(2) - 1e-12


def test_convex_poincare_examples():
    assert convex_poincare_check([np.eye(4)]) == pytest.approx(4.0, abs=1e-12)
    fam = random_family(3, 8, np.random.default_rng(6))
    m = convex_poincare_check(fam)
    assert m >= 0.0
    rev = MatrixFamily(list(fam)[::-1])
    assert convex_poincare_check(rev) == pytest.approx(m, abs=1e-12)


def test_diag_comparison_examples():
    diag = MatrixFamily([np.diag([1.0, 2.0, 0.5]), np.diag([0.0, 1.0, 3.0])])
    assert diag_comparison_check(diag, RAD) == pytest.approx(0.0, abs=1e-12)
    v = np.array([1.0, -2.0, 0.5])
    # E (v^T eps)^2 = |v|^2 = E sum v_i^2 eps_i^2
    assert diag_comparison_check([np.outer(v, v)], RAD) == pytest.approx(0.0, abs=1e-12)
    g = np.random.default_rng(7)
    fam = MatrixFamily([random_psd(8, g) for _ in range(3)])
    assert diag_comparison_check(fam, RAD) >= -1e-12


def test_diag_comparison_errors():
    with pytest.raises(DomainError):
        diag_comparison_check([np.array([[0.0, 1.0], [1.0, 0.0]])], RAD)
    with pytest.raises(DomainError):
        diag_comparison_check([np.eye(2)], CoordinateLaw.centered_bernoulli(0.3))


@given(st.integers(0, 2**32 - 1),
       st.sampled_from([RAD, CoordinateLaw.symmetric_three_point(2.0, 0.3)]))
def test_diag_comparison_property(seed, law):
    g = np.random.default_rng(seed)
    n = int(g.integers(1, 6))
    fam = MatrixFamily([random_psd(n, g) for _ in range(int(g.integers(1, 4)))])
    assert diag_comparison_check(fam, law) >= -1e-12


# Monte Carlo comparisons --------------------------------------------------------------

def test_diag_removal_ratio_examples():
    dist = ProductDistribution(4, GAUSS)
    diag = MatrixFamily([np.diag([1.0, 2.0, 3.0, 4.0])])
    assert diag_removal_ratio(diag, dist, 2000, RngStream(1)).ratio == pytest.approx(1.0)
    off = random_family(2, 4, np.random.default_rng(0), zero_diagonal=True)
    assert diag_removal_ratio(off, dist, 2000, RngStream(1)).ratio == 0.0
    with pytest.raises(InputError):
        diag_removal_ratio(diag, ProductDistribution(4, CoordinateLaw.finite([(1.0, 1.0)])),
                           2000, RngStream(1))


def test_diag_removal_ratio_band():
    dist = ProductDistribution(32, RAD)
    for s in range(5):
        fam = random_family(3, 32, np.random.default_rng(s))
        assert diag_removal_ratio(fam, dist, 2000, RngStream(s)).ratio <= 10.0


def test_gaussian_comparison_identity():
    n = 16
    r = gaussian_comparison_estimate([np.eye(n)], ProductDistribution(n, GAUSS),
                                     [0.0, 1.0, 2.0], 20_000, RngStream(2))
    assert r.e_sup_ag == pytest.approx(math.sqrt(n), rel=0.05)
    assert r.quantile[0] == pytest.approx(math.sqrt(n), rel=0.05)
    assert 0.5 < r.multiplier < 2.0


def test_gaussian_comparison_rademacher():
    fam = random_family(3, 8, np.random.default_rng(4))
    r = gaussian_comparison_estimate(fam, ProductDistribution(8, RAD), [0.0, 0.5, 1.0, 3.0],
                                     20_000, RngStream(5))
    assert math.isfinite(r.multiplier) and r.multiplier > 0
    assert len(list(r.rows())) == 4


# tail experiment ------------------------------------------------------------------------

def test_tail_experiment_single_matrix():
    fam = MatrixFamily([np.array([[0.0, 1.0], [1.0, 0.0]])])
    p = ChaosProblem(fam, ProductDistribution(2, RAD))
    rep = tail_experiment(p, [0.0, 1.0, 2.0, 3.0], 4000, RngStream(9))
    surv = [r["survival"] for r in rep.records]
    # Z = 2 eps1 eps2 is +-2 with equal chance
    assert surv[0] == pytest.approx(0.5, abs=0.03)
    assert surv[-1] == 0.0
    assert set(rep.summary["fitted_c"]) == {"adamczak", "mainthm", "hanson_wright"}
    assert rep.summary["sup_op_norm"] == pytest.approx(1.0)


def test_tail_experiment_deterministic():
    fam = random_family(2, 6, np.random.default_rng(0))
    p = ChaosProblem(fam, ProductDistribution(6, GAUSS))
    grid = np.linspace(0, 20, 11)
    a = tail_experiment(p, grid, 3000, RngStream(3), workers=1)
    b = tail_experiment(p, grid, 3000, RngStream(3), workers=4)
    assert a.to_csv() == b.to_csv()
    assert "hanson_wright" not in a.summary["fitted_c"]
    surv = [r["survival"] for r in a.records]
    assert all(x >= y for x, y in zip(surv, surv[1:]))
