import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conclab.distributions import CoordinateLaw, ProductDistribution, enumerate_support
from conclab.errors import DomainError, InputError, ReplicateError
from conclab.montecarlo import (ExperimentReport, RngStream, canonical_json, clopper_pearson,
                                config_hash, estimate_mean, estimate_quantile, estimate_tail,
                                evaluate, lattice, mix, pointwise, replicate, sweep,
                                tail_from_values, worker_count)

RAD = CoordinateLaw.rademacher()
GAUSS = CoordinateLaw.gaussian()
# E max_i |G_i| for n = 100 standard Gaussians, mpmath quadrature, frozen
GAUSSIAN_EMAX_100 = 2.7469576878061206


def first(X):
    return X[:, 0]


# streams -----------------------------------------------------------------------

def test_stream_determinism():
    a = RngStream(5, 2).block(3).standard_normal(10)
    b = RngStream(5, 2).block(3).standard_normal(10)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, RngStream(5, 3).block(3).standard_normal(10))
    assert not np.array_equal(a, RngStream(5, 2).block(4).standard_normal(10))


def test_stream_validation():
    with pytest.raises(InputError):
        RngStream(-1)
    with pytest.raises(InputError):
        RngStream(0, 1 << 64)


def test_substreams_independent():
    root = RngStream(11)
    x = root.substream(1).block(0).standard_normal(20_000)
    y = root.substream(2).block(0).standard_normal(20_000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 4 / math.sqrt(20_000)
    assert root.named("a").stream_id != root.named("b").stream_id


def test_mix_order_sensitive():
    assert mix(1, 2) != mix(2, 1)
    assert mix(1, 2) == mix(1, 2)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("CONCLAB_WORKERS", "3")
    assert worker_count() == 3
    assert worker_count(5) == 5
    monkeypatch.setenv("CONCLAB_WORKERS", "x")
    with pytest.raises(InputError):
        worker_count()


# replicate engine ---------------------------------------------------------------

@pytest.mark.parametrize("workers", [2, 3, 8])
def test_replicate_worker_independent(workers):
    dist = ProductDistribution(5, GAUSS)
    f = lambda X: np.abs(X).max(axis=1)
    one = evaluate(f, dist, 10_001, RngStream(1, 7), workers=1)
    many = evaluate(f, dist, 10_001, RngStream(1, 7), workers=workers)
    np.testing.assert_array_equal(one, many)


def test_replicate_error_index():
    def draw(gen, size):
        v = np.zeros(size)
        v[size // 2] = np.nan
        return v
    with pytest.raises(ReplicateError) as e:
        replicate(draw, 100, RngStream(0))
    assert e.value.index == 50


def test_replicate_shape_check():
    with pytest.raises(InputError):
        replicate(lambda g, m: np.zeros(m + 1), 10, RngStream(0))
    with pytest.raises(InputError):
        replicate(lambda g, m: np.zeros(m), 0, RngStream(0))


def test_pointwise_lift():
    f = pointwise(lambda x: float(x.sum()))
    np.testing.assert_array_equal(f(np.ones((3, 2))), [2.0, 2.0, 2.0])


# means, tails, quantiles --------------------------------------------------------

def test_estimate_mean_constant():
    dist = ProductDistribution(2, CoordinateLaw.finite([(2.5, 1.0)]))
    assert estimate_mean(first, dist, 500, RngStream(0)) == (2.5, 0.0)


def test_estimate_mean_rademacher_symmetric():
    m, se = estimate_mean(first, ProductDistribution(1, RAD), 20_000, RngStream(3))
    assert abs(m) <= 4 * se


def test_estimate_mean_gaussian_max_oracle():
    m, se = estimate_mean(lambda X: np.abs(X).max(axis=1), ProductDistribution(100, GAUSS),
                          40_000, RngStream(4))
    assert abs(m - GAUSSIAN_EMAX_100) <= 4 * se


def test_estimate_mean_errors():
    with pytest.raises(InputError):
        estimate_mean(first, ProductDistribution(1, RAD), 50, RngStream(0))
    with pytest.raises(ReplicateError):
        estimate_mean(lambda X: np.where(X[:, 0] > 0, np.inf, 0.0), ProductDistribution(1, RAD), 200, RngStream(0))


def test_estimate_tail_trivial_thresholds():
    dist = ProductDistribution(1, CoordinateLaw.symmetric_three_point(1.0, 0.5))
    est = estimate_tail(first, dist, [-2.0, 2.0], 2000, RngStream(0))
    assert est.point[0] == 1.0 and est.point[1] == 0.0


def test_estimate_tail_matches_enumeration():
    dist = ProductDistribution(3, CoordinateLaw.centered_bernoulli(0.3))
    X, p = enumerate_support(dist)
    f = lambda X: X.sum(axis=1)
    t = np.array([-0.5, 0.0, 0.5, 1.0, 2.0])
    exact = np.array([np.sum(p[f(X) >= s - 1e-12]) for s in t])
    est = estimate_tail(lambda X: f(X) + 1e-12, dist, t, 20_000, RngStream(8))
    assert np.all((est.ci_low <= exact) & (exact <= est.ci_high))


def test_estimate_tail_validation():
    with pytest.raises(InputError):
        estimate_tail(first, ProductDistribution(1, RAD), [0.0, 0.0], 2000, RngStream(0))
    with pytest.raises(InputError):
        estimate_tail(first, ProductDistribution(1, RAD), [0.0], 10, RngStream(0))


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=200),
       st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20, unique=True))
def test_tail_estimate_invariants(values, grid):
    est = tail_from_values(values, sorted(grid))
    assert np.all(est.ci_low <= est.point) and np.all(est.point <= est.ci_high)
    assert np.all(np.diff(est.point) <= 0)


def test_clopper_pearson_coverage():
    law = CoordinateLaw.finite([(0.0, 0.9), (1.0, 0.1)])
    dist = ProductDistribution(1, law)
    root = RngStream(2024)
    covered = 0
    for k in range(500):
        est = estimate_tail(first, dist, [0.5], 1000, root.substream(k))
        covered += bool(est.ci_low[0] <= 0.1 <= est.ci_high[0])
    assert covered / 500 >= 0.93


def test_clopper_pearson_edges():
    lo, hi = clopper_pearson(np.array([0, 10]), 10)
    assert lo[0] == 0.0 and hi[1] == 1.0
    assert hi[0] == pytest.approx(1 - 0.025 ** 0.1)


def test_estimate_quantile_examples():
    const = ProductDistribution(1, CoordinateLaw.finite([(3.0, 1.0)]))
    assert estimate_quantile(first, const, 0.7, 1000, RngStream(0)) == 3.0
    two = ProductDistribution(1, CoordinateLaw.finite([(-1.0, 0.5), (1.0, 0.5)]))
    assert estimate_quantile(first, two, 0.3, 5000, RngStream(1)) == -1.0
    with pytest.raises(InputError):
        estimate_quantile(first, const, 1.0, 1000, RngStream(0))


def test_estimate_quantile_cdf_inversion():
    law = CoordinateLaw.finite([(0.0, 0.2), (1.0, 0.5), (2.0, 0.3)])
    dist = ProductDistribution(1, law)
    # CDF is 0.2, 0.7, 1.0; quantiles well inside each step
    for q, expect in [(0.1, 0.0), (0.45, 1.0), (0.9, 2.0)]:
        assert estimate_quantile(first, dist, q, 20_000, RngStream(5)) == expect


# reports and sweeps -------------------------------------------------------------

def _runner(p, rng):
    return {"mean": float(rng.block(0).standard_normal(50).mean() + p["a"] * p.get("b", 1))}


def test_sweep_single_point():
    rep = sweep({"a": [1]}, _runner, seed=3)
    assert len(rep.records) == 1 and rep.records[0]["status"] == "ok"


def test_sweep_two_by_two():
    rep = sweep({"a": [1, 2], "b": [3, 4]}, _runner, seed=3)
    assert len(rep.records) == 4


def test_sweep_permutation_invariant():
    pts = lattice({"a": [1, 2, 3], "b": [0, 5]})
    fwd = sweep(pts, _runner, seed=9)
    rev = sweep(pts[::-1], _runner, seed=9)
    key = lambda r: (r["a"], r["b"])
    assert sorted(fwd.records, key=key) == sorted(rev.records, key=key)


def test_sweep_records_failures():
    def runner(p, rng):
        if p["a"] == 2:
            raise DomainError("bad point")
        return {"v": 1.0}
    rep = sweep({"a": [1, 2, 3]}, runner, seed=0)
    assert [r["status"] for r in rep.records] == ["ok", "failed", "ok"]
    assert "DomainError" in rep.records[1]["error"]
    with pytest.raises(InputError):
        sweep([], runner, seed=0)


def test_report_serialization(tmp_path):
    rep = ExperimentReport("x", {"b": 1, "a": [1.5, 2]}, 7,
                           [{"t": 0.0, "ok": True}, {"t": 1.0, "extra": None}], {"s": np.float64(2)})
    assert rep.to_csv() == "t,ok,extra\n0.0,true,\n1.0,,\n"
    assert rep.config_hash == config_hash({"a": [1.5, 2], "b": 1})
    path = rep.write(tmp_path)
    man = json.loads(path.read_text())
    assert {"config_hash", "seed", "git_describe", "records"} <= set(man)
    assert man["files"] == ["results.csv"] and man["summary"] == {"s": 2.0}


def test_canonical_json_numpy():
    assert canonical_json({"b": np.int64(2), "a": np.arange(2.0)}) == '{"a":[0.0,1.0],"b":2}'
