import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topography.descent import DescentResult
from topography.objective import Bounds, griewank, make_cosine_family, quadratic, user_objective
from topography.rhc import (
    EmptyBasinTable,
    RhcConfig,
    cluster_minima,
    cluster_points,
    recluster,
    run_rhc,
    sample_uniform,
    substream,
)


def result(end, value, status="converged"):
    end = np.atleast_1d(np.asarray(end, dtype=float))
    return DescentResult(end, end, float(value), 0.0, 1, status)


# --- sampling ---------------------------------------------------------------

def test_uniform_sample_mean_and_range():
    X = sample_uniform(Bounds.box(0, 1, 1), 100_000, 7)
    assert X.min() >= 0 and X.max() < 1
    assert 0.497 <= X.mean() <= 0.503


def test_single_sample_lies_in_box():
    b = Bounds.box(-3, 2, 4)
    X = sample_uniform(b, 1, 0)
    assert X.shape == (1, 4) and b.contains(X[0])


def test_sampling_is_deterministic_and_prefix_stable():
    b = Bounds.box(-1, 1, 3)
    a = sample_uniform(b, 50, 11)
    np.testing.assert_array_equal(a, sample_uniform(b, 50, 11))
    np.testing.assert_array_equal(a[:20], sample_uniform(b, 20, 11))
    assert not np.array_equal(a, sample_uniform(b, 50, 12))


def test_substream_domains_are_distinct():
    a = substream(3, 0, 0).random(4)
    b = substream(3, 0, 1).random(4)
    assert not np.array_equal(a, b)
    with pytest.raises(ValueError):
        substream(-1, 0)


@pytest.mark.parametrize("kwargs", [dict(population=0), dict(cluster_radius_rel=0),
                                    dict(cluster_value_tol_rel=-1), dict(seed=-1)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        RhcConfig(**kwargs)


# --- clustering -------------------------------------------------------------

def test_cluster_examples():
    spec = quadratic(1, bounds=Bounds.box(-10, 10, 1))
    cfg = RhcConfig()
    t = cluster_minima([result(0.0, 0.0), result(5e-4, 0.0), result(3.0, 1.0)], spec, cfg)
    assert t.n_hat == 2 and list(t.counts) == [2, 1]
    assert t.values[0] == 0.0


def test_failures_are_excluded_but_counted():
    spec = quadratic(1)
    rs = [result(0.0, 0.0), result(4.0, 16.0, "max_iters"), result(0.0, 0.0)]
    t = cluster_minima(rs, spec, RhcConfig())
    assert (t.n_hat, t.failures, t.population) == (1, 1, 3)
    t_all = cluster_minima(rs, spec, RhcConfig(), include_failures=True)
    assert t_all.n_hat == 2 and t_all.failures == 0


def test_all_failed_raises():
    with pytest.raises(EmptyBasinTable):
        cluster_minima([result(1.0, 1.0, "line_search_failed")], quadratic(1), RhcConfig())


def test_noisy_copies_of_nine_minima_give_nine_clusters():
    rng = np.random.default_rng(4)
    b = Bounds.box(0, 9, 2)
    centres = np.array([[i + 0.5, j + 0.5] for i in range(3) for j in range(3)])
    depth = np.arange(9, dtype=float)
    pts = np.repeat(centres, 50, axis=0) + rng.normal(0, 1e-5, (450, 2))
    vals = np.repeat(depth, 50) + rng.normal(0, 1e-9, 450)
    mins = cluster_points(pts, vals, np.ones(450, int), b, 1e-3, 1e-6 * 8)
    assert len(mins) == 9
    assert sorted(m.count for m in mins) == [50] * 9


def test_same_value_far_apart_stays_distinct():
    b = Bounds.box(0, 1, 1)
    mins = cluster_points(np.array([[0.1], [0.9]]), np.zeros(2), np.ones(2, int), b, 1e-3, 1e-6)
    assert len(mins) == 2


# --- end to end -------------------------------------------------------------

def test_quadratic_has_one_basin():
    t = run_rhc(quadratic(6), RhcConfig(100, 1))
    assert t.n_hat == 1 and t.failures == 0 and t.counts[0] == 100


def test_cosine_equal_finds_nine_balanced_basins():
    t = run_rhc(make_cosine_family(9), RhcConfig(900, 0))
    assert t.n_hat == 9 and t.failures == 0
    assert t.counts.min() >= 60 and t.counts.max() <= 140
    np.testing.assert_allclose(np.sort(t.representatives[:, 0]), np.arange(9) + 0.5, atol=1e-6)


def test_griewank_is_multimodal():
    t = run_rhc(griewank(9), RhcConfig(300, 0))
    assert t.n_hat >= 2


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 400))
def test_table_invariants(seed, K):
    t = run_rhc(make_cosine_family(5, "centered-decay"), RhcConfig(K, seed))
    assert t.counts.sum() + t.failures == K
    assert np.all(t.counts >= 1)
    assert np.all(np.diff(t.values) >= 0)
    assert t.n_hat <= K


def test_worker_count_does_not_change_results():
    spec = griewank(4)
    cfg = RhcConfig(800, 5)
    assert run_rhc(spec, cfg, workers=1).same_as(run_rhc(spec, cfg, workers=3))


def test_recluster_is_idempotent():
    spec = griewank(3)
    cfg = RhcConfig(400, 2)
    t = run_rhc(spec, cfg)
    once = recluster(t, spec, cfg)
    assert once.same_as(recluster(once, spec, cfg))
    assert once.counts.sum() == t.counts.sum()


def test_empty_table_error_names_objective():
    spec = user_objective(lambda x: float(x[0]), Bounds.box(-1, 1, 1),
                          grad=lambda x: np.array([np.nan]))
    with pytest.raises(EmptyBasinTable):
        run_rhc(spec, RhcConfig(5, 0))


def test_frequencies_match_basin_widths():
    # -sin^2 with piecewise-stretched phase: basin widths 5, 3, 2 on [0, 10]
    edges = np.array([0.0, 5.0, 8.0, 10.0])

    def phase(x):
        i = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, 2)
        return np.pi * (i + (x - edges[i]) / np.diff(edges)[i]), np.pi / np.diff(edges)[i]

    def f(X):
        t, _ = phase(X[:, 0])
        return -np.sin(t) ** 2

    def g(X):
        t, dt = phase(X[:, 0])
        return (-2 * np.sin(t) * np.cos(t) * dt)[:, None]

    spec = user_objective(f, Bounds.box(0, 10, 1), grad=g, vectorized=True)
    K = 4000
    t = run_rhc(spec, RhcConfig(K, 9))
    assert t.n_hat == 3 and t.failures == 0
    x = t.counts[np.argsort(t.representatives[:, 0])] / K
    p = np.diff(edges) / 10
    assert np.all(np.abs(x - p) <= 3 * np.sqrt(p * (1 - p) / K))
