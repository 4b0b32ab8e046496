import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qwsearch.analysis import (degree_class_average, fit_hub_linear, fit_scaling, hub_selection,
                               hub_time_slope, layer_stats, percentile_filter,
                               powerlaw_tail_exponent, spearman)
from qwsearch.search import SearchRecord


def rec(node, degree, p, t=1.0):
    return SearchRecord(node=node, degree=degree, gamma_opt=0.1, t_opt=t, p_succ=p,
                        t_search=t / p, start_used="approx", evaluations=10, converged=True)


def test_two_record_mean_and_population_std():
    s = layer_stats([rec(0, 1, 0.2), rec(1, 2, 0.4)])
    assert s.mean_p == pytest.approx(0.3)
    assert s.std_p == pytest.approx(0.1)
    assert s.sample_size == 2 and s.n_nodes == 2


def test_five_record_hand_values():
    # t_search = t / p = 10 for every record
    rs = [rec(i, i + 1, 0.1 * (i + 1), t=float(i + 1)) for i in range(5)]
    s = layer_stats(rs, n_nodes=40)
    assert s.mean_p == pytest.approx(0.3)
    assert s.std_p == pytest.approx(math.sqrt(0.02))
    assert s.mean_t == pytest.approx(3.0)
    assert s.std_t == pytest.approx(math.sqrt(2.0))
    assert s.mean_tw == pytest.approx(10.0)
    assert s.std_tw == pytest.approx(0.0, abs=1e-12)
    assert s.n_nodes == 40 and s.sample_size == 5
    with pytest.raises(ValueError):
        layer_stats([])


def test_degree_classes():
    out = degree_class_average([rec(0, 1, 0.9), rec(1, 5, 0.2), rec(2, 1, 0.7)])
    assert list(out) == [1, 5]
    assert out[1][0] == pytest.approx(0.8) and out[1][1] == pytest.approx(0.1) and out[1][2] == 2
    assert out[5] == (pytest.approx(0.2), 0.0, 1)


def test_hub_linear_recovers_exact_line():
    rs = [rec(i, k, 2e-4 * k + 0.01) for i, k in enumerate(range(1, 201))]
    fit = fit_hub_linear(rs, top_fraction=0.1)
    assert fit.slope == pytest.approx(2e-4, rel=1e-9)
    assert fit.intercept == pytest.approx(0.01, rel=1e-7)
    assert fit.degree_threshold == pytest.approx(np.quantile(np.arange(1, 201), 0.9))
    assert fit.n_points == 20
    with pytest.raises(ValueError, match="too few"):
        fit_hub_linear([rec(i, 3, 0.5) for i in range(50)], top_fraction=0.1)
    with pytest.raises(ValueError):
        hub_selection(rs, 0.0)


def test_scaling_recovers_exponent():
    pts = [(n, 2 * n ** 0.5) for n in (128, 256, 512, 1024)]
    fit = fit_scaling(pts)
    assert fit.exponent == pytest.approx(0.5, abs=1e-12)
    assert math.exp(fit.intercept) == pytest.approx(2.0, rel=1e-12)
    assert fit.stderr_x == pytest.approx(0.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    with pytest.raises(ValueError, match="at least 3"):
        fit_scaling(pts[:2])
    with pytest.raises(ValueError):
        fit_scaling([(1, 1), (2, 0), (3, 1)])


def test_hub_time_slope_recovers_power():
    rs = []
    for i, k in enumerate(range(1, 101)):
        p = 0.5
        t = 7 * k ** -0.5 * p
        rs.append(rec(i, k, p, t=t))
    fit = hub_time_slope(rs, top_fraction=0.2)
    assert fit.exponent == pytest.approx(-0.5, abs=1e-12)
    assert math.exp(fit.intercept) == pytest.approx(7.0, rel=1e-12)


def test_percentile_filter():
    rs = [rec(i, (i * 7) % 13 + 1, 0.5) for i in range(100)]
    assert percentile_filter(rs, 1.0) == sorted(rs, key=lambda r: (r.degree, r.node))
    kept = percentile_filter(rs, 0.99)
    assert len(kept) == 99
    # the dropped record has the largest degree
    dropped = set(rs) - set(kept)
    assert max(r.degree for r in rs) == next(iter(dropped)).degree
    with pytest.raises(ValueError):
        percentile_filter(rs, 0.0)
    with pytest.raises(ValueError, match="no records"):
        percentile_filter(rs[:3], 0.1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 30), min_size=5, max_size=60), st.floats(0.2, 1.0), st.floats(0.2, 1.0))
def test_percentile_filter_properties(degrees, q1, q2):
    rs = [rec(i, k, 0.5) for i, k in enumerate(degrees)]
    a, b = sorted((q1, q2))
    lo, hi = percentile_filter(rs, a), percentile_filter(rs, b)
    assert lo == hi[: len(lo)]
    assert len(lo) == math.floor(a * len(rs) + 1e-9)
    # filtering an already filtered set at q = 1 is the identity
    assert percentile_filter(lo, 1.0) == lo
    assert max(r.degree for r in lo) <= min(r.degree for r in rs if r not in lo) if len(lo) < len(rs) else True


def test_mean_search_time_not_below_mean_time():
    rng = np.random.default_rng(0)
    rs = [rec(i, 1, float(rng.uniform(0.05, 1)), t=float(rng.uniform(1, 50))) for i in range(200)]
    s = layer_stats(rs)
    assert s.mean_tw >= s.mean_t


def test_spearman():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)


@pytest.mark.parametrize("alpha", [2.2, 2.7, 3.5])
def test_tail_exponent_recovers_pareto(alpha):
    rng = np.random.default_rng(1)
    kmin = 5
    x = (kmin - 0.5) * (1 - rng.random(20000)) ** (-1 / (alpha - 1))
    k = np.floor(x + 0.5)
    est, _ = powerlaw_tail_exponent(k, k_min=kmin)
    assert est == pytest.approx(alpha, abs=0.06)
    # cutoff search finds a cutoff in the power-law regime and a close exponent
    mixed = np.concatenate([k, rng.integers(1, 3, 2000)])
    est2, km = powerlaw_tail_exponent(mixed)
    assert km >= kmin
    # within three MLE standard errors of the chosen tail
    n_tail = int(np.sum(mixed >= km))
    assert abs(est2 - alpha) <= 3 * (est2 - 1) / math.sqrt(n_tail)
    with pytest.raises(ValueError):
        powerlaw_tail_exponent([1, 2, 3])
