import json
import math

import numpy as np
import pytest

from qwsearch.geometry import (Embedding, EmbeddingError, angular_distance, connection_probability,
                               export_embedding, gen_s1, h2_radial, import_embedding, prune,
                               read_block_map, read_embedding, read_mercator, renormalize,
                               write_block_map)
from qwsearch.graph import from_edges, gen_ba, giant_component


def small_s1(seed=0, n=600):
    return gen_s1(n, 2.6, 1.5, 6.0, seed=seed)


def test_connection_probability_values():
    assert connection_probability(0.0, 1.0, 1.0, 1.5, 0.1) == 1.0
    # d = mu k k' gives exactly 1/2 for any beta
    assert connection_probability(0.3 * 2 * 5, 2.0, 5.0, 2.7, 0.3) == pytest.approx(0.5)
    assert angular_distance(0.1, 2 * math.pi - 0.1) == pytest.approx(0.2)
    assert angular_distance(0.0, math.pi) == pytest.approx(math.pi)


def test_gen_s1_reproducible_and_valid():
    g, e = small_s1(3)
    g2, e2 = small_s1(3)
    assert np.array_equal(g.edges, g2.edges)
    assert np.array_equal(e.theta, e2.theta)
    assert np.all((e.theta >= 0) & (e.theta < 2 * math.pi))
    assert np.all(e.kappa > 0)
    # truncated Pareto: kappa_max / kappa_min bounded by the natural cutoff
    assert e.kappa.max() / e.kappa.min() <= 600 ** (1 / 1.6) * (1 + 1e-12)


def test_gen_s1_average_degree_over_seeds():
    ks = [gen_s1(1000, 2.6, 1.5, 6.0, seed=s)[0].avg_degree for s in range(20)]
    assert 5.4 <= np.mean(ks) <= 6.6
    assert all(abs(k / 6.0 - 1) <= 0.10 for k in ks)


def test_gen_s1_without_calibration_uses_textbook_mu():
    _, e = gen_s1(300, 2.6, 1.5, 6.0, seed=1, calibrate_mu=False)
    assert e.mu == pytest.approx(1.5 * math.sin(math.pi / 1.5) / (2 * math.pi * 6.0))


def test_gen_s1_edge_frequencies_follow_model():
    """Empirical link frequency per probability bin matches the model."""
    g, e = gen_s1(1500, 2.5, 2.0, 8.0, seed=11)
    i, j = np.triu_indices(g.n, k=1)
    p = connection_probability(e.radius * angular_distance(e.theta[i], e.theta[j]),
                               e.kappa[i], e.kappa[j], e.beta, e.mu)
    linked = np.zeros(g.n * g.n, dtype=bool)
    linked[g.edges[:, 0] * g.n + g.edges[:, 1]] = True
    hit = linked[i * g.n + j]
    edges_bins = [0.02, 0.05, 0.1, 0.2, 0.4, 0.7, 1.0]
    for lo, hi in zip(edges_bins[:-1], edges_bins[1:]):
        sel = (p >= lo) & (p < hi)
        if sel.sum() < 200:
            continue
        expect = p[sel].mean()
        se = math.sqrt(np.sum(p[sel] * (1 - p[sel]))) / sel.sum()
        assert abs(hit[sel].mean() - expect) <= 5 * se + 1e-12


def renorm_oracle(g, e, r):
    order = sorted(range(g.n), key=lambda v: (e.theta[v], v))
    blocks = [order[k:k + r] for k in range(0, g.n, r)]
    block_of = {v: b for b, mem in enumerate(blocks) for v in mem}
    kappa = [sum(e.kappa[v] ** e.beta for v in mem) ** (1 / e.beta) for mem in blocks]
    edges = {tuple(sorted((block_of[a], block_of[b]))) for a, b in g.edges if block_of[a] != block_of[b]}
    return blocks, kappa, edges


@pytest.mark.parametrize("r", [2, 3])
def test_renormalize_matches_oracle(r):
    g, e = small_s1(5, n=301)
    rr = renormalize(g, e, r=r)
    blocks, kappa, edges = renorm_oracle(g, e, r)
    assert rr.graph.n == math.ceil(g.n / r)
    assert [sorted(b.tolist()) for b in rr.block_map] == [sorted(b) for b in blocks]
    assert np.allclose(rr.embedding.kappa, kappa, rtol=1e-12)
    assert {tuple(x) for x in rr.graph.edges.tolist()} == edges
    assert rr.embedding.mu == pytest.approx(e.mu / r)
    assert rr.layer_index == 1
    # supernode angles stay inside the angular span of their members
    for b, mem in enumerate(rr.block_map):
        th = e.theta[mem]
        assert th.min() - 1e-12 <= rr.embedding.theta[b] <= th.max() + 1e-12
    # angular order of the blocks is preserved
    assert np.all(np.diff(rr.embedding.theta) >= -1e-12)


def test_renormalize_last_block_may_be_short():
    g, e = small_s1(6, n=101)
    rr = renormalize(g, e, r=2)
    assert sorted(len(b) for b in rr.block_map)[0] == 1
    assert sum(len(b) for b in rr.block_map) == 101


def test_renormalize_validation():
    g, e = small_s1(1, n=50)
    with pytest.raises(ValueError):
        renormalize(g, e, r=1)
    with pytest.raises(EmbeddingError):
        renormalize(gen_ba(40, 2, seed=1), e)


def test_prune_expected_edge_count_monte_carlo():
    g, e = small_s1(7, n=800)
    rr = renormalize(g, e, r=2)
    target = 0.8 * rr.graph.avg_degree
    counts, expected = [], None
    for seed in range(20):
        pr = prune(rr.graph, rr.embedding, target, seed=seed, giant_only=False)
        counts.append(pr.graph.m)
        expected = pr.expected_avg_k * rr.graph.n / 2
        assert pr.expected_avg_k == pytest.approx(target, abs=1e-6)
        # surviving links are a subset of the input links
        assert {tuple(x) for x in pr.graph.edges.tolist()} <= {tuple(x) for x in rr.graph.edges.tolist()}
        assert pr.embedding.mu == pytest.approx(pr.mu_pruned)
        assert pr.mu_pruned < rr.embedding.mu
    se = np.std(counts, ddof=1) / math.sqrt(len(counts))
    assert abs(np.mean(counts) - expected) <= 3 * se + 0.5


def test_prune_giant_component_and_noop():
    g, e = small_s1(8, n=600)
    gc, cmap = giant_component(g)
    e = e.subset(cmap.kept_nodes)
    pr = prune(gc, e, gc.avg_degree, seed=1)
    assert pr.graph.m == gc.m and pr.mu_pruned == e.mu
    rr = renormalize(gc, e)
    pr = prune(rr.graph, rr.embedding, gc.avg_degree, seed=1)
    assert pr.graph.is_connected()
    assert pr.embedding.n == pr.graph.n
    with pytest.raises(ValueError, match="cannot prune up"):
        prune(gc, e, gc.avg_degree + 5, seed=1)


def test_h2_radial_formula():
    e = Embedding(np.array([0.0, 1.0, 2.0]), np.array([1.0, 2.0, 4.0]), 1.5, 0.2)
    R = 3 / (2 * math.pi)
    rmax = 2 * math.log(2 * R / 0.2)
    assert np.allclose(h2_radial(e), [rmax, rmax - 2 * math.log(2), rmax - 2 * math.log(4)])


def test_embedding_round_trip(tmp_path):
    _, e = small_s1(2, n=120)
    p = tmp_path / "e.csv"
    export_embedding(e, p)
    e2 = import_embedding(p)
    assert np.array_equal(e.theta, e2.theta) and np.array_equal(e.kappa, e2.kappa)
    assert (e2.beta, e2.mu) == (e.beta, e.mu)
    ids, e3 = read_embedding(p)
    assert np.array_equal(ids, np.arange(120)) and np.array_equal(e3.kappa, e.kappa)


def test_embedding_three_node_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("#beta=1.5,mu=0.01\nid,theta,kappa\n10,0.5,2.0\n30,7.0,3.0\n20,1.5,4.0\n")
    with pytest.warns(UserWarning, match="normalised"):
        e = import_embedding(p, labels=[10, 20, 30])
    assert e.kappa.tolist() == [2.0, 4.0, 3.0]
    assert e.theta[2] == pytest.approx(7.0 - 2 * math.pi)
    with pytest.raises(EmbeddingError, match="node 40"):
        import_embedding(p, labels=[10, 40])


@pytest.mark.parametrize("text,msg", [
    ("", "empty"),
    ("#beta=1.5\nid,theta,kappa\n", "parameter line"),
    ("#beta=1.5,mu=0.1\nid,kappa,theta\n", "header"),
    ("#beta=1.5,mu=0.1\nid,theta,kappa\n0,1.0\n", "3 fields"),
    ("#beta=1.5,mu=0.1\nid,theta,kappa\n0,1.0,-2\n", "kappa"),
])
def test_embedding_errors(tmp_path, text, msg):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(EmbeddingError, match=msg):
        import_embedding(p)


def test_mercator_file(tmp_path):
    p = tmp_path / "net.inf_coord"
    p.write_text(
        "# =====\n#   - beta:   1.80\n#   - mu:     0.05\n#   - radius_S1: 10.0\n"
        "# Vertex   Inf.Kappa   Inf.Theta   Inf.Hyp.Rad.\n"
        "   7   3.5   1.25   12.0\n   2   1.5   4.00   15.0\n")
    e = read_mercator(p, labels=[2, 7])
    assert (e.beta, e.mu) == (1.8, 0.05)
    assert e.kappa.tolist() == [1.5, 3.5] and e.theta.tolist() == [4.0, 1.25]
    assert np.array_equal(import_embedding(p, labels=[2, 7]).kappa, e.kappa)


def test_block_map_round_trip(tmp_path):
    blocks = [np.array([0, 5]), np.array([1]), np.array([2, 3])]
    p = tmp_path / "b.json"
    write_block_map(blocks, p, layer=1, r=2)
    doc = json.loads(p.read_text())
    assert doc["layer"] == 1 and doc["blocks"]["2"] == [2, 3]
    assert [b.tolist() for b in read_block_map(p)] == [[0, 5], [1], [2, 3]]


def test_embedding_validation():
    with pytest.raises(EmbeddingError):
        Embedding(np.zeros(3), np.ones(2), 1.5, 0.1)
    with pytest.raises(EmbeddingError):
        Embedding(np.zeros(2), np.array([1.0, 0.0]), 1.5, 0.1)
    with pytest.raises(EmbeddingError):
        Embedding(np.zeros(2), np.ones(2), 1.0, 0.1)
    with pytest.raises(EmbeddingError):
        Embedding(np.zeros(2), np.ones(2), 1.5, 0.0)
    g = from_edges(3, [(0, 1)])
    with pytest.raises(EmbeddingError):
        prune(g, Embedding(np.zeros(2), np.ones(2), 1.5, 0.1), 0.5)
