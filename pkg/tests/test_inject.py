import itertools

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from randgad.datasets import make_cora_like
from randgad.errors import ArgumentError, CapacityError
from randgad.graph import Graph
from randgad.inject import InjectionConfig, inject, inject_attribute, inject_structural

from conftest import random_graph


def rng(seed=0):
    return np.random.default_rng(seed)


def test_cliques_are_complete_and_disjoint():
    g = random_graph(20, p=0.05, seed=1)
    out, members, _, groups = inject(g, InjectionConfig(4, 2, 0, 5, seed=7))
    assert members.size == 8 and np.unique(members).size == 8
    assert sorted(np.concatenate(groups)) == list(members)
    dense = out.dense_adjacency()
    for grp in groups:
        for a, b in itertools.combinations(grp, 2):
            assert dense[a, b] == 1 and dense[b, a] == 1
    assert set(np.flatnonzero(out.labels)) == set(members)


def test_structural_labels_match_members():
    g = random_graph(20, p=0.05, seed=1)
    out, members = inject_structural(g, 4, 2, rng())
    assert set(np.flatnonzero(out.labels)) == set(members)


def test_original_edges_kept():
    g = random_graph(30, p=0.2, seed=2)
    out, _ = inject_structural(g, 5, 3, rng())
    old = g.dense_adjacency().astype(bool)
    assert (out.dense_adjacency().astype(bool) | ~old).all()


def test_zero_cliques_leaves_graph():
    g = random_graph(10, seed=3)
    out, members = inject_structural(g, 3, 0, rng())
    assert members.size == 0
    assert (out.adjacency != g.adjacency).nnz == 0


def test_too_many_clique_nodes():
    with pytest.raises(CapacityError):
        inject_structural(random_graph(10, seed=0), 4, 3, rng())


def test_attribute_swap_matches_exhaustive_scan():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 3.0], [-2.0, -2.0], [1.0, 1.0]])
    g = Graph.from_edges(5, np.array([[0, 1]]), x)
    out, targets = inject_attribute(g, 1, 4, rng(5))
    (t,) = targets
    others = [j for j in range(5) if j != t]
    dist = [((x[j] - x[t]) ** 2).sum() for j in others]
    far = others[int(np.argmax(dist))]
    np.testing.assert_array_equal(out.attributes[t], x[far])
    keep = np.arange(5) != t
    assert out.attributes[keep].tobytes() == x[keep].tobytes()


def test_attribute_tie_goes_to_lowest_index():
    x = np.array([[0.0], [1.0], [-1.0], [0.5]])
    g = Graph.from_edges(4, np.zeros((0, 2), dtype=np.int64), x)
    # target 0 sees candidates 1 and 2 at equal distance
    for seed in range(50):
        out, targets = inject_attribute(g, 1, 3, rng(seed))
        if targets[0] == 0:
            assert out.attributes[0, 0] == 1.0
            return
    pytest.fail("node 0 never drawn as a target")


def test_zero_count_and_bad_k():
    g = random_graph(10, seed=4)
    out, t = inject_attribute(g, 0, 3, rng())
    assert t.size == 0 and out.attributes.tobytes() == g.attributes.tobytes()
    with pytest.raises(ArgumentError):
        inject_attribute(g, 1, 10, rng())


def test_config_validation():
    with pytest.raises(ArgumentError):
        InjectionConfig(clique_size=1).validate(100)
    with pytest.raises(ArgumentError):
        InjectionConfig(candidate_pool_size=0).validate(100)
    with pytest.raises(CapacityError):
        InjectionConfig(10, 5, 60).validate(100)


def test_no_anomalies_gives_all_zero_labels():
    g = random_graph(15, seed=5)
    out, s, a, _ = inject(g, InjectionConfig(3, 0, 0, 5, seed=1))
    assert out.labels is not None and out.labels.sum() == 0
    assert s.size == 0 and a.size == 0


def test_cora_shaped_counts():
    g = make_cora_like(seed=0)
    assert (g.n, g.num_edges, g.d) == (2708, 5429, 1433)
    out, s, a, groups = inject(g, InjectionConfig(15, 5, 75, 50, seed=1))
    assert out.labels.sum() == 150
    assert s.size == 75 and a.size == 75 and not set(s) & set(a)
    assert [len(grp) for grp in groups] == [15] * 5


@settings(max_examples=25, deadline=None)
@given(st.integers(12, 40), st.integers(2, 4), st.integers(0, 3), st.integers(0, 5), st.integers(0, 2**32))
def test_injection_invariants(n, p, q, count, seed):
    assume(p * q + count <= n)
    g = random_graph(n, seed=seed % 1000)
    k = min(5, n - 1)
    cfg = InjectionConfig(p, q, count, k, seed=seed)
    out, s, a, groups = inject(g, cfg)
    assert out.labels.sum() == p * q + count
    assert not set(s) & set(a)
    normal = out.labels == 0
    assert out.attributes[normal].tobytes() == g.attributes[normal].tobytes()
    again, *_ = inject(g, cfg)
    assert (again.adjacency != out.adjacency).nnz == 0
    assert again.attributes.tobytes() == out.attributes.tobytes()
    dense = out.dense_adjacency()
    for grp in groups:
        sub = dense[np.ix_(grp, grp)]
        assert sub.sum() == p * (p - 1)
