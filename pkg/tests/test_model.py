from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp

from randgad import autodiff as ad
from randgad import model as M
from randgad.errors import ArgumentError, CapacityError
from randgad.graph import Graph, normalized_adjacency
from randgad.pool import PoolConfig, build_pool

from conftest import random_graph


def t(x, grad=False):
    return ad.Tensor(np.asarray(x, dtype=float), requires_grad=grad)


def gate_params(w_att, w_mp):
    return SimpleNamespace(att=t(w_att, True), mp=t(w_mp, True))


def test_config_validation_and_aliases():
    assert M.ModelConfig(decoder="one-layer-graph-conv").decoder == "gcn"
    assert M.ModelConfig(decoder="two-layer-perceptron").decoder == "mlp"
    for bad in (dict(decoder="gat"), dict(mask_rate=1.0), dict(alpha=1.5), dict(lam=-1.0)):
        with pytest.raises(ArgumentError):
            M.ModelConfig(**bad)


def test_param_shapes():
    p = M.ModelParams.init(7, M.ModelConfig(hidden=5), np.random.default_rng(0))
    assert [v.shape for v in p.tensors()] == [(7, 5), (5, 5), (5, 5), (5, 5), (5, 7)]
    p = M.ModelParams.init(7, M.ModelConfig(hidden=5, decoder="mlp"), np.random.default_rng(0))
    assert p.dec1.shape == (5, 5) and p.dec2.shape == (5, 7)


def test_encode():
    p = M.ModelParams.init(6, M.ModelConfig(hidden=4), np.random.default_rng(0))
    assert not M.encode(np.zeros((3, 6)), p).data.any()
    big = M.ModelParams.init(1433, M.ModelConfig(hidden=64), np.random.default_rng(0))
    x = (np.random.default_rng(1).random((2708, 1433)) < 0.01).astype(float)
    assert M.encode(x, big).shape == (2708, 64)


def test_encode_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    p = M.ModelParams.init(5, M.ModelConfig(hidden=3), rng)
    x = rng.normal(size=(4, 5))
    pick = np.zeros((4, 3))
    pick[2, 1] = 1.0
    assert ad.finite_difference_check(lambda: ad.sum(ad.mul(M.encode(x, p), pick)), [p.enc1, p.enc2]) <= 1.0


def test_center_anchor():
    row = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(M.center_anchor(t(np.tile(row, (4, 1)))).data, row)
    assert not M.center_anchor(t([row, -row])).data.any()
    e = np.random.default_rng(0).normal(size=(10, 4))
    np.testing.assert_allclose(M.center_anchor(t(e)).data, e.sum(0) / 10, atol=1e-15)


def test_mask_ids():
    e = np.random.default_rng(0).normal(size=(50, 8))
    anchor = e.mean(0)
    assert M.mask_ids(e, anchor, 0.0).size == 0
    dist = ((e - anchor) ** 2).sum(1)
    oracle = sorted(sorted(range(50), key=lambda i: (-dist[i], i))[:5])
    assert M.mask_ids(e, anchor, 0.1).tolist() == oracle
    assert M.mask_ids(np.zeros((8405, 2)), np.zeros(2), 0.03).size == 252


def test_mask_ties_go_to_lower_index():
    e = np.array([[1.0], [-1.0], [0.0], [1.0]])
    assert M.mask_ids(e, np.zeros(1), 0.5).tolist() == [0, 1]


def brute_aggregate(e, nbrs, masked, w_att, w_mp):
    n, h = e.shape
    out = np.zeros((n, h))
    for i in range(n):
        if i in masked:
            out[i] = e[i]
            continue
        rows = [e[i]] + [e[j] for j in nbrs[i]]
        acc = np.zeros(h)
        for r in rows:
            att = np.array([np.tanh(sum(r[a] * w_att[a, b] for a in range(h))) for b in range(h)])
            acc += att * r
        out[i] = np.array([sum(acc[a] * w_mp[a, b] for a in range(h)) for b in range(h)])
    return out


def test_aggregate_matches_scalar_oracle():
    rng = np.random.default_rng(8)
    e = rng.normal(size=(4, 3))
    w_att, w_mp = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    nbrs = [[1, 2], [0], [], [0, 1, 2]]
    masked = [1]
    h = M.aggregate(t(e), nbrs, masked, gate_params(w_att, w_mp))
    np.testing.assert_allclose(h.data, brute_aggregate(e, nbrs, masked, w_att, w_mp), atol=1e-12)
    assert h.data[1].tobytes() == e[1].tobytes()
    # node 2 has no neighbors: self-only message
    np.testing.assert_allclose(h.data[2], (np.tanh(e[2] @ w_att) * e[2]) @ w_mp, atol=1e-12)


def test_aggregate_ptr_form_equals_list_form():
    rng = np.random.default_rng(9)
    e = rng.normal(size=(4, 3))
    params = gate_params(rng.normal(size=(3, 3)), rng.normal(size=(3, 3)))
    nbrs = [[1, 2], [0], [], [0, 1, 2]]
    ptr = np.array([0, 2, 3, 3, 6])
    nodes = np.array([1, 2, 0, 0, 1, 2])
    a = M.aggregate(t(e), nbrs, [3], params).data
    b = M.aggregate(t(e), (ptr, nodes), [3], params).data
    assert a.tobytes() == b.tobytes()


def test_aggregate_all_masked_and_zero_attention():
    rng = np.random.default_rng(1)
    e = rng.normal(size=(5, 3))
    nbrs = [[1], [2], [3], [4], [0]]
    params = gate_params(rng.normal(size=(3, 3)), rng.normal(size=(3, 3)))
    assert M.aggregate(t(e), nbrs, list(range(5)), params).data.tobytes() == e.tobytes()
    h = M.aggregate(t(e), nbrs, [0], gate_params(np.zeros((3, 3)), rng.normal(size=(3, 3)))).data
    assert not h[1:].any() and h[0].tobytes() == e[0].tobytes()


def test_decode_topology():
    q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(4, 4)))
    np.testing.assert_allclose(M.decode_topology(t(q)).data, np.eye(4), atol=1e-12)
    h = np.random.default_rng(1).normal(size=(20, 4))
    h[3] = 0
    a_hat = M.decode_topology(t(h)).data
    assert not a_hat[3].any() and not a_hat[:, 3].any()
    oracle = np.array([[sum(h[i, k] * h[j, k] for k in range(4)) for j in range(20)] for i in range(20)])
    np.testing.assert_allclose(a_hat, oracle, atol=1e-12)


def test_dense_budget():
    M.check_dense_budget(1000)
    with pytest.raises(CapacityError, match="topo-batch"):
        M.check_dense_budget(30000)
    with pytest.raises(CapacityError):
        M.check_dense_budget(100, budget=1000)


def test_decode_attribute():
    rng = np.random.default_rng(2)
    g = random_graph(12, seed=2)
    a_norm = normalized_adjacency(g, "symmetric", self_loops=True)
    gcn = SimpleNamespace(dec1=t(rng.normal(size=(3, 5))), dec2=None)
    mlp = SimpleNamespace(dec1=t(rng.normal(size=(3, 3))), dec2=t(rng.normal(size=(3, 5))))
    for kind, p in (("gcn", gcn), ("mlp", mlp)):
        assert not M.decode_attribute(t(np.zeros((12, 3))), a_norm, p, kind).data.any()
    h = rng.normal(size=(12, 3))
    np.testing.assert_allclose(
        M.decode_attribute(t(h), a_norm, gcn, "gcn").data, np.tanh(a_norm.toarray() @ h) @ gcn.dec1.data, atol=1e-12
    )
    np.testing.assert_allclose(
        M.decode_attribute(t(h), a_norm, mlp, "two-layer-perceptron").data,
        np.tanh(h @ mlp.dec1.data) @ mlp.dec2.data, atol=1e-12,
    )
    single = Graph.from_edges(1, np.zeros((0, 2), dtype=np.int64), np.ones((1, 5)))
    one = normalized_adjacency(single, "symmetric", self_loops=True)
    np.testing.assert_allclose(M.decode_attribute(t(h[:1]), one, gcn).data, np.tanh(h[:1]) @ gcn.dec1.data)


def test_anomaly_scores():
    rng = np.random.default_rng(4)
    a = (rng.random((10, 10)) < 0.3).astype(float)
    x = rng.normal(size=(10, 6))
    assert not M.anomaly_scores(a, a, x, x, 0.5).any()
    a_hat, x_hat = rng.normal(size=(10, 10)), rng.normal(size=(10, 6))
    np.testing.assert_array_equal(M.anomaly_scores(a, a_hat, x, x_hat, 1.0), ((x - x_hat) ** 2).sum(1))
    brute = [0.3 * sum((a[i, j] - a_hat[i, j]) ** 2 for j in range(10)) + 0.7 * sum((x[i, j] - x_hat[i, j]) ** 2 for j in range(6))
             for i in range(10)]
    np.testing.assert_allclose(M.anomaly_scores(sp.csr_matrix(a), a_hat, x, x_hat, 0.7), brute, rtol=1e-13)
    perm = rng.permutation(10)
    s = M.anomaly_scores(a, a_hat, x, x_hat, 0.4)
    sp_ = M.anomaly_scores(a[np.ix_(perm, perm)], a_hat[np.ix_(perm, perm)], x[perm], x_hat[perm], 0.4)
    np.testing.assert_allclose(sp_, s[perm], rtol=1e-14)


def test_loss_examples_and_identity():
    rng = np.random.default_rng(5)
    params = M.ModelParams.init(4, M.ModelConfig(hidden=3), rng)
    a = (rng.random((6, 6)) < 0.4).astype(float)
    x = rng.normal(size=(6, 4))
    total, _, _ = M.loss(a, t(a), x, t(x), 0.5, 0.0, params)
    assert float(total.data) == 0.0
    total, _, _ = M.loss(a, t(a), x, t(x), 0.5, 1.0, params)
    assert float(total.data) == pytest.approx(sum((p.data ** 2).sum() for p in params.tensors()), rel=1e-14)
    a_hat, x_hat = t(rng.normal(size=(6, 6))), t(rng.normal(size=(6, 4)))
    for alpha in (0.0, 0.3, 1.0):
        total, topo, attr = M.loss(a, a_hat, x, x_hat, alpha, 0.0, params)
        s = M.anomaly_scores(a, a_hat, x, x_hat, alpha)
        assert float(total.data) == pytest.approx(s.mean(), abs=1e-9)


def setup_forward(seed=0, n=25, d=6, hidden=4, **cfg):
    g = random_graph(n, p=0.2, d=d, seed=seed)
    config = M.ModelConfig(hidden=hidden, **cfg)
    rng = np.random.default_rng(seed)
    params = M.ModelParams.init(d, config, rng)
    pool = build_pool(g, PoolConfig(knn_k=4, sample_size=5), rng)
    nb = pool.sample(pool.mixture(np.full(4, 0.25)), 5, rng)
    return g, config, params, M.GraphData.from_graph(g), nb


@pytest.mark.parametrize("decoder", ["gcn", "mlp"])
def test_forward_identities(decoder):
    g, cfg, params, data, nb = setup_forward(mask_rate=0.2, lam=0.01, decoder=decoder)
    out = M.forward(data, params, cfg, nb)
    assert out.masked.size == 5
    for i in out.masked:
        assert out.h.data[i].tobytes() == out.e.data[i].tobytes()
    reg = cfg.lam * sum((p.data ** 2).sum() for p in params.tensors())
    assert out.scores.mean() == pytest.approx(float(out.loss.data) - reg, abs=1e-9)
    assert out.loss_topo == pytest.approx(float(np.mean(((data.adj_dense - out.h.data @ out.h.data.T) ** 2).sum(1))))


@pytest.mark.parametrize("seed", range(4))
def test_end_to_end_gradients(seed):
    g, cfg, params, data, nb = setup_forward(seed=seed, n=12, d=4, hidden=3, mask_rate=0.1, lam=0.01)

    def loss():
        return M.forward(data, params, cfg, nb).loss

    assert ad.finite_difference_check(loss, params.tensors()) <= 1.0


def test_alpha_one_removes_topology_gradient_path():
    g, cfg, params, data, nb = setup_forward(alpha=1.0, lam=0.0)
    out = M.forward(data, params, cfg, nb)
    assert float(out.loss.data) == pytest.approx(out.loss_attr, rel=1e-12)


def test_minibatch_topology_matches_dense_scores():
    g, cfg, params, data, nb = setup_forward(seed=3, n=30, topo_batch=10)
    dense_cfg = M.ModelConfig(hidden=cfg.hidden, topo_batch=0)
    small = M.forward(M.GraphData.from_graph(g, dense=False), params, cfg, nb, np.random.default_rng(0))
    full = M.forward(data, params, dense_cfg, nb)
    np.testing.assert_allclose(small.scores, full.scores, rtol=1e-12)
    assert np.isfinite(float(small.loss.data))
