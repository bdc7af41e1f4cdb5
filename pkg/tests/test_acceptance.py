"""Acceptance gate: ten numbered behaviour criteria, one test each.

Run with ``pytest tests/test_acceptance.py -v`` for a pass/fail line per
criterion; add ``-s`` to see the measured values behind each verdict.
Criteria 1-7 are fast oracle checks; 8 and 10 share one module-scoped
MNIST pipeline (three 15-epoch trainings on 10k images) and 9 fits ten
small regressions, so the full gate takes several minutes of CPU.
"""

import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from walkconv import (
    CorrelationMatrix,
    Dataset,
    NeighborTable,
    SimilarityGraph,
    TrainConfig,
    apply_feature_selection,
    correlation_from_data,
    count_parameters,
    dense_backward,
    dense_forward,
    evaluate,
    expected_visits,
    filter_features,
    gather_neighbors,
    graph_conv_backward,
    graph_conv_forward,
    grid_graph,
    linear_rmse_head,
    parse_architecture,
    r_squared,
    read_idx,
    scatter_add_grad,
    seed_streams,
    select_neighbors,
    similarity_from_correlation,
    softmax_cross_entropy_head,
    sparse_neighbors_bfs,
    take,
    train,
    transition_from_similarity,
    DenseLayer,
    GraphConvLayer,
)

REPO = Path(__file__).resolve().parents[1]
MNIST_DIR = REPO / "data" / "mnist"


def report(num, text):
    print(f"criterion {num:2d}: PASS — {text}", flush=True)


def random_similarity(rng, n, low=0.0):
    s = rng.uniform(low, 1.0, (n, n))
    s = (s + s.T) / 2
    np.fill_diagonal(s, 0.0)
    return SimilarityGraph(s)


def visits_of(graph, k):
    return expected_visits(transition_from_similarity(graph), k)


# ---------------------------------------------------------------------------
# 1. parameter counts
# ---------------------------------------------------------------------------


def test_criterion_01_parameter_counts():
    t0 = time.time()
    n, p = 717, 6
    indices = (np.arange(n)[:, None] + np.arange(p)[None, :]) % n
    table = NeighborTable(indices=indices, weights=None,
                          pad_mask=np.zeros((n, p), dtype=bool), k=1)
    expected = {
        "": 7_180,
        "C20": 143_550,
        "C20-C20": 145_970,
        "C20-FC512": 7_347_862,
        "FC512-FC512": 635_402,
    }
    rng = np.random.default_rng(0)
    got = {}
    for spec, want in expected.items():
        net = parse_architecture(
            spec, n_nodes=n, d_input=1, n_outputs=10,
            table=table if "C" in spec.replace("FC", "") else None,
            dropout_rate=0.2, task="classification", rng=rng)
        got[spec] = count_parameters(net)
        assert got[spec] == want, f"{spec!r}: {got[spec]} != {want}"
    wall = time.time() - t0
    assert wall < 1.0
    report(1, f"counts {got} exact, wall {wall:.2f}s")


# ---------------------------------------------------------------------------
# 2. grid graph reduces to the regular 5x5 convolution window
# ---------------------------------------------------------------------------


def test_criterion_02_grid_equals_regular_convolution():
    t0 = time.time()
    table = select_neighbors(visits_of(grid_graph(28, 28), k=3), p=25)
    checked = 0
    for r in range(2, 26):
        for c in range(2, 26):
            window = {rr * 28 + cc
                      for rr in range(r - 2, r + 3)
                      for cc in range(c - 2, c + 3)}
            assert set(table.indices[r * 28 + c].tolist()) == window, \
                f"pixel ({r},{c}) neighbor set is not its 5x5 window"
            checked += 1
    wall = time.time() - t0
    assert wall < 10.0
    report(2, f"{checked} interior pixels match the 5x5 window, wall {wall:.2f}s")


# ---------------------------------------------------------------------------
# 3. expected visits vs naive power-sum oracle
# ---------------------------------------------------------------------------


def test_criterion_03_visit_matrix_power_sum_oracle():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 51))
        k = int(rng.integers(0, 7))
        graph = random_similarity(rng, n)
        transition = transition_from_similarity(graph)
        q = expected_visits(transition, k).visits
        oracle = sum(np.linalg.matrix_power(transition.probs, m)
                     for m in range(k + 1))
        worst = max(worst, float(np.abs(q - oracle).max()))
        assert np.abs(q - oracle).max() < 1e-12
        assert np.abs(q.sum(axis=1) - (k + 1)).max() < 1e-9
    report(3, f"50 graphs (n<=50, k<=6), worst entrywise diff {worst:.2e}")


# ---------------------------------------------------------------------------
# 4. sparse BFS path equals the dense path
# ---------------------------------------------------------------------------


def test_criterion_04_sparse_dense_agreement():
    import scipy.sparse as sp

    rng = np.random.default_rng(4)
    for trial in range(25):
        n = int(rng.integers(20, 501))
        a = sp.random(n, n, density=4.0 / n,
                      random_state=np.random.RandomState(int(rng.integers(1 << 31))),
                      format="csr")
        a = sp.csr_array(a + a.T)
        a.setdiag(0)
        a.eliminate_zeros()
        graph = SimilarityGraph(sp.csr_array(a))
        k = int(rng.integers(1, 4))
        p = int(rng.integers(1, 11))
        variant = "conv2" if trial % 2 else "conv1"
        corr = None
        if variant == "conv2":
            c = rng.uniform(-1, 1, (n, n))
            c = (c + c.T) / 2
            np.fill_diagonal(c, 1.0)
            corr = CorrelationMatrix(corr=c, valid_mask=np.ones(n, dtype=bool))
        sparse_t = sparse_neighbors_bfs(graph, k, p, variant=variant, corr=corr)
        dense_t = select_neighbors(visits_of(graph.to_dense(), k), p,
                                   variant=variant, corr=corr)
        assert np.array_equal(sparse_t.indices, dense_t.indices)
        assert np.array_equal(sparse_t.pad_mask, dense_t.pad_mask)
        if variant == "conv2":
            assert np.abs(sparse_t.weights - dense_t.weights).max() <= 1e-10
    report(4, "25 sparse graphs (n<=500): indices exact, conv2 weights <=1e-10")


# ---------------------------------------------------------------------------
# 5. analytic gradients vs central finite differences
# ---------------------------------------------------------------------------


def fd_grad(loss_fn, x, h=1e-5):
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        up = loss_fn()
        x[idx] = orig - h
        down = loss_fn()
        x[idx] = orig
        grad[idx] = (up - down) / (2.0 * h)
    return grad


def rel_err(a, b):
    denom = max(np.linalg.norm(a.ravel()), np.linalg.norm(b.ravel()), 1e-300)
    return np.linalg.norm((a - b).ravel()) / denom


def random_conv_table(rng, n, p, variant):
    indices = np.empty((n, p), dtype=np.int64)
    pad = np.zeros((n, p), dtype=bool)
    for i in range(n):
        order = rng.permutation(n)
        indices[i] = np.concatenate([[i], order[order != i]])[:p]
        if p >= 2 and rng.random() < 0.4:
            indices[i, -1] = i
            pad[i, -1] = True
    weights = None
    if variant == "conv2":
        weights = rng.standard_normal((n, p))
        weights[pad] = 0.0
    return NeighborTable(indices=indices, weights=weights, pad_mask=pad,
                         k=1, variant=variant)


def test_criterion_05_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    tol = 1e-6
    worst = 0.0

    for variant in ("conv1", "conv2"):
        for _ in range(10):
            n = int(rng.integers(3, 7))
            p = int(rng.integers(1, min(n, 4) + 1))
            d_in, d_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            layer = GraphConvLayer(random_conv_table(rng, n, p, variant),
                                   d_in, d_out, rng=rng)
            x = rng.standard_normal((2, n, d_in))
            probe = rng.standard_normal((2, n, d_out))
            loss = lambda: float((graph_conv_forward(layer, x) * probe).sum())
            grad_w, grad_b, grad_x = graph_conv_backward(layer, x, probe)
            for analytic, arr in ((grad_w, layer.weights), (grad_b, layer.bias),
                                  (grad_x, x)):
                err = rel_err(analytic, fd_grad(loss, arr))
                worst = max(worst, err)
                assert err < tol

    for _ in range(10):
        layer = DenseLayer(int(rng.integers(1, 6)), int(rng.integers(1, 6)), rng=rng)
        x = rng.standard_normal((3, layer.weights.shape[0]))
        probe = rng.standard_normal((3, layer.weights.shape[1]))
        loss = lambda: float((dense_forward(layer, x) * probe).sum())
        grad_w, grad_b, grad_x = dense_backward(layer, x, probe)
        for analytic, arr in ((grad_w, layer.weights), (grad_b, layer.bias),
                              (grad_x, x)):
            err = rel_err(analytic, fd_grad(loss, arr))
            worst = max(worst, err)
            assert err < tol

    for _ in range(10):
        m, c = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        logits = rng.standard_normal((m, c))
        labels = rng.integers(0, c, size=m)
        _, grad = softmax_cross_entropy_head(logits, labels)
        err = rel_err(grad, fd_grad(
            lambda: softmax_cross_entropy_head(logits, labels)[0], logits))
        worst = max(worst, err)
        assert err < tol

    for _ in range(10):
        m = int(rng.integers(2, 8))
        scores = rng.standard_normal((m, 1))
        targets = rng.standard_normal(m)
        _, grad = linear_rmse_head(scores, targets)
        err = rel_err(grad, fd_grad(
            lambda: linear_rmse_head(scores, targets)[0], scores))
        worst = max(worst, err)
        assert err < tol

    report(5, f"conv (both variants), dense, both heads x10 each; "
              f"worst relative error {worst:.2e}")


# ---------------------------------------------------------------------------
# 6. gather/scatter adjoint pairing
# ---------------------------------------------------------------------------


def test_criterion_06_adjoint_pairing():
    rng = np.random.default_rng(6)
    worst = 0.0
    for trial in range(100):
        n = int(rng.integers(2, 9))
        p = int(rng.integers(1, min(n, 5) + 1))
        d = int(rng.integers(1, 5))
        m = int(rng.integers(1, 4))
        variant = "conv2" if trial % 2 else "conv1"
        table = random_conv_table(rng, n, p, variant)
        x = rng.standard_normal((m, n, d))
        g = rng.standard_normal((m, n, p, d))
        lhs = float((gather_neighbors(x, table) * g).sum())
        rhs = float((x * scatter_add_grad(g, table)).sum())
        worst = max(worst, abs(lhs - rhs))
        assert abs(lhs - rhs) < 1e-10
    report(6, f"100 instances, worst |<gather(x),g> - <x,scatter(g)>| = {worst:.2e}")


# ---------------------------------------------------------------------------
# 7. Q^(k)/k approaches the stationary distribution
# ---------------------------------------------------------------------------


def test_criterion_07_stationary_distribution_limit():
    rng = np.random.default_rng(7)
    pairs = []
    for _ in range(10):
        graph = random_similarity(rng, 10, low=0.1)
        transition = transition_from_similarity(graph)
        evals, evecs = np.linalg.eig(transition.probs.T)
        lead = np.argmin(np.abs(evals - 1.0))
        pi = np.real(evecs[:, lead])
        pi = pi / pi.sum()

        def deviation(k):
            q = expected_visits(transition, k).visits
            return float(np.abs(q / k - pi[None, :]).max())

        d4, d256 = deviation(4), deviation(256)
        assert d256 < d4
        pairs.append((d4, d256))
    worst_ratio = max(b / a for a, b in pairs)
    report(7, f"10 ergodic chains: max|Q/k - pi| shrank from k=4 to k=256 "
              f"in all cases (worst ratio {worst_ratio:.3f})")


# ---------------------------------------------------------------------------
# 8 & 10. MNIST desk scale + determinism (shared pipeline)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def mnist_pipeline():
    full = read_idx(MNIST_DIR / "train-images-idx3-ubyte.gz",
                    MNIST_DIR / "train-labels-idx1-ubyte.gz")
    train_raw = take(full, 10_000)
    filtered = filter_features(train_raw, drop_constant=True)
    corr = correlation_from_data(filtered.features)
    table = select_neighbors(visits_of(similarity_from_correlation(corr), k=1),
                             p=6, variant="conv1")
    test_ds = apply_feature_selection(
        Dataset(full.features[10_000:12_000], full.targets[10_000:12_000]),
        filtered.feature_index_map)

    def fit(spec):
        cfg = TrainConfig(learning_rate=0.001, epochs=15, batch_size=64,
                          seed=0, dropout_rate=0.2, task="classification")
        init_seq, _, _ = seed_streams(0)
        net = parse_architecture(
            spec, n_nodes=filtered.n_features, d_input=1, n_outputs=10,
            table=table if spec else None, dropout_rate=0.2,
            task="classification", rng=np.random.default_rng(init_seq))
        history = train(net, filtered, cfg)
        return net, history

    return SimpleNamespace(test=test_ds, n_features=filtered.n_features,
                           fit=fit, cache={})


def test_criterion_08_mnist_desk_scale(mnist_pipeline):
    t0 = time.time()
    logistic, _ = mnist_pipeline.fit("")
    base = evaluate(logistic, mnist_pipeline.test)["error_rate"]
    conv_net, history = mnist_pipeline.fit("C20")
    err = evaluate(conv_net, mnist_pipeline.test)["error_rate"]
    mnist_pipeline.cache["c20"] = (conv_net, history)
    wall = time.time() - t0

    assert 0.07 <= base <= 0.12, f"logistic baseline {base:.2%} outside 7-12%"
    assert err < 0.6 * base, f"C20 {err:.2%} not < 0.6 x logistic {base:.2%}"
    assert err < 0.05, f"C20 test error {err:.2%} not < 5%"
    report(8, f"{mnist_pipeline.n_features} features, logistic {base:.2%}, "
              f"C20 {err:.2%} (ratio {err / base:.3f}), wall {wall:.0f}s")


def test_criterion_09_planted_block_regression_beats_ols():
    m_total, n_feat, n_blocks, block = 2000, 300, 30, 10
    n_train = 1600

    def make_data(seed):
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((m_total, n_blocks))
        x = np.repeat(z, block, axis=1) + 0.3 * rng.standard_normal((m_total, n_feat))
        lin = (0.8 * z[:, 0] - 0.8 * z[:, 1] + 0.6 * z[:, 2]
               + 0.6 * z[:, 3] + 0.5 * z[:, 4] + 0.5 * z[:, 5])
        inter = (0.7 * z[:, 0] * z[:, 1] + 0.7 * z[:, 2] * z[:, 3]
                 + 0.7 * z[:, 4] * z[:, 5])
        y = lin + inter + 0.5 * rng.standard_normal(m_total)
        return x, y

    wins, rows = 0, []
    for seed in range(10):
        x, y = make_data(seed)
        x_tr, y_tr = x[:n_train], y[:n_train]
        x_te, y_te = x[n_train:], y[n_train:]

        corr = correlation_from_data(x_tr)
        table = select_neighbors(
            visits_of(similarity_from_correlation(corr), k=1), p=5)

        cfg = TrainConfig(learning_rate=0.001, epochs=40, batch_size=64,
                          seed=seed, dropout_rate=0.1, task="regression")
        init_seq, _, _ = seed_streams(seed)
        net = parse_architecture("C10-FC100", n_nodes=n_feat, d_input=1,
                                 n_outputs=1, table=table, dropout_rate=0.1,
                                 task="regression",
                                 rng=np.random.default_rng(init_seq))
        train(net, Dataset(x_tr, y_tr), cfg)
        net_r2 = evaluate(net, Dataset(x_te, y_te))["r_squared"]

        a_tr = np.hstack([np.ones((n_train, 1)), x_tr])
        coef, *_ = np.linalg.lstsq(a_tr, y_tr, rcond=None)
        ols_r2 = r_squared(np.hstack([np.ones((len(x_te), 1)), x_te]) @ coef, y_te)

        wins += net_r2 >= ols_r2 + 0.02
        rows.append((seed, net_r2, ols_r2))

    assert wins >= 8, f"only {wins}/10 seeds beat OLS by >= 0.02: {rows}"
    mean_net = np.mean([r[1] for r in rows])
    mean_ols = np.mean([r[2] for r in rows])
    report(9, f"{wins}/10 seeds: C10-FC100 mean R^2 {mean_net:.3f} vs "
              f"OLS {mean_ols:.3f}")


def test_criterion_10_seeded_rerun_is_identical(mnist_pipeline):
    first = mnist_pipeline.cache.get("c20") or mnist_pipeline.fit("C20")
    net1, hist1 = first
    net2, hist2 = mnist_pipeline.fit("C20")

    def strip(history):
        return [{k: v for k, v in row.items() if k != "wall_ms"}
                for row in history]

    assert strip(hist1) == strip(hist2), "epoch logs differ between reruns"
    for name, a, b in zip(net1.param_names(), net1.params(), net2.params()):
        np.testing.assert_array_equal(a, b, err_msg=f"{name} differs")
    report(10, f"two seeded C20 runs: {len(hist1)} epoch records and all "
               f"parameters identical")
