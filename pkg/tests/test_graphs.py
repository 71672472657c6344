"""GraphBatch tests: validation, derived adjacency operators against dense
numpy oracles, pooling, and block-diagonal batching."""

import numpy as np
import pytest

from mole.graphs import GraphBatch, GraphError


def dense_normalized(n, edges):
    """Independent oracle: D^{-1/2}(A+I)D^{-1/2} built densely."""
    a = np.zeros((n, n))
    for u, v in edges:
        if u != v:
            a[u, v] = a[v, u] = 1.0
    a_hat = a + np.eye(n)
    d = a_hat.sum(axis=1)
    dm = np.diag(1.0 / np.sqrt(d))
    return dm @ a_hat @ dm


def test_single_isolated_node():
    g = GraphBatch(np.array([[1.0, 2.0]]), [])
    assert g.num_nodes == 1 and g.num_graphs == 1
    np.testing.assert_array_equal(g.normalized_adjacency.toarray(), [[1.0]])
    assert g.undirected_edges.shape == (0, 2)


def test_normalized_adjacency_matches_dense_oracle():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(2, 12))
        m = int(rng.integers(0, n * (n - 1) // 2 + 1))
        edges = set()
        while len(edges) < m:
            u, v = rng.integers(0, n, size=2)
            if u != v:
                edges.add((min(u, v), max(u, v)))
        edges = sorted(edges)
        g = GraphBatch(rng.normal(size=(n, 3)), edges)
        np.testing.assert_allclose(
            g.normalized_adjacency.toarray(), dense_normalized(n, edges), atol=1e-12
        )


def test_duplicate_and_reversed_edges_collapse():
    g = GraphBatch(np.zeros((3, 1)), [(0, 1), (1, 0), (0, 1)])
    a = g.adjacency.toarray()
    np.testing.assert_array_equal(a, [[0, 1, 0], [1, 0, 0], [0, 0, 0]])
    np.testing.assert_array_equal(g.undirected_edges, [[0, 1]])


def test_self_loops_dropped_from_adjacency():
    g = GraphBatch(np.zeros((2, 1)), [(0, 0), (0, 1)])
    assert g.adjacency.toarray()[0, 0] == 0.0
    # ... but the normalized operator still adds exactly one self-loop
    np.testing.assert_allclose(
        g.normalized_adjacency.toarray(), dense_normalized(2, [(0, 1)]), atol=1e-12
    )


def test_edge_out_of_range():
    with pytest.raises(GraphError, match="out of range"):
        GraphBatch(np.zeros((3, 2)), [(0, 5)])


def test_graph_ids_must_be_sorted_and_gapless():
    with pytest.raises(GraphError):
        GraphBatch(np.zeros((3, 1)), [], graph_ids=[0, 1, 0])
    with pytest.raises(GraphError):
        GraphBatch(np.zeros((3, 1)), [], graph_ids=[0, 0, 2])
    with pytest.raises(GraphError):
        GraphBatch(np.zeros((3, 1)), [], graph_ids=[1, 1, 2])


def test_cross_graph_edges_rejected():
    with pytest.raises(GraphError, match="cross"):
        GraphBatch(np.zeros((4, 1)), [(1, 2)], graph_ids=[0, 0, 1, 1])


def test_pool_matrix_means_per_graph():
    feats = np.arange(10.0).reshape(5, 2)
    g = GraphBatch(feats, [], graph_ids=[0, 0, 0, 1, 1])
    pooled = g.pool_matrix @ feats
    np.testing.assert_allclose(pooled[0], feats[:3].mean(axis=0))
    np.testing.assert_allclose(pooled[1], feats[3:].mean(axis=0))


def test_batch_block_diagonal():
    rng = np.random.default_rng(1)
    g1 = GraphBatch(rng.normal(size=(3, 2)), [(0, 1), (1, 2)])
    g2 = GraphBatch(rng.normal(size=(2, 2)), [(0, 1)])
    gb = GraphBatch.batch([g1, g2])
    assert gb.num_nodes == 5 and gb.num_graphs == 2
    np.testing.assert_array_equal(gb.graph_ids, [0, 0, 0, 1, 1])
    np.testing.assert_array_equal(gb.undirected_edges, [[0, 1], [1, 2], [3, 4]])
    a = gb.adjacency.toarray()
    assert a[2, 3] == 0.0 and a[0, 4] == 0.0  # no cross-graph coupling
    np.testing.assert_array_equal(
        gb.node_features.data,
        np.concatenate([g1.node_features.data, g2.node_features.data]),
    )


def test_neighbor_lists():
    g = GraphBatch(np.zeros((4, 1)), [(0, 1), (0, 2), (2, 3)])
    nbrs = [list(v) for v in g.neighbor_lists()]
    assert nbrs == [[1, 2], [0], [0, 3], [2]]
