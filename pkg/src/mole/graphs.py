"""Graph batch containers and the derived operators graph layers consume.

A :class:`GraphBatch` holds node features, an undirected edge list, and a
per-node graph index so that several graphs can live in one block-diagonal
batch. Derived matrices (symmetric-normalized adjacency with self-loops,
binary neighbor-sum adjacency, per-graph mean pooling) are built once as
sparse CSR operators and fed to the tensor engine through ``const_matmul``,
which keeps them constants on every tape.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .tensor import Tensor, TensorError


class GraphError(TensorError):
    """Invalid graph structure: bad endpoints, gaps or disorder in graph
    ids, or edges crossing graph boundaries."""


class GraphBatch:
    """Immutable batch of one or more graphs over a shared node axis.

    Args:
        node_features: [num_nodes, feat_dim] array or Tensor.
        edges: iterable of (src, dst) node-index pairs, interpreted as
            undirected; duplicates and reversed copies collapse.
        graph_ids: optional per-node graph index, non-decreasing starting
            at 0; omitted means a single graph.
    """

    def __init__(self, node_features, edges: Sequence = (), graph_ids=None):
        feats = node_features if isinstance(node_features, Tensor) else Tensor(node_features)
        if feats.data.ndim != 2:
            raise GraphError(f"node_features must be [n, d], got shape {feats.shape}")
        n = feats.shape[0]

        earr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                          dtype=np.intp)
        if earr.size == 0:
            earr = earr.reshape(0, 2)
        if earr.ndim != 2 or earr.shape[1] != 2:
            raise GraphError(f"edges must be (src, dst) pairs, got shape {earr.shape}")
        if earr.size and (earr.min() < 0 or earr.max() >= n):
            bad = earr[(earr < 0).any(axis=1) | (earr >= n).any(axis=1)][0]
            raise GraphError(f"edge {tuple(bad)} out of range for {n} nodes")

        if graph_ids is None:
            gids = np.zeros(n, dtype=np.intp)
        else:
            gids = np.asarray(graph_ids, dtype=np.intp)
            if gids.shape != (n,):
                raise GraphError(f"graph_ids length {gids.shape} != num_nodes {n}")
            if n and (np.diff(gids) < 0).any():
                raise GraphError("graph_ids must be non-decreasing")
            if n and (gids[0] != 0 or np.unique(gids).size != gids[-1] + 1):
                raise GraphError("graph_ids must cover 0..G-1 without gaps")
        if earr.size and (gids[earr[:, 0]] != gids[earr[:, 1]]).any():
            raise GraphError("edges may not cross graph boundaries")

        self.node_features = feats
        self.edges = earr
        self.graph_ids = gids
        self.num_nodes = n
        self.num_graphs = int(gids[-1]) + 1 if n else 0
        self._adjacency: Optional[sp.csr_matrix] = None
        self._normalized: Optional[sp.csr_matrix] = None
        self._pool: Optional[sp.csr_matrix] = None

    @property
    def feat_dim(self) -> int:
        return self.node_features.shape[1]

    @property
    def adjacency(self) -> sp.csr_matrix:
        """Binary symmetric adjacency, zero diagonal (explicit self-edges in
        the input are dropped — self interaction belongs to W_self)."""
        if self._adjacency is None:
            n = self.num_nodes
            e = self.edges
            e = e[e[:, 0] != e[:, 1]]
            rows = np.concatenate([e[:, 0], e[:, 1]])
            cols = np.concatenate([e[:, 1], e[:, 0]])
            a = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
            a = (a.tocsr() > 0).astype(np.float64)
            self._adjacency = a
        return self._adjacency

    @property
    def normalized_adjacency(self) -> sp.csr_matrix:
        """D^{-1/2} (A + I) D^{-1/2} with degrees taken from A + I."""
        if self._normalized is None:
            a_hat = self.adjacency + sp.eye(self.num_nodes, format="csr")
            deg = np.asarray(a_hat.sum(axis=1)).reshape(-1)
            d_inv_sqrt = sp.diags(1.0 / np.sqrt(deg))
            self._normalized = (d_inv_sqrt @ a_hat @ d_inv_sqrt).tocsr()
        return self._normalized

    @property
    def pool_matrix(self) -> sp.csr_matrix:
        """[num_graphs, num_nodes] mean-pooling operator."""
        if self._pool is None:
            counts = np.bincount(self.graph_ids, minlength=self.num_graphs)
            vals = 1.0 / counts[self.graph_ids]
            self._pool = sp.csr_matrix(
                (vals, (self.graph_ids, np.arange(self.num_nodes))),
                shape=(self.num_graphs, self.num_nodes),
            )
        return self._pool

    @property
    def undirected_edges(self) -> np.ndarray:
        """Unique undirected edges as (u, v) with u < v, self-loops dropped."""
        a = sp.triu(self.adjacency, k=1).tocoo()
        out = np.stack([a.row, a.col], axis=1).astype(np.intp)
        return out[np.lexsort((out[:, 1], out[:, 0]))]

    def neighbor_lists(self) -> list:
        """Per-node sorted neighbor index arrays (excluding the node)."""
        a = self.adjacency
        return [a.indices[a.indptr[v]:a.indptr[v + 1]] for v in range(self.num_nodes)]

    @classmethod
    def batch(cls, graphs: Sequence["GraphBatch"]) -> "GraphBatch":
        """Block-diagonal concatenation with node offsets and renumbered
        graph ids."""
        if not graphs:
            raise GraphError("cannot batch zero graphs")
        feats, edges, gids = [], [], []
        node_off = 0
        graph_off = 0
        for g in graphs:
            feats.append(g.node_features.data)
            if g.edges.size:
                edges.append(g.edges + node_off)
            gids.append(g.graph_ids + graph_off)
            node_off += g.num_nodes
            graph_off += g.num_graphs
        all_edges = np.concatenate(edges) if edges else np.zeros((0, 2), dtype=np.intp)
        return cls(np.concatenate(feats, axis=0), all_edges, np.concatenate(gids))

    def __repr__(self):
        return (f"GraphBatch(nodes={self.num_nodes}, edges={self.undirected_edges.shape[0]}, "
                f"graphs={self.num_graphs}, feat_dim={self.feat_dim})")
