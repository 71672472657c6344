"""Mutual-information machinery: the kernel-spectrum (matrix) estimator, the
Donsker-Varadhan neural estimator with bias-corrected training, a local-MI
scorer for grid representations, and a lightweight topology-aware scorer for
graphs. Every estimator returns an :class:`MIEstimate` whose ``tensor`` field
is the differentiable scalar, so objectives can be ascended through the
representation inputs while critic parameters stay scoped to their own tapes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .graphs import GraphBatch
from .layers import LayerSpec, init_params, layer_forward
from .optim import Adam
from .tensor import ContractError, DimensionError, NumericError, Tape, Tensor, backward

DEFAULT_ALPHA = 1.01
EMA_DECAY = 0.99
# The "median" bandwidth sentinel resolves to MEDIAN_SCALE * median pairwise
# distance. The raw batch median keeps the kernel spectrum rich enough that
# the independence null of the matrix estimator sits near 0.2 bits at
# n = 512; widening by a fixed factor pulls the null two orders of magnitude
# down while the heuristic stays scale-free. Verified empirically over
# dimensions 2..16 and seeds; see the estimator tests.
MEDIAN_SCALE = 2.5
_UNITS = {"matrix": "bits", "mine": "nats", "dim_local": "nats", "gmi_lite": "nats"}


@dataclass
class GramMatrix:
    """Trace-normalized RBF kernel matrix over a batch.

    ``entries`` is an [n, n] Tensor (possibly tape-recorded, so downstream
    entropies stay differentiable); ``bandwidth`` is the σ actually used.
    """

    entries: Tensor
    kernel: str = "rbf"
    bandwidth: float = 1.0
    trace_normalized: bool = True

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass
class MIEstimate:
    """A scalar MI value with units and provenance. ``tensor`` carries the
    differentiable scalar when the estimate was built under a tape."""

    value: float
    units: str
    estimator: str
    batch_size: int
    tensor: Optional[Tensor] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = _UNITS.get(self.estimator)
        if expected is not None and self.units != expected:
            raise ContractError(
                f"{self.estimator} reports {expected}, not {self.units}")


# ---------------------------------------------------------------------------
# Matrix-based estimator
# ---------------------------------------------------------------------------


def _median_distance(samples: np.ndarray) -> float:
    """Median pairwise Euclidean distance (possibly 0)."""
    x = np.asarray(samples, dtype=np.float64).reshape(len(samples), -1)
    sq = (x * x).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (x @ x.T), 0.0)
    iu = np.triu_indices(len(x), k=1)
    return float(np.median(np.sqrt(d2[iu]))) if iu[0].size else 0.0


def median_bandwidth(samples: np.ndarray) -> float:
    """Median pairwise Euclidean distance; 1.0 if the median is 0."""
    med = _median_distance(samples)
    return med if med > 0.0 else 1.0


def gram_matrix(samples, bandwidth="median") -> GramMatrix:
    """RBF Gram matrix K_ij = exp(-||x_i - x_j||^2 / (2 sigma^2)), divided by
    its trace (= n exactly, since every diagonal entry is 1).

    ``samples`` may be a Tensor; the result stays differentiable w.r.t. it.
    The bandwidth is selected from detached values and enters as a constant;
    the "median" sentinel resolves to MEDIAN_SCALE times the median pairwise
    distance (fallback 1.0 when the median is zero).
    """
    t = samples if isinstance(samples, Tensor) else Tensor(samples)
    if t.data.ndim != 2:
        t = T.reshape(t, (t.shape[0], int(np.prod(t.shape[1:], dtype=int))))
    n = t.shape[0]
    if n < 2:
        raise ContractError(f"gram_matrix: need at least 2 samples, got {n}")
    if not np.all(np.isfinite(t.data)):
        raise NumericError("gram_matrix: non-finite samples")
    if bandwidth == "median":
        med = _median_distance(t.data)
        sigma = MEDIAN_SCALE * med if med > 0.0 else 1.0
    else:
        sigma = float(bandwidth)
    if sigma <= 0:
        raise ContractError(f"gram_matrix: bandwidth must be positive, got {sigma}")
    dists = T.pairwise_sq_dists(t)
    kern = T.exp(T.mul(dists, -1.0 / (2.0 * sigma * sigma)))
    entries = T.mul(kern, 1.0 / n)
    return GramMatrix(entries=entries, bandwidth=sigma)


def _check_normalized(gram: GramMatrix):
    tr = float(np.trace(gram.entries.data))
    if not gram.trace_normalized or abs(tr - 1.0) > 1e-9:
        raise ContractError(f"gram matrix not trace-normalized (trace={tr!r})")


def renyi_entropy(gram: GramMatrix, alpha: float) -> float:
    """S_alpha = log2(sum_i lambda_i^alpha) / (1 - alpha) in bits, from the
    eigenvalue spectrum; eigenvalues below 1e-12 are excluded."""
    _check_normalized(gram)
    if alpha == 1.0:
        raise ContractError("renyi_entropy: alpha=1 undefined; use 1.01")
    with T.stop_recording():
        value = T.spectral_entropy(gram.entries, alpha).item()
    n = gram.n
    return float(min(max(value, 0.0), np.log2(n)))


def _entropy_tensor(entries: Tensor, alpha: float) -> Tensor:
    return T.spectral_entropy(entries, alpha)


def _per_channel_gram(x: Tensor, bandwidth) -> GramMatrix:
    """Grid inputs [n, C, H, W]: average the trace-normalized per-channel
    Gram matrices (the average of trace-1 PSD matrices is trace-1 PSD)."""
    n, c = x.shape[0], x.shape[1]
    grams = []
    sigmas = []
    for ch in range(c):
        sl = T.slice_(x, (slice(None), slice(ch, ch + 1)))
        g = gram_matrix(T.reshape(sl, (n, -1)), bandwidth)
        grams.append(T.mul(g.entries, 1.0 / c))
        sigmas.append(g.bandwidth)
    total = grams[0]
    for g in grams[1:]:
        total = T.add(total, g)
    return GramMatrix(entries=total, bandwidth=float(np.mean(sigmas)))


def _gram_for(x, bandwidth) -> GramMatrix:
    t = x if isinstance(x, Tensor) else Tensor(x)
    if t.data.ndim == 4:
        return _per_channel_gram(t, bandwidth)
    return gram_matrix(t, bandwidth)


def matrix_mi(x, z, alpha: float = DEFAULT_ALPHA, bandwidth_x="median",
              bandwidth_z="median") -> MIEstimate:
    """I(x; z) = S(A) + S(B) - S(joint) in bits, with the joint spectrum
    taken from the Hadamard product n * (A ∘ B).

    Since both factors carry exact 1/n diagonals, the Hadamard product has
    trace 1/n, so renormalizing is the constant scale by n — the whole chain
    stays differentiable w.r.t. both inputs.
    """
    tx = x if isinstance(x, Tensor) else Tensor(x)
    tz = z if isinstance(z, Tensor) else Tensor(z)
    if tx.shape[0] != tz.shape[0]:
        raise DimensionError(
            f"matrix_mi: batch mismatch {tx.shape[0]} vs {tz.shape[0]}")
    n = tx.shape[0]
    ga = _gram_for(tx, bandwidth_x)
    gb = _gram_for(tz, bandwidth_z)
    joint = T.mul(T.mul(ga.entries, gb.entries), float(n))
    s_a = _entropy_tensor(ga.entries, alpha)
    s_b = _entropy_tensor(gb.entries, alpha)
    s_j = _entropy_tensor(joint, alpha)
    mi = T.sub(T.add(s_a, s_b), s_j)
    value = max(mi.item(), 0.0)
    return MIEstimate(value=value, units="bits", estimator="matrix",
                      batch_size=n, tensor=mi,
                      meta={"alpha": alpha, "bandwidth_x": ga.bandwidth,
                            "bandwidth_z": gb.bandwidth,
                            "entropy_x": s_a.item(), "entropy_z": s_b.item()})


# ---------------------------------------------------------------------------
# DV-bound neural estimator
# ---------------------------------------------------------------------------

_critic_ids = itertools.count()


class CriticNet:
    """Two-layer scalar critic: concat(x, z) -> dense(hidden) relu ->
    dense(1). Parameters carry a ("critic", id) owner tag, so they are
    constants on every module tape and trainable only on this critic's own
    tape."""

    def __init__(self, x_dim: int, z_dim: int, hidden: int = 128,
                 seed: int = 0, lr: float = 1e-4):
        self.x_dim, self.z_dim, self.hidden = int(x_dim), int(z_dim), int(hidden)
        self.seed = int(seed)
        self.owner = ("critic", next(_critic_ids))
        self.specs = [
            LayerSpec("dense", self.x_dim + self.z_dim, self.hidden, activation="relu"),
            LayerSpec("dense", self.hidden, 1, activation="none"),
        ]
        self.layers = [init_params(s, seed=(self.seed, i), owner=self.owner)
                       for i, s in enumerate(self.specs)]
        self.opt = Adam(self.params, lr=lr)
        self.ema: Optional[float] = None

    @property
    def params(self) -> list:
        return [t for lp in self.layers for t in lp.tensors.values()]

    def score(self, x: Tensor, z: Tensor) -> Tensor:
        """Per-pair scalar scores, shape [n, 1]."""
        h = T.concat([x, z], axis=1)
        for spec, lp in zip(self.specs, self.layers):
            h = layer_forward(spec, lp, h)
        return h

    def save(self, path) -> None:
        params = [{k: t.data for k, t in lp.tensors.items()} for lp in self.layers]
        save_checkpoint(path, "critic", self.specs, params,
                        seeds={"init": self.seed},
                        meta={"x_dim": self.x_dim, "z_dim": self.z_dim,
                              "ema": self.ema})

    @classmethod
    def load(cls, path, lr: float = 1e-4) -> "CriticNet":
        state = load_checkpoint(path)
        meta = state["meta"]
        critic = cls(meta["x_dim"], meta["z_dim"],
                     hidden=state["specs"][0].out_dim,
                     seed=state["seeds"]["init"], lr=lr)
        for lp, arrays in zip(critic.layers, state["params"]):
            for name, arr in arrays.items():
                lp.tensors[name].data[...] = arr
        critic.ema = meta.get("ema")
        return critic


def _as_2d(x) -> Tensor:
    t = x if isinstance(x, Tensor) else Tensor(x)
    if t.data.ndim != 2:
        t = T.reshape(t, (t.shape[0], int(np.prod(t.shape[1:], dtype=int))))
    return t


def derangement(rng: np.random.Generator, n: int) -> np.ndarray:
    """In-batch permutation preferring no fixed points (up to 5 retries)."""
    perm = rng.permutation(n)
    for _ in range(4):
        if n < 2 or not np.any(perm == np.arange(n)):
            break
        perm = rng.permutation(n)
    return perm


def mine_dv_bound(critic: CriticNet, x, z, perm=None,
                  rng: Optional[np.random.Generator] = None) -> MIEstimate:
    """Donsker-Varadhan value E_joint[T] - log E_marginal[e^T] in nats.

    The marginal pairs come from an in-batch permutation of z (passed
    explicitly or drawn from ``rng``). Differentiable w.r.t. x and z; the
    critic parameters are owned elsewhere and stay constant on module tapes.
    """
    tx, tz = _as_2d(x), _as_2d(z)
    n = tx.shape[0]
    if n < 2:
        raise ContractError(f"mine_dv_bound: batch must be >= 2, got {n}")
    if tz.shape[0] != n:
        raise DimensionError(f"mine_dv_bound: batch mismatch {n} vs {tz.shape[0]}")
    if perm is None:
        perm = derangement(rng if rng is not None else np.random.default_rng(0), n)
    t_joint = critic.score(tx, tz)
    t_marg = critic.score(tx, T.gather_rows(tz, perm))
    bound = T.sub(T.tmean(t_joint), T.log(T.tmean(T.exp(t_marg))))
    return MIEstimate(value=bound.item(), units="nats", estimator="mine",
                      batch_size=n, tensor=bound)


def mine_train_step(critic: CriticNet, x, z, perm=None,
                    rng: Optional[np.random.Generator] = None):
    """One ascent step on the DV bound with the bias-corrected gradient: the
    log-denominator's gradient uses an exponential moving average of
    E[e^T] (decay 0.99) instead of the per-batch value.

    Returns (critic, bound value). The critic is updated in place.
    """
    tx = _as_2d(x.detach() if isinstance(x, Tensor) else Tensor(np.asarray(x)))
    tz = _as_2d(z.detach() if isinstance(z, Tensor) else Tensor(np.asarray(z)))
    n = tx.shape[0]
    if perm is None:
        perm = derangement(rng if rng is not None else np.random.default_rng(0), n)
    with Tape(owner=critic.owner):
        t_joint = critic.score(tx, tz)
        t_marg = critic.score(tx, T.gather_rows(tz, perm))
        mean_joint = T.tmean(t_joint)
        mean_exp = T.tmean(T.exp(t_marg))
        value = mean_joint.item() - float(np.log(mean_exp.item()))
        if not np.isfinite(value):
            raise NumericError(
                f"mine_train_step: non-finite bound (diagnostics: {T.diagnostics()})")
        ema = mean_exp.item() if critic.ema is None else (
            EMA_DECAY * critic.ema + (1.0 - EMA_DECAY) * mean_exp.item())
        surrogate = T.sub(mean_joint, T.mul(mean_exp, 1.0 / ema))
        grads = backward(surrogate)
    critic.opt.step(grads, maximize=True)
    critic.ema = ema
    return critic, value


# ---------------------------------------------------------------------------
# Local MI over grid positions
# ---------------------------------------------------------------------------


def dim_local_mi(feature_map, global_vec, critic: CriticNet, perms=None,
                 rng: Optional[np.random.Generator] = None,
                 max_positions: Optional[int] = None) -> MIEstimate:
    """DV bound averaged over spatial positions: each position's channel
    vector pairs with its sample's global vector, negatives are other
    samples' global vectors at the same position.

    ``max_positions`` subsamples positions (seeded) to bound cost; ``perms``
    may pin one permutation per evaluated position.
    """
    fm = feature_map if isinstance(feature_map, Tensor) else Tensor(feature_map)
    gv = _as_2d(global_vec)
    if fm.data.ndim != 4:
        raise DimensionError(f"dim_local_mi: feature map must be 4-D, got {fm.shape}")
    n, c, h, w = fm.shape
    if n < 2:
        raise ContractError("dim_local_mi: batch must be >= 2 for negatives")
    if gv.shape[0] != n:
        raise DimensionError(f"dim_local_mi: batch mismatch {n} vs {gv.shape[0]}")
    rng = rng if rng is not None else np.random.default_rng(0)

    total = h * w
    if max_positions is not None and max_positions < total:
        pos = np.sort(rng.choice(total, size=max_positions, replace=False))
    else:
        pos = np.arange(total)
    npos = pos.size

    # locals laid out position-minor within each sample: row = i*npos + p
    flat = T.reshape(T.permute(fm, (0, 2, 3, 1)), (n * total, c))
    row_idx = (np.arange(n)[:, None] * total + pos[None, :]).reshape(-1)
    locals_ = T.gather_rows(flat, row_idx)

    tiled = T.gather_rows(gv, np.repeat(np.arange(n), npos))
    if perms is None:
        perms = np.stack([derangement(rng, n) for _ in range(npos)], axis=0)
    perms = np.asarray(perms)
    if perms.shape != (npos, n):
        raise ContractError(f"dim_local_mi: perms must be [{npos}, {n}]")
    neg_idx = perms.T.reshape(-1)  # row (i, p) -> perms[p][i]
    negs = T.gather_rows(gv, neg_idx)

    t_joint = critic.score(locals_, tiled)
    t_marg = critic.score(locals_, negs)
    # per-position DV: mean over samples minus log mean exp over samples
    joint_means = T.tmean(T.reshape(t_joint, (n, npos)), axis=0)
    log_denoms = T.log(T.tmean(T.exp(T.reshape(t_marg, (n, npos))), axis=0))
    bound = T.tmean(T.sub(joint_means, log_denoms))
    return MIEstimate(value=bound.item(), units="nats", estimator="dim_local",
                      batch_size=n, tensor=bound,
                      meta={"positions": int(npos), "total_positions": int(total)})


def dim_train_step(critic: CriticNet, feature_map, global_vec,
                   rng: Optional[np.random.Generator] = None,
                   max_positions: Optional[int] = None):
    """Ascend the local-MI objective in the critic's parameters."""
    fm = Tensor(np.asarray(feature_map.data if isinstance(feature_map, Tensor)
                           else feature_map))
    gv = Tensor(np.asarray(global_vec.data if isinstance(global_vec, Tensor)
                           else global_vec))
    with Tape(owner=critic.owner):
        est = dim_local_mi(fm, gv, critic, rng=rng, max_positions=max_positions)
        if not np.isfinite(est.value):
            raise NumericError("dim_train_step: non-finite objective")
        grads = backward(est.tensor)
    critic.opt.step(grads, maximize=True)
    return critic, est.value


# ---------------------------------------------------------------------------
# Topology-aware MI (simplified)
# ---------------------------------------------------------------------------


def _feature_term(node_input: Tensor, node_repr: Tensor, graph: GraphBatch,
                  critic: CriticNet, rng: np.random.Generator,
                  neg_per_node: int, max_nodes: Optional[int]):
    """Mean over nodes v of the DV bound between h_v and the input features
    of v's closed 1-hop neighborhood; negatives are random other nodes."""
    n = graph.num_nodes
    if max_nodes is not None and max_nodes < n:
        picked = np.sort(rng.choice(n, size=max_nodes, replace=False))
    else:
        picked = np.arange(n)

    adj = graph.adjacency
    pair_v, pair_u = [], []
    for v in picked:
        nbrs = adj.indices[adj.indptr[v]:adj.indptr[v + 1]]
        us = np.concatenate([[v], nbrs])
        pair_v.append(np.full(us.size, v))
        pair_u.append(us)
    pair_v = np.concatenate(pair_v)
    pair_u = np.concatenate(pair_u)

    h_pos = T.gather_rows(node_repr, pair_v)
    x_pos = T.gather_rows(node_input, pair_u)
    scores_pos = critic.score(h_pos, x_pos)
    # average within each v's neighborhood, then across picked nodes
    rows = np.searchsorted(picked, pair_v)
    counts = np.bincount(rows, minlength=picked.size)
    avg = sp.csr_matrix((1.0 / counts[rows], (rows, np.arange(pair_v.size))),
                        shape=(picked.size, pair_v.size))
    pos_means = T.const_matmul(avg, scores_pos)  # [k, 1]

    neg_u = rng.integers(0, n, size=(picked.size, neg_per_node))
    h_neg = T.gather_rows(node_repr, np.repeat(picked, neg_per_node))
    x_neg = T.gather_rows(node_input, neg_u.reshape(-1))
    scores_neg = critic.score(h_neg, x_neg)
    log_denoms = T.log(T.tmean(T.exp(T.reshape(scores_neg, (picked.size, neg_per_node))),
                               axis=1, keepdims=True))
    return T.tmean(T.sub(pos_means, log_denoms))


def _edge_term(node_repr: Tensor, graph: GraphBatch, rng: np.random.Generator):
    """DV-form contrast of sigmoid(h_u . h_v) link scores: true edges as the
    joint, uniformly sampled non-edges as the marginal. Returns None when the
    graph has no usable edge/non-edge contrast."""
    edges = graph.undirected_edges
    m = edges.shape[0]
    n = graph.num_nodes
    if m == 0 or n < 3:
        return None
    adj = graph.adjacency
    non_edges = []
    cap = 20 * m
    tries = 0
    while len(non_edges) < m and tries < cap:
        u, v = int(rng.integers(0, n)), int(rng.integers(0, n))
        tries += 1
        if u == v or adj[u, v] != 0 or graph.graph_ids[u] != graph.graph_ids[v]:
            continue
        non_edges.append((u, v))
    if not non_edges:
        return None
    non_edges = np.asarray(non_edges, dtype=np.intp)

    def link_scores(pairs):
        hu = T.gather_rows(node_repr, pairs[:, 0])
        hv = T.gather_rows(node_repr, pairs[:, 1])
        return T.sigmoid(T.tsum(T.mul(hu, hv), axis=1))

    s_true = link_scores(edges)
    s_non = link_scores(non_edges)
    return T.sub(T.tmean(s_true), T.log(T.tmean(T.exp(s_non))))


def gmi_lite(node_input, node_repr, graph: GraphBatch, critic: CriticNet,
             rng: Optional[np.random.Generator] = None, neg_per_node: int = 10,
             max_nodes: Optional[int] = None) -> MIEstimate:
    """0.5 * FeatureMI + 0.5 * EdgeMI in nats (weights shift to 1.0/0.0 when
    the graph offers no edge contrast; recorded in ``meta``).

    FeatureMI contrasts each node's representation against the input features
    of its closed neighborhood vs. random nodes, through ``critic``. EdgeMI
    contrasts sigmoid(h_u . h_v) link scores on true edges vs. sampled
    non-edges and needs no learned parameters.
    """
    xi = _as_2d(node_input)
    hr = _as_2d(node_repr)
    n = graph.num_nodes
    if xi.shape[0] != n or hr.shape[0] != n:
        raise DimensionError(
            f"gmi_lite: graph has {n} nodes, features {xi.shape[0]}/{hr.shape[0]}")
    rng = rng if rng is not None else np.random.default_rng(0)

    feat = _feature_term(xi, hr, graph, critic, rng, neg_per_node, max_nodes)
    edge = _edge_term(hr, graph, rng)
    if edge is None:
        total = feat
        weights = (1.0, 0.0)
    else:
        total = T.add(T.mul(feat, 0.5), T.mul(edge, 0.5))
        weights = (0.5, 0.5)
    return MIEstimate(value=total.item(), units="nats", estimator="gmi_lite",
                      batch_size=n, tensor=total,
                      meta={"w_feature": weights[0], "w_edge": weights[1],
                            "feature_mi": feat.item(),
                            "edge_mi": edge.item() if edge is not None else None})


def gmi_train_step(critic: CriticNet, node_input, node_repr, graph: GraphBatch,
                   rng: Optional[np.random.Generator] = None,
                   neg_per_node: int = 10, max_nodes: Optional[int] = None):
    """Ascend the feature term in the critic's parameters (the edge term has
    none)."""
    xi = Tensor(np.asarray(_as_2d(node_input).data))
    hr = Tensor(np.asarray(_as_2d(node_repr).data))
    with Tape(owner=critic.owner):
        est = gmi_lite(xi, hr, graph, critic, rng=rng,
                       neg_per_node=neg_per_node, max_nodes=max_nodes)
        if not np.isfinite(est.value):
            raise NumericError("gmi_train_step: non-finite objective")
        grads = backward(est.tensor)
    critic.opt.step(grads, maximize=True)
    return critic, est.value
