"""Post-hoc analysis over a trained model: accuracy, the per-layer
information-plane trajectory (I(T_k;X), I(T_k;Y)), ordering checks against
the data-processing inequality, and per-layer embedding exports with a 2-D
PCA projection for external plotting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import Dataset
from .estimators import matrix_mi
from .tensor import ContractError, Tensor
from .trainer import Model, _dataset_batch, one_hot, predict_scores

LOW_N_THRESHOLD = 50


@dataclass(frozen=True)
class InfoPlanePoint:
    layer_index: int
    i_tx_bits: float
    i_ty_bits: float
    batch_size: int
    bandwidth: float

    def __post_init__(self):
        if self.i_tx_bits < -1e-6 or self.i_ty_bits < -1e-6:
            raise ContractError(
                f"layer {self.layer_index}: negative information "
                f"({self.i_tx_bits}, {self.i_ty_bits})")


@dataclass(frozen=True)
class DPIReport:
    passed: bool
    violations: tuple
    tolerance_bits: float

    def log_lines(self) -> list:
        lines = [f"dpi passed={str(self.passed).lower()} "
                 f"tolerance_bits={self.tolerance_bits:.4f} "
                 f"violations={len(self.violations)}"]
        for i, j, delta in self.violations:
            lines.append(f"dpi-violation pair=({i},{j}) increase_bits={delta:.4f}")
        return lines


def accuracy(model: Model, data: Dataset, split: str) -> float:
    """Fraction of argmax-correct predictions on the split (argmax breaks
    ties toward the lowest class index)."""
    if model.output_width < data.class_count:
        raise ContractError(
            f"model outputs {model.output_width} classes, dataset has "
            f"{data.class_count}")
    idx = data.splits.get(split)
    if idx is None or len(idx) == 0:
        raise ContractError(f"empty split {split!r}")
    scores = predict_scores(model, data, idx)
    return float(np.mean(np.argmax(scores, axis=1) == data.labels[idx]))


def _subsample(idx: np.ndarray, cap: int, seed) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.intp)
    if len(idx) <= cap:
        return np.sort(idx)
    rng = np.random.default_rng((seed, 909))
    return np.sort(rng.choice(idx, size=cap, replace=False))


def _layer_pairs(model: Model, data: Dataset, sub: np.ndarray):
    """Per layer: (T_k rows, X-side rows, one-hot Y rows), row-aligned.

    Multigraph stacks mix node-level and graph-level layers; node-level
    layers pair with node features and inherit their graph's label, pooled
    layers pair with mean-pooled node features.
    """
    x, graph, labels = _dataset_batch(data, sub)
    with T.stop_recording():
        outs = model.layer_outputs(x, graph=graph)
    y_oh = one_hot(labels, data.class_count)
    pairs = []
    for t in outs:
        t_rows, x_rows, y_rows = t.data, x.data, y_oh
        if data.kind == "multigraph" and graph is not None:
            if t_rows.shape[0] == graph.num_nodes:
                y_rows = y_oh[graph.graph_ids]
            else:
                x_rows = np.asarray(graph.pool_matrix @ x.data)
        elif data.kind == "nodegraph":
            t_rows, x_rows = t_rows[sub], x.data[sub]
            y_rows = one_hot(data.labels[sub], data.class_count)
        pairs.append((t_rows, x_rows, y_rows))
    return pairs


def info_plane(model: Model, data: Dataset, split: str = "test",
               samples_per_estimate: int = 1000, seed: int = 0) -> list:
    """One InfoPlanePoint per layer on a seeded subsample of the split,
    both coordinates from the spectral estimator (no critic training, so
    the probe is deterministic given checkpoint + seed + subsample size)."""
    idx = data.splits.get(split)
    if idx is None or len(idx) == 0:
        raise ContractError(f"empty split {split!r}")
    sub = _subsample(idx, samples_per_estimate, seed)
    points = []
    for k, (t_rows, x_rows, y_rows) in enumerate(_layer_pairs(model, data, sub)):
        with T.stop_recording():
            mx = matrix_mi(t_rows, x_rows)
            my = matrix_mi(t_rows, y_rows)
        cap = math.log2(data.class_count)
        points.append(InfoPlanePoint(
            layer_index=k, i_tx_bits=mx.value,
            i_ty_bits=min(my.value, cap),
            batch_size=t_rows.shape[0], bandwidth=mx.meta["bandwidth_x"]))
    return points


def dpi_check(points: list, tolerance_bits: float = 0.15) -> DPIReport:
    """Flag every adjacent layer pair whose I(T;Y) increases by more than
    the tolerance — along the forward Markov chain the label information
    can only degrade, so increases are estimator noise or a bug."""
    if len(points) < 2:
        raise ContractError("dpi_check needs at least 2 layer points")
    violations = []
    for a, b in zip(points, points[1:]):
        delta = b.i_ty_bits - a.i_ty_bits
        if delta > tolerance_bits:
            violations.append((a.layer_index, b.layer_index, float(delta)))
    return DPIReport(passed=not violations, violations=tuple(violations),
                     tolerance_bits=float(tolerance_bits))


def write_info_plane(points: list, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("layer\ti_tx_bits\ti_ty_bits\tn\tbandwidth\n")
        for p in points:
            fh.write(f"{p.layer_index}\t{p.i_tx_bits:.17g}\t{p.i_ty_bits:.17g}"
                     f"\t{p.batch_size}\t{p.bandwidth:.17g}\n")


def read_info_plane(path) -> list:
    points = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("layer\t"):
            raise ContractError(f"{path}: not an info-plane file")
        for line in fh:
            layer, tx, ty, n, bw = line.rstrip("\n").split("\t")
            points.append(InfoPlanePoint(int(layer), float(tx), float(ty),
                                         int(n), float(bw)))
    return points


# ---------------------------------------------------------------------------
# Embedding export
# ---------------------------------------------------------------------------


def pca_top2(reprs: np.ndarray):
    """Top-2 principal directions of the (centered) representation matrix.

    Returns (projection [n, 2], eigenvalues [2], mean, components [d, 2]);
    signs are fixed so each component's largest-magnitude entry is positive.
    """
    reprs = np.asarray(reprs, dtype=np.float64)
    if reprs.ndim != 2 or reprs.shape[0] < 2:
        raise ContractError(f"pca_top2: need [n>=2, d], got {reprs.shape}")
    mean = reprs.mean(axis=0)
    centered = reprs - mean
    cov = centered.T @ centered / (reprs.shape[0] - 1)
    lam, vec = np.linalg.eigh(cov)
    order = np.argsort(lam)[::-1][:2]
    lam, vec = lam[order], vec[:, order]
    if vec.shape[1] < 2:  # single-feature layer: pad a null direction
        vec = np.pad(vec, ((0, 0), (0, 2 - vec.shape[1])))
        lam = np.pad(lam, (0, 2 - lam.shape[0]))
    for j in range(2):
        pivot = np.argmax(np.abs(vec[:, j]))
        if vec[pivot, j] < 0:
            vec[:, j] = -vec[:, j]
    return centered @ vec, lam, mean, vec


def silhouette(points: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette coefficient on euclidean distances (singleton
    clusters score 0, the usual convention). Informational only."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(points)
    if n != len(labels) or n < 2:
        raise ContractError("silhouette: need matching n >= 2")
    if len(np.unique(labels)) < 2:
        return 0.0
    d = np.sqrt(np.maximum(
        (points ** 2).sum(1)[:, None] + (points ** 2).sum(1)[None, :]
        - 2.0 * points @ points.T, 0.0))
    scores = np.zeros(n)
    for i in range(n):
        same = labels == labels[i]
        if same.sum() < 2:
            continue
        a = d[i, same].sum() / (same.sum() - 1)
        b = min(d[i, labels == c].mean() for c in np.unique(labels)
                if c != labels[i])
        scores[i] = (b - a) / max(a, b) if max(a, b) > 0 else 0.0
    return float(scores.mean())


def _graph_level(t_rows: np.ndarray, data: Dataset, graph) -> np.ndarray:
    """Export rows are per sample; node-level layers of a multigraph are
    mean-pooled to their graphs."""
    if data.kind == "multigraph" and graph is not None \
            and t_rows.shape[0] == graph.num_nodes:
        return np.asarray(graph.pool_matrix @ t_rows)
    return t_rows


def export_embeddings(model: Model, data: Dataset, split: str, out_path,
                      samples_per_estimate: int = 1000, seed: int = 0) -> list:
    """Write one delimited file with per-layer records: sample id, label,
    the 2-D PCA projection, then the flattened representation (full
    precision, so parsing the file back reproduces it bit-exactly). Per
    layer a meta line carries width, PCA eigenvalues and the silhouette
    score of the projection. Returns the per-layer meta dicts."""
    idx = data.splits.get(split)
    if idx is None or len(idx) == 0:
        raise ContractError(f"empty split {split!r}")
    sub = _subsample(idx, samples_per_estimate, seed)
    x, graph, labels = _dataset_batch(data, sub)
    with T.stop_recording():
        outs = model.layer_outputs(x, graph=graph)
    if data.kind == "nodegraph":
        sample_ids, y = sub, data.labels[sub]
    else:
        sample_ids, y = sub, labels
    metas = []
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("layer\tsample\tlabel\tpca1\tpca2\trepr...\n")
        for k, t in enumerate(outs):
            rows = t.data
            if data.kind == "nodegraph":
                rows = rows[sub]
            rows = _graph_level(rows, data, graph)
            flat = rows.reshape(rows.shape[0], -1)
            proj, lam, _, _ = pca_top2(flat)
            sil = silhouette(proj, y)
            meta = {"layer": k, "width": flat.shape[1],
                    "var1": float(lam[0]), "var2": float(lam[1]),
                    "silhouette": sil}
            metas.append(meta)
            fh.write(f"# layer={k} width={flat.shape[1]} var1={lam[0]:.17g} "
                     f"var2={lam[1]:.17g} silhouette={sil:.17g}\n")
            for r in range(flat.shape[0]):
                vals = "\t".join(f"{v:.17g}" for v in flat[r])
                fh.write(f"{k}\t{sample_ids[r]}\t{y[r]}\t{proj[r, 0]:.17g}"
                         f"\t{proj[r, 1]:.17g}\t{vals}\n")
    return metas


def read_embeddings(path) -> dict:
    """Parse an export back into {layer: dict(samples, labels, pca, reprs)}."""
    layers = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("layer\t"):
            raise ContractError(f"{path}: not an embedding export")
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            k = int(parts[0])
            rec = layers.setdefault(k, {"samples": [], "labels": [],
                                        "pca": [], "reprs": []})
            rec["samples"].append(int(parts[1]))
            rec["labels"].append(int(parts[2]))
            rec["pca"].append([float(parts[3]), float(parts[4])])
            rec["reprs"].append([float(v) for v in parts[5:]])
    return {k: {key: np.asarray(v) for key, v in rec.items()}
            for k, rec in layers.items()}
