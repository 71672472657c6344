"""Dataset ingestion for the four data shapes the training pipeline consumes:
tabular CSV (Adult-style census records), IDX image binaries, line-delimited
multi-graph sets, and single-graph node-classification quartets — plus seeded
synthetic generators and container writers so every pipeline can run offline.

All loaders are pure functions of file bytes: equal preprocessing digests
imply equal tensors.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .graphs import GraphBatch
from .tensor import Tensor, TensorError

KINDS = ("tabular", "grid", "multigraph", "nodegraph")
ELEMENT_COUNT = 14  # node vocabulary size for multigraph containers
IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
DEFAULT_FRACTIONS = (2.0 / 3.0, 1.0 / 3.0)


class DataError(TensorError):
    """Schema drift, malformed containers, or out-of-range records."""


# ---------------------------------------------------------------------------
# Dataset container
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    """A labeled dataset with named splits and a preprocessing digest.

    ``features`` is a Tensor for tabular [n, d] and grid [n, 1, H, W] kinds,
    a list of GraphBatch for multigraph, and a single GraphBatch for
    nodegraph (where samples are nodes and ``label_mask`` marks the labeled
    training nodes).
    """

    kind: str
    features: object
    labels: np.ndarray
    class_count: int
    splits: dict = field(default_factory=dict)
    label_mask: Optional[np.ndarray] = None
    provenance: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown dataset kind {self.kind!r}")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1:
            raise DataError(f"labels must be 1-D, got shape {self.labels.shape}")
        n = self.num_samples
        if len(self.labels) != n:
            raise DataError(f"{n} samples but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.class_count):
            raise DataError(
                f"labels must lie in [0, {self.class_count}), "
                f"got range [{self.labels.min()}, {self.labels.max()}]")
        if (self.label_mask is not None) != (self.kind == "nodegraph"):
            raise DataError("label_mask is present exactly for nodegraph datasets")
        if self.label_mask is not None:
            self.label_mask = np.asarray(self.label_mask, dtype=bool)
            if self.label_mask.shape != (n,):
                raise DataError(f"label_mask must have shape ({n},)")
        seen = np.zeros(n, dtype=bool)
        for name, idx in self.splits.items():
            idx = np.asarray(idx, dtype=np.intp)
            self.splits[name] = idx
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise DataError(f"split {name!r} indexes out of range")
            if seen[idx].any():
                raise DataError(f"split {name!r} overlaps another split")
            seen[idx] = True

    @property
    def num_samples(self) -> int:
        if self.kind == "multigraph":
            return len(self.features)
        if self.kind == "nodegraph":
            return self.features.num_nodes
        return self.features.shape[0]

    @property
    def digest(self) -> str:
        return self.provenance.get("digest", "")


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, bytes):
            h.update(p)
        else:
            h.update(json.dumps(p, sort_keys=True, default=str).encode())
        h.update(b"\x00")
    return h.hexdigest()


def _file_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Tabular CSV (census schema)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TabularSchema:
    """Column typing for a census-style CSV. When ``reference_levels`` is
    set, per-attribute category counts are pinned and drift fails loudly."""

    categorical: tuple
    integer: tuple
    label: str
    positive_label: str
    expected_features: Optional[int] = None
    reference_levels: Optional[dict] = None


ADULT_SCHEMA = TabularSchema(
    categorical=("workclass", "education", "marital-status", "occupation",
                 "relationship", "race", "sex", "native-country"),
    integer=("age", "fnlwgt", "education-num", "capital-gain",
             "capital-loss", "hours-per-week"),
    label="salary",
    positive_label=">50K",
    expected_features=104,
    # distinct levels per attribute on the cleaned reference file
    reference_levels={"workclass": 7, "education": 16, "marital-status": 7,
                      "occupation": 14, "relationship": 6, "race": 5,
                      "sex": 2, "native-country": 41},
)

RELAXED_ADULT_SCHEMA = TabularSchema(
    categorical=ADULT_SCHEMA.categorical, integer=ADULT_SCHEMA.integer,
    label=ADULT_SCHEMA.label, positive_label=ADULT_SCHEMA.positive_label)


def _standardize(raw: np.ndarray, train_idx: np.ndarray):
    mean = raw[train_idx].mean(axis=0)
    std = raw[train_idx].std(axis=0)
    std = np.where(std < 1e-9, 1.0, std)
    return (raw - mean) / std, mean, std


def load_tabular_csv(path, schema: TabularSchema = ADULT_SCHEMA,
                     split_seed: int = 0) -> Dataset:
    """Load a census-style CSV: drop rows containing the "?" null marker,
    one-hot encode categoricals in first-appearance order, standardize the
    integer columns with statistics from the (default stratified 2/3–1/3)
    train split only.
    """
    raw = _file_bytes(path)
    rows = list(csv.reader(raw.decode("utf-8").splitlines(), skipinitialspace=True))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    for col in (*schema.categorical, *schema.integer, schema.label):
        if col not in header:
            raise DataError(f"{path}: missing column {col!r}")
    col_of = {name: header.index(name) for name in header}

    kept = []
    for rec in rows[1:]:
        if not rec:
            continue
        values = [v.strip() for v in rec]
        if "?" in values:
            continue
        kept.append(values)
    if not kept:
        raise DataError(f"{path}: no rows survive null dropping")

    labels = np.empty(len(kept), dtype=np.int64)
    for i, rec in enumerate(kept):
        labels[i] = int(rec[col_of[schema.label]].rstrip(".") == schema.positive_label)

    # categorical levels in first-appearance order, persisted into the digest
    orders = {}
    for attr in schema.categorical:
        seen = {}
        for rec in kept:
            seen.setdefault(rec[col_of[attr]], len(seen))
        orders[attr] = list(seen)
        if schema.reference_levels is not None:
            expected = schema.reference_levels[attr]
            if len(seen) != expected:
                raise DataError(
                    f"{path}: schema drift on attribute {attr!r}: "
                    f"{len(seen)} categories, expected {expected}")

    ints = np.empty((len(kept), len(schema.integer)))
    for j, attr in enumerate(schema.integer):
        for i, rec in enumerate(kept):
            value = rec[col_of[attr]]
            try:
                ints[i, j] = float(int(value))
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric value {value!r} in integer "
                    f"attribute {attr!r}") from None

    blocks = []
    for attr in schema.categorical:
        index = {cat: k for k, cat in enumerate(orders[attr])}
        onehot = np.zeros((len(kept), len(index)))
        for i, rec in enumerate(kept):
            onehot[i, index[rec[col_of[attr]]]] = 1.0
        blocks.append(onehot)

    width = sum(b.shape[1] for b in blocks) + ints.shape[1]
    if schema.expected_features is not None and width != schema.expected_features:
        raise DataError(
            f"{path}: encoded to {width} features, schema requires "
            f"{schema.expected_features}")

    try:
        splits = _stratified_indices(labels, DEFAULT_FRACTIONS,
                                     ("train", "test"), split_seed)
    except DataError:
        # files too small to stratify load as a single train split
        splits = {"train": np.arange(len(kept))}
    standardized, mean, std = _standardize(ints, splits["train"])
    features = np.concatenate([*blocks, standardized], axis=1)
    digest = _digest(raw, {"schema": schema.categorical + schema.integer,
                           "orders": orders, "split_seed": split_seed})
    return Dataset(
        kind="tabular", features=Tensor(features), labels=labels,
        class_count=2, splits=splits,
        provenance={"source": str(path), "digest": digest},
        meta={"integer_raw": ints, "integer_positions": list(
                  range(width - ints.shape[1], width)),
              "integer_mean": mean, "integer_std": std,
              "category_orders": orders})


def load_tabular_tsv(path) -> Dataset:
    """Plumbing loader for synthetic tabular files: a header line, then one
    record per line of ``label<TAB>feature...`` values."""
    raw = _file_bytes(path)
    lines = raw.decode("utf-8").splitlines()
    if not lines or not lines[0].startswith("label"):
        raise DataError(f"{path}: expected a header line starting with 'label'")
    records = [line.split("\t") for line in lines[1:] if line]
    if not records:
        raise DataError(f"{path}: no records")
    try:
        labels = np.array([int(r[0]) for r in records], dtype=np.int64)
        feats = np.array([[float(v) for v in r[1:]] for r in records])
    except ValueError as exc:
        raise DataError(f"{path}: malformed record: {exc}") from None
    return Dataset(kind="tabular", features=Tensor(feats), labels=labels,
                   class_count=int(labels.max()) + 1,
                   provenance={"source": str(path), "digest": _digest(raw)})


def write_tabular_tsv(path, dataset: Dataset) -> None:
    if dataset.kind != "tabular":
        raise DataError("write_tabular_tsv needs a tabular dataset")
    feats = dataset.features.data
    with open(path, "w") as fh:
        fh.write("label\t" + "\t".join(f"f{i}" for i in range(feats.shape[1])) + "\n")
        for y, row in zip(dataset.labels, feats):
            fh.write(str(int(y)) + "\t" + "\t".join("%.17g" % v for v in row) + "\n")


# ---------------------------------------------------------------------------
# IDX image binaries
# ---------------------------------------------------------------------------


def _read_idx(raw: bytes, path, expect_magic: int, rank: int):
    header = 4 * (1 + rank)
    if len(raw) < header:
        raise DataError(f"{path}: truncated IDX header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expect_magic:
        raise DataError(f"{path}: bad IDX magic 0x{magic:08x}, "
                        f"expected 0x{expect_magic:08x}")
    dims = struct.unpack(f">{rank}I", raw[4:header])
    count = int(np.prod(dims, dtype=np.int64))
    body = raw[header:]
    if len(body) != count:
        raise DataError(f"{path}: IDX payload length {len(body)} does not "
                        f"match header dimensions {dims}")
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair into a grid dataset [n, 1, H, W]
    with pixels scaled to [0, 1]."""
    images = _read_idx(_file_bytes(images_path), images_path, IDX_IMAGE_MAGIC, 3)
    labels = _read_idx(_file_bytes(labels_path), labels_path, IDX_LABEL_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise DataError(
            f"image/label length mismatch: {images.shape[0]} vs {labels.shape[0]}")
    n, h, w = images.shape
    feats = (images.astype(np.float64) / 255.0).reshape(n, 1, h, w)
    labels = labels.astype(np.int64)
    digest = _digest(_file_bytes(images_path), _file_bytes(labels_path))
    return Dataset(kind="grid", features=Tensor(feats), labels=labels,
                   class_count=int(labels.max()) + 1 if n else 1,
                   provenance={"source": f"{images_path}|{labels_path}",
                               "digest": digest})


def write_idx(images_path, labels_path, dataset: Dataset) -> None:
    """Write a grid dataset back to the IDX pair (pixels quantized to bytes)."""
    if dataset.kind != "grid":
        raise DataError("write_idx needs a grid dataset")
    arr = dataset.features.data
    n, _, h, w = arr.shape
    pixels = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, h, w))
        fh.write(pixels.reshape(n, h, w).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        fh.write(dataset.labels.astype(np.uint8).tobytes())


def take_first(dataset: Dataset, limit: int) -> Dataset:
    """First ``limit`` samples in file order — the desk-scale convention for
    large grid files. Existing split indices inside the prefix are kept."""
    if dataset.kind not in ("tabular", "grid"):
        raise DataError("take_first applies to tensor datasets")
    if limit < 1:
        raise DataError(f"take_first: limit must be >= 1, got {limit}")
    n = min(int(limit), dataset.num_samples)
    splits = {}
    for name, idx in dataset.splits.items():
        kept = np.asarray(idx)[np.asarray(idx) < n]
        if kept.size:
            splits[name] = kept
    return Dataset(
        kind=dataset.kind, features=Tensor(dataset.features.data[:n].copy()),
        labels=dataset.labels[:n].copy(), class_count=dataset.class_count,
        splits=splits, meta=dict(dataset.meta),
        provenance={"source": dataset.provenance.get("source"),
                    "digest": _digest(dataset.digest, f"first:{n}")})


def combine_train_test(train: Dataset, test: Dataset) -> Dataset:
    """Concatenate two same-kind tensor datasets into one with train/test
    splits (the MNIST file-pair convention)."""
    if train.kind != test.kind or train.kind not in ("tabular", "grid"):
        raise DataError("combine_train_test needs two tensor datasets of one kind")
    feats = np.concatenate([train.features.data, test.features.data], axis=0)
    labels = np.concatenate([train.labels, test.labels])
    na, nb = train.num_samples, test.num_samples
    return Dataset(
        kind=train.kind, features=Tensor(feats), labels=labels,
        class_count=max(train.class_count, test.class_count),
        splits={"train": np.arange(na), "test": np.arange(na, na + nb)},
        provenance={"source": f"{train.provenance.get('source')}+"
                              f"{test.provenance.get('source')}",
                    "digest": _digest(train.digest, test.digest)})


# ---------------------------------------------------------------------------
# Graph containers
# ---------------------------------------------------------------------------


def load_multigraph(path) -> Dataset:
    """Load a line-delimited multigraph container: one JSON record per line
    with ``elements`` (node ids in 0..13), ``edges``, and a binary ``label``.
    Node features are one-hot over the 14-element vocabulary."""
    raw = _file_bytes(path)
    graphs, labels = [], []
    for lineno, line in enumerate(raw.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            elements = list(rec["elements"])
            edges = [(int(u), int(v)) for u, v in rec["edges"]]
            label = int(rec["label"])
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}:{lineno}: malformed record ({exc})") from None
        n = len(elements)
        if n == 0:
            raise DataError(f"{path}:{lineno}: empty graph")
        feats = np.zeros((n, ELEMENT_COUNT))
        for i, el in enumerate(elements):
            el = int(el)
            if not 0 <= el < ELEMENT_COUNT:
                raise DataError(
                    f"{path}:{lineno}: element id {el} outside 0..{ELEMENT_COUNT - 1}")
            feats[i, el] = 1.0
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise DataError(
                    f"{path}:{lineno}: edge ({u}, {v}) outside 0..{n - 1}")
        if label not in (0, 1):
            raise DataError(f"{path}:{lineno}: label must be 0 or 1, got {label}")
        graphs.append(GraphBatch(feats, edges))
        labels.append(label)
    if not graphs:
        raise DataError(f"{path}: no graphs")
    return Dataset(kind="multigraph", features=graphs,
                   labels=np.array(labels, dtype=np.int64), class_count=2,
                   provenance={"source": str(path), "digest": _digest(raw)})


def write_multigraph(path, dataset: Dataset) -> None:
    if dataset.kind != "multigraph":
        raise DataError("write_multigraph needs a multigraph dataset")
    with open(path, "w") as fh:
        for g, y in zip(dataset.features, dataset.labels):
            elements = [int(np.argmax(row)) for row in g.node_features.data]
            edges = [[int(u), int(v)] for u, v in g.undirected_edges]
            fh.write(json.dumps({"elements": elements, "edges": edges,
                                 "label": int(y)}, sort_keys=True) + "\n")


def load_nodegraph(features_path, edges_path, labels_path, mask_path) -> Dataset:
    """Load a single-graph node-classification quartet: a float feature TSV,
    an edge list, integer labels, and a 0/1 labeled-training-node mask."""
    feats_raw = _file_bytes(features_path)
    try:
        feats = np.array([[float(v) for v in line.split("\t")]
                          for line in feats_raw.decode().splitlines() if line])
    except ValueError as exc:
        raise DataError(f"{features_path}: malformed features ({exc})") from None
    if feats.ndim != 2 or feats.size == 0:
        raise DataError(f"{features_path}: expected a non-empty feature matrix")
    n = feats.shape[0]

    edges = []
    edges_raw = _file_bytes(edges_path)
    for lineno, line in enumerate(edges_raw.decode().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{edges_path}:{lineno}: expected 'u<TAB>v'")
        u, v = int(parts[0]), int(parts[1])
        if not (0 <= u < n and 0 <= v < n):
            raise DataError(f"{edges_path}:{lineno}: edge ({u}, {v}) out of range")
        edges.append((u, v))

    labels_raw = _file_bytes(labels_path)
    labels = np.array([int(line) for line in labels_raw.decode().splitlines()
                       if line.strip()], dtype=np.int64)
    mask_raw = _file_bytes(mask_path)
    mask_vals = [line.strip() for line in mask_raw.decode().splitlines()
                 if line.strip()]
    if len(labels) != n or len(mask_vals) != n:
        raise DataError(
            f"row mismatch: {n} feature rows, {len(labels)} labels, "
            f"{len(mask_vals)} mask rows")
    if any(v not in ("0", "1") for v in mask_vals):
        raise DataError(f"{mask_path}: mask entries must be 0 or 1")
    mask = np.array([v == "1" for v in mask_vals])

    graph = GraphBatch(feats, edges)
    idx = np.arange(n)
    return Dataset(
        kind="nodegraph", features=graph, labels=labels,
        class_count=int(labels.max()) + 1, label_mask=mask,
        splits={"train": idx[mask], "test": idx[~mask]},
        provenance={"source": str(features_path),
                    "digest": _digest(feats_raw, edges_raw, labels_raw, mask_raw)})


def write_nodegraph(features_path, edges_path, labels_path, mask_path,
                    dataset: Dataset) -> None:
    if dataset.kind != "nodegraph":
        raise DataError("write_nodegraph needs a nodegraph dataset")
    graph = dataset.features
    with open(features_path, "w") as fh:
        for row in graph.node_features.data:
            fh.write("\t".join("%.17g" % v for v in row) + "\n")
    with open(edges_path, "w") as fh:
        for u, v in graph.undirected_edges:
            fh.write(f"{int(u)}\t{int(v)}\n")
    with open(labels_path, "w") as fh:
        for y in dataset.labels:
            fh.write(f"{int(y)}\n")
    with open(mask_path, "w") as fh:
        for m in dataset.label_mask:
            fh.write(f"{int(m)}\n")


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------


def _split_names(count: int):
    if count == 2:
        return ("train", "test")
    if count == 3:
        return ("train", "val", "test")
    raise DataError(f"supported split arities are 2 and 3, got {count}")


def _partition(indices: np.ndarray, fractions) -> list:
    n = len(indices)
    bounds = np.floor(np.cumsum(fractions) * n).astype(int)
    bounds[-1] = n
    return np.split(indices, bounds[:-1])


def _stratified_indices(labels, fractions, names, seed) -> dict:
    rng = np.random.default_rng(seed)
    parts = {name: [] for name in names}
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if len(members) < len(fractions):
            raise DataError(
                f"stratification failed: class {cls} has {len(members)} "
                f"samples for {len(fractions)} splits")
        rng.shuffle(members)
        for name, chunk in zip(names, _partition(members, fractions)):
            parts[name].append(chunk)
    return {name: np.sort(np.concatenate(chunks))
            for name, chunks in parts.items()}


def split(dataset: Dataset, fractions: Sequence[float], seed: int) -> Dataset:
    """Re-partition a dataset into named splits (train/test, plus val for
    three fractions): seeded shuffle, stratified by class except for node
    graphs. Tabular integer columns are re-standardized from the new train
    split."""
    fractions = tuple(float(f) for f in fractions)
    if any(f <= 0 for f in fractions):
        raise DataError(f"fractions must be positive, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"fractions must sum to 1, got sum {sum(fractions)}")
    names = _split_names(len(fractions))

    if dataset.kind == "nodegraph":
        rng = np.random.default_rng(seed)
        order = rng.permutation(dataset.num_samples)
        splits = {name: np.sort(chunk)
                  for name, chunk in zip(names, _partition(order, fractions))}
    else:
        splits = _stratified_indices(dataset.labels, fractions, names, seed)

    features = dataset.features
    meta = dict(dataset.meta)
    if dataset.kind == "tabular" and "integer_raw" in meta:
        standardized, mean, std = _standardize(meta["integer_raw"],
                                               splits["train"])
        arr = np.array(dataset.features.data)
        arr[:, meta["integer_positions"]] = standardized
        features = Tensor(arr)
        meta["integer_mean"], meta["integer_std"] = mean, std

    provenance = dict(dataset.provenance)
    provenance["digest"] = _digest(dataset.digest,
                                   {"fractions": fractions, "seed": seed})
    return Dataset(kind=dataset.kind, features=features, labels=dataset.labels,
                   class_count=dataset.class_count, splits=splits,
                   label_mask=dataset.label_mask, provenance=provenance,
                   meta=meta)


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------


def _blobs(params, seed) -> Dataset:
    n = int(params.get("n", 600))
    classes = int(params.get("classes", 2))
    dim = int(params.get("dim", 8))
    separation = float(params.get("separation", 5.0))
    if classes < 2 or classes > dim or n < 4 * classes:
        raise DataError(f"gaussian_blobs: bad params classes={classes} "
                        f"dim={dim} n={n}")
    rng = np.random.default_rng((seed, 101))
    labels = np.arange(n) % classes
    rng.shuffle(labels)
    feats = rng.normal(size=(n, dim))
    for c in range(classes):
        feats[labels == c, c] += separation
    return feats, labels, classes


def _bars(params, seed):
    n = int(params.get("n", 400))
    size = int(params.get("size", 28))
    classes = int(params.get("classes", 10))
    noise = float(params.get("noise", 0.1))
    if classes % 2 or size < classes:
        raise DataError(f"bar_patterns: classes must be even and ≤ size, "
                        f"got classes={classes} size={size}")
    rng = np.random.default_rng((seed, 202))
    labels = np.arange(n) % classes
    rng.shuffle(labels)
    imgs = np.abs(noise * rng.normal(size=(n, 1, size, size)))
    half = classes // 2
    band = size // half
    for i, c in enumerate(labels):
        lo = (c % half) * band
        if c < half:
            imgs[i, 0, lo:lo + band, :] = 1.0
        else:
            imgs[i, 0, :, lo:lo + band] = 1.0
    return np.clip(imgs, 0.0, 1.0), labels, classes


def _two_community(params, seed) -> Dataset:
    nodes = int(params.get("nodes", 200))
    p_in = float(params.get("p_in", 0.1))
    p_out = float(params.get("p_out", 0.01))
    dim = int(params.get("feature_dim", 8))
    labeled = int(params.get("labeled_per_class", 20))
    noise = float(params.get("noise", 0.5))
    if nodes < 4 or not (0 < p_out <= p_in <= 1) or dim < 2:
        raise DataError("two_community: bad params")
    if labeled * 2 > nodes:
        raise DataError("two_community: more labeled nodes than nodes")
    rng = np.random.default_rng((seed, 303))
    labels = np.arange(nodes) % 2
    rng.shuffle(labels)
    edges = []
    for u in range(nodes):
        for v in range(u + 1, nodes):
            p = p_in if labels[u] == labels[v] else p_out
            if rng.random() < p:
                edges.append((u, v))
    feats = noise * rng.normal(size=(nodes, dim))
    feats[np.arange(nodes), labels] += 1.0
    mask = np.zeros(nodes, dtype=bool)
    for c in (0, 1):
        members = np.flatnonzero(labels == c)
        mask[rng.choice(members, size=labeled, replace=False)] = True
    idx = np.arange(nodes)
    graph = GraphBatch(feats, edges)
    return Dataset(
        kind="nodegraph", features=graph, labels=labels, class_count=2,
        label_mask=mask, splits={"train": idx[mask], "test": idx[~mask]},
        provenance={"source": "synth:two_community",
                    "digest": _digest("two_community", params, seed)},
        meta={"params": dict(params), "seed": seed})


def _motif_graphs(params, seed) -> Dataset:
    n = int(params.get("n", 300))
    min_nodes = int(params.get("min_nodes", 8))
    max_nodes = int(params.get("max_nodes", 14))
    if n < 4 or min_nodes < 4 or max_nodes < min_nodes:
        raise DataError("motif_graphs: bad params")
    rng = np.random.default_rng((seed, 404))
    labels = np.arange(n) % 2
    rng.shuffle(labels)
    graphs = []
    for y in labels:
        k = int(rng.integers(min_nodes, max_nodes + 1))
        # random recursive tree keeps every graph connected and triangle-free
        edges = [(int(rng.integers(0, v)), v) for v in range(1, k)]
        if y == 1:
            a, b, c = rng.choice(k, size=3, replace=False)
            edges += [(int(a), int(b)), (int(b), int(c)), (int(a), int(c))]
            element_pool = np.arange(0, ELEMENT_COUNT // 2)
        else:
            element_pool = np.arange(ELEMENT_COUNT // 2, ELEMENT_COUNT)
        elements = rng.choice(element_pool, size=k)
        feats = np.zeros((k, ELEMENT_COUNT))
        feats[np.arange(k), elements] = 1.0
        graphs.append(GraphBatch(feats, edges))
    return Dataset(
        kind="multigraph", features=graphs, labels=labels, class_count=2,
        splits=_stratified_indices(labels, DEFAULT_FRACTIONS,
                                   ("train", "test"), seed),
        provenance={"source": "synth:motif_graphs",
                    "digest": _digest("motif_graphs", params, seed)},
        meta={"params": dict(params), "seed": seed})


def synth_generate(kind: str, params: Optional[dict] = None, seed: int = 0) -> Dataset:
    """Deterministic synthetic datasets, one generator per dataset shape:
    ``gaussian_blobs`` (tabular), ``bar_patterns`` (grid), ``two_community``
    (nodegraph stochastic block model), ``motif_graphs`` (multigraph with a
    planted triangle motif)."""
    params = dict(params or {})
    if kind == "gaussian_blobs":
        feats, labels, classes = _blobs(params, seed)
        return Dataset(
            kind="tabular", features=Tensor(feats), labels=labels,
            class_count=classes,
            splits=_stratified_indices(labels, DEFAULT_FRACTIONS,
                                       ("train", "test"), seed),
            provenance={"source": "synth:gaussian_blobs",
                        "digest": _digest("gaussian_blobs", params, seed)},
            meta={"params": params, "seed": seed})
    if kind == "bar_patterns":
        imgs, labels, classes = _bars(params, seed)
        return Dataset(
            kind="grid", features=Tensor(imgs), labels=labels,
            class_count=classes,
            splits=_stratified_indices(labels, DEFAULT_FRACTIONS,
                                       ("train", "test"), seed),
            provenance={"source": "synth:bar_patterns",
                        "digest": _digest("bar_patterns", params, seed)},
            meta={"params": params, "seed": seed})
    if kind == "two_community":
        return _two_community(params, seed)
    if kind == "motif_graphs":
        return _motif_graphs(params, seed)
    raise DataError(f"unknown synthetic kind {kind!r}")
