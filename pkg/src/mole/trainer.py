"""Module-wise training: objectives are assigned per module (information
maximization toward the input side for encoder-like modules, toward the
labels for decoder-like ones, conventional cross-entropy on the output
module), and modules are trained sequentially with gradient isolation —
training module k cannot touch any parameter outside module k. An
end-to-end backprop baseline runs the identical architecture from
bit-identical initial parameters.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset
from .estimators import (
    CriticNet,
    dim_local_mi,
    dim_train_step,
    gmi_lite,
    gmi_train_step,
    matrix_mi,
    mine_dv_bound,
    mine_train_step,
)
from .graphs import GraphBatch
from .layers import (
    TAG_CROSS_ENTROPY,
    TAG_MAXMI_X,
    TAG_MAXMI_Y,
    TAG_MAXMI_Y_LABELED,
    group_modules,
    has_params,
    init_params,
    layer_forward,
    reference_architecture,
)
from .optim import Adam
from .tensor import ContractError, DimensionError, NumericError, Tape, Tensor, backward

SUITES = ("matrix", "mine", "dim+mine", "gmi+mine")
ESTIMATORS = ("matrix", "mine", "dim_local", "gmi_lite", "none")
_TAG_ORDER = {TAG_MAXMI_X: 0, TAG_MAXMI_Y: 1, TAG_MAXMI_Y_LABELED: 1,
              TAG_CROSS_ENTROPY: 2}
GRAPH_KINDS = ("message_passing", "graph_conv")


# ---------------------------------------------------------------------------
# Plan types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Objective:
    """What a module optimizes: an MI estimator toward X or Y, or the
    conventional loss on the output module."""

    tag: str
    estimator: str = "none"
    labeled_only: bool = False

    def __post_init__(self):
        if self.tag not in _TAG_ORDER:
            raise ContractError(f"unknown objective tag {self.tag!r}")
        if self.estimator not in ESTIMATORS:
            raise ContractError(f"unknown estimator {self.estimator!r}")
        if self.tag == TAG_CROSS_ENTROPY and self.estimator != "none":
            raise ContractError("CrossEntropy modules take no estimator")
        if self.tag != TAG_CROSS_ENTROPY and self.estimator == "none":
            raise ContractError(f"{self.tag} requires an estimator")
        if self.labeled_only and _TAG_ORDER[self.tag] != 1:
            raise ContractError("labeled_only applies only to MaxMI_Y objectives")


@dataclass(frozen=True)
class Hyper:
    """Per-module training hyperparameters; defaults are desk-scale."""

    epochs: int = 30
    batch_size: int = 128
    lr: float = 1e-3
    critic_lr: float = 1e-4
    critic_steps: int = 5
    mi_sample_cap: int = 512
    mi_x_target: str = "previous"  # or "raw"
    gmi_neg_per_node: int = 10
    gmi_max_nodes: int = 256
    dim_max_positions: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 2:
            raise ContractError("epochs must be >= 0 and batch_size >= 2")
        if self.mi_x_target not in ("previous", "raw"):
            raise ContractError(f"mi_x_target must be previous|raw, "
                                f"got {self.mi_x_target!r}")


@dataclass(frozen=True)
class PlanModule:
    layer_indices: tuple
    objective: Objective
    hyper: Hyper


@dataclass
class ModulePlan:
    """Ordered module list over a reference stack. Encoder-like modules come
    first, the output module trains by cross-entropy."""

    architecture: str
    suite: str
    modules: list

    def __post_init__(self):
        if not self.modules:
            raise ContractError("plan has no modules")
        if self.modules[-1].objective.tag != TAG_CROSS_ENTROPY:
            raise ContractError("the final module must train by CrossEntropy")
        order = [_TAG_ORDER[m.objective.tag] for m in self.modules]
        if any(a > b for a, b in zip(order, order[1:])):
            raise ContractError(
                f"objective tags out of order along the stack: "
                f"{[m.objective.tag for m in self.modules]}")


def build_plan(architecture: str, estimator_suite: str,
               hyper: Optional[Hyper] = None) -> ModulePlan:
    """Bind each module's objective tag to a concrete estimator.

    ``matrix``/``mine`` apply one estimator to every MI module; ``dim+mine``
    scores the first grid module with the local-MI estimator and the rest
    with the DV critic; ``gmi+mine`` scores encoder-like graph-layer modules
    with the topology-aware estimator and everything else with the DV critic.
    """
    if estimator_suite not in SUITES:
        raise ContractError(f"unknown estimator suite {estimator_suite!r}")
    hyper = hyper or Hyper()
    stack = reference_architecture(architecture)
    groups = group_modules(stack)
    kinds = {spec.kind for spec, _ in stack}
    if estimator_suite == "dim+mine" and "conv2d" not in kinds:
        raise ContractError("dim+mine requires a grid architecture")
    if estimator_suite == "gmi+mine" and not kinds.intersection(GRAPH_KINDS):
        raise ContractError("gmi+mine requires a graph architecture")

    modules = []
    for mi, group in enumerate(groups):
        lead_spec, tag = stack[group[0]]
        if tag == TAG_CROSS_ENTROPY:
            objective = Objective(tag, "none")
        else:
            labeled = tag == TAG_MAXMI_Y_LABELED
            if estimator_suite == "matrix":
                est = "matrix"
            elif estimator_suite == "mine":
                est = "mine"
            elif estimator_suite == "dim+mine":
                est = "dim_local" if (mi == 0 and lead_spec.kind == "conv2d") \
                    else "mine"
            else:  # gmi+mine
                est = "gmi_lite" if (tag == TAG_MAXMI_X
                                     and lead_spec.kind in GRAPH_KINDS) else "mine"
            objective = Objective(tag, est, labeled_only=labeled)
        modules.append(PlanModule(tuple(group), objective, hyper))
    return ModulePlan(architecture, estimator_suite, modules)


# ---------------------------------------------------------------------------
# Model container
# ---------------------------------------------------------------------------


class Model:
    """A reference stack with initialized parameters, grouped into modules.
    Parameters carry ("module", k) owner tags, so a module's tape treats all
    other modules' parameters as constants."""

    def __init__(self, architecture: str, seed: int = 0):
        self.architecture = architecture
        stack = reference_architecture(architecture)
        self.specs = [spec for spec, _ in stack]
        self.tags = [tag for _, tag in stack]
        self.groups = group_modules(stack)
        self.module_of = {}
        for k, group in enumerate(self.groups):
            for i in group:
                self.module_of[i] = k
        self.seed = int(seed)
        self.params = [
            init_params(spec, seed=(self.seed, i), owner=("module", self.module_of[i]))
            if has_params(spec) else None
            for i, spec in enumerate(self.specs)]
        self.trained = [False] * len(self.groups)

    @property
    def num_modules(self) -> int:
        return len(self.groups)

    def module_params(self, k: int) -> list:
        out = []
        for i in self.groups[k]:
            if self.params[i] is not None:
                out.extend(self.params[i].tensors.values())
        return out

    def layer_outputs(self, x: Tensor, graph: Optional[GraphBatch] = None) -> list:
        """Forward through the whole stack, returning every layer's output."""
        outs = []
        h = x
        for spec, params in zip(self.specs, self.params):
            h = layer_forward(spec, params, h, graph=graph)
            outs.append(h)
        return outs

    def forward_module(self, k: int, h: Tensor,
                       graph: Optional[GraphBatch] = None) -> Tensor:
        for i in self.groups[k]:
            h = layer_forward(self.specs[i], self.params[i], h, graph=graph)
        return h

    def forward_upto(self, k: int, x: Tensor,
                     graph: Optional[GraphBatch] = None) -> Tensor:
        """Output of modules 0..k-1 (the input of module k)."""
        h = x
        for m in range(k):
            h = self.forward_module(m, h, graph=graph)
        return h

    def predict(self, x: Tensor, graph: Optional[GraphBatch] = None) -> Tensor:
        return self.forward_upto(self.num_modules, x, graph=graph)

    @property
    def output_width(self) -> int:
        return self.specs[-1].out_dim

    def save(self, path) -> None:
        params = [dict() if lp is None else {k: t.data for k, t in lp.tensors.items()}
                  for lp in self.params]
        save_checkpoint(path, self.architecture, self.specs, params,
                        seeds={"init": self.seed},
                        meta={"trained": list(self.trained), "tags": self.tags})

    @classmethod
    def load(cls, path) -> "Model":
        state = load_checkpoint(path)
        model = cls(state["architecture"], seed=state["seeds"]["init"])
        for lp, arrays in zip(model.params, state["params"]):
            if lp is None:
                continue
            for name, arr in arrays.items():
                lp.tensors[name].data[...] = arr
        model.trained = list(state["meta"].get("trained",
                                               [False] * model.num_modules))
        return model

    def module_bytes(self, k: int) -> bytes:
        return b"".join(t.data.tobytes() for t in self.module_params(k))


# ---------------------------------------------------------------------------
# Loss and metric helpers
# ---------------------------------------------------------------------------


def one_hot(labels: np.ndarray, width: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= width):
        raise ContractError(f"labels outside [0, {width})")
    out = np.zeros((len(labels), width))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def cross_entropy(pred: Tensor, labels) -> Tensor:
    """Mean over the batch of −Σ_c y·log(max(ŷ, 1e-12)) for softmax rows
    ``pred`` against one-hot ``labels``."""
    y = labels.data if isinstance(labels, Tensor) else np.asarray(labels)
    if pred.data.ndim != 2 or pred.shape != y.shape:
        raise DimensionError(
            f"cross_entropy: prediction {pred.shape} vs labels {y.shape}")
    rows = pred.data.sum(axis=1)
    if np.max(np.abs(rows - 1.0)) > 1e-9:
        raise ContractError("cross_entropy: prediction rows must sum to 1")
    if not np.array_equal(y.sum(axis=1), np.ones(len(y))) or not np.isin(y, (0.0, 1.0)).all():
        raise ContractError("cross_entropy: labels must be one-hot")
    picked = T.tsum(T.mul(Tensor(y), T.log(pred, floor=1e-12)))
    return T.mul(picked, -1.0 / pred.shape[0])


def _dataset_batch(data: Dataset, idx: np.ndarray):
    """(input tensor, graph context, labels) for a batch of sample indices."""
    if data.kind in ("tabular", "grid"):
        return Tensor(data.features.data[idx]), None, data.labels[idx]
    if data.kind == "multigraph":
        graphs = [data.features[i] for i in idx]
        batch = GraphBatch.batch(graphs)
        return Tensor(batch.node_features.data), batch, data.labels[idx]
    # nodegraph: the whole graph is the batch; idx selects objective rows
    return Tensor(data.features.node_features.data), data.features, data.labels


def predict_scores(model: Model, data: Dataset, indices: np.ndarray,
                   chunk: int = 512) -> np.ndarray:
    """Model outputs for the given sample indices, evaluated off-tape."""
    indices = np.asarray(indices, dtype=np.intp)
    with T.stop_recording():
        if data.kind == "nodegraph":
            x, graph, _ = _dataset_batch(data, indices)
            return model.predict(x, graph=graph).data[indices]
        chunks = []
        for lo in range(0, len(indices), chunk):
            sub = indices[lo:lo + chunk]
            x, graph, _ = _dataset_batch(data, sub)
            chunks.append(model.predict(x, graph=graph).data)
        return np.concatenate(chunks, axis=0) if chunks else \
            np.zeros((0, model.output_width))


def _split_accuracy(model: Model, data: Dataset, split: str) -> float:
    idx = data.splits.get(split)
    if idx is None or len(idx) == 0:
        raise ContractError(f"dataset has no samples in split {split!r}")
    scores = predict_scores(model, data, idx)
    pred = np.argmax(scores, axis=1)  # ties break to the lowest class index
    return float(np.mean(pred == data.labels[idx]))


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------


@dataclass
class TrainReport:
    """Per-module objective trajectories plus the final accuracies and the
    exact configuration needed to reproduce the run."""

    architecture: str
    mode: str
    trajectories: list
    wall_ms: list
    train_accuracy: float
    test_accuracy: float
    config: dict
    seed: int
    skipped_batches: int = 0
    epoch_wall_ms: list = field(default_factory=list)

    def __post_init__(self):
        for acc in (self.train_accuracy, self.test_accuracy):
            if not 0.0 <= acc <= 1.0:
                raise ContractError(f"accuracy {acc} outside [0, 1]")
        epochs = self.config.get("epochs")
        if epochs is not None:
            for k, traj in enumerate(self.trajectories):
                if len(traj) != epochs:
                    raise ContractError(
                        f"module {k} trajectory has {len(traj)} entries "
                        f"for {epochs} epochs")

    def log_lines(self, include_wall: bool = True) -> list:
        """One record per module-epoch plus a summary. ``include_wall=False``
        drops the wall-clock fields, leaving a fully deterministic log."""
        lines = []
        for k, traj in enumerate(self.trajectories):
            walls = (self.epoch_wall_ms[k] if k < len(self.epoch_wall_ms)
                     else [0.0] * len(traj))
            for e, (value, wall) in enumerate(zip(traj, walls)):
                line = f"module={k} epoch={e} objective={value:.6f}"
                if include_wall:
                    line += f" wall_ms={wall:.1f}"
                lines.append(line)
        lines.append(
            f"summary mode={self.mode} architecture={self.architecture} "
            f"seed={self.seed} train_acc={self.train_accuracy:.6f} "
            f"test_acc={self.test_accuracy:.6f} "
            f"skipped_batches={self.skipped_batches}")
        return lines


# ---------------------------------------------------------------------------
# Objective machinery
# ---------------------------------------------------------------------------


def _flat_width(shape: tuple) -> int:
    return int(np.prod(shape[1:], dtype=int))


def _gap(t: Tensor) -> Tensor:
    """Global average pool a [n, C, H, W] tensor to [n, C]."""
    n, c = t.shape[0], t.shape[1]
    return T.tmean(T.reshape(t, (n, c, -1)), axis=2)


class _ModuleObjective:
    """Evaluates one module's objective on a batch and trains the attached
    critic (when the estimator has one)."""

    def __init__(self, model: Model, k: int, plan_module: PlanModule,
                 raw_probe, t_in_probe, t_out_probe):
        self.objective = plan_module.objective
        self.hyper = plan_module.hyper
        self.k = k
        est = self.objective.estimator
        self.critic = None
        y_width = model.output_width
        critic_seed = 1001 + 9973 * self.hyper.seed + 101 * k
        if est == "mine":
            target = y_width if _TAG_ORDER[self.objective.tag] == 1 else (
                _flat_width(raw_probe.shape)
                if self.hyper.mi_x_target == "raw" else _flat_width(t_in_probe.shape))
            self.critic = CriticNet(_flat_width(t_out_probe.shape), target,
                                    seed=critic_seed, lr=self.hyper.critic_lr)
        elif est == "dim_local":
            self.critic = CriticNet(t_in_probe.shape[1], t_out_probe.shape[1],
                                    seed=critic_seed, lr=self.hyper.critic_lr)
        elif est == "gmi_lite":
            self.critic = CriticNet(t_out_probe.shape[1], t_in_probe.shape[1],
                                    seed=critic_seed, lr=self.hyper.critic_lr)

    def _mi_rows(self, t_out: Tensor, target: np.ndarray, rng):
        """Seeded row subsample for the spectral estimator's O(n^3) cost."""
        n = t_out.shape[0]
        cap = self.hyper.mi_sample_cap
        if n <= cap:
            return t_out, target
        idx = np.sort(rng.choice(n, size=cap, replace=False))
        return T.gather_rows(t_out, idx), target[idx]

    def _target_x(self, x_raw: Tensor, t_in: Tensor) -> Tensor:
        return x_raw if self.hyper.mi_x_target == "raw" else t_in

    def train_critic(self, t_out: Tensor, x_raw, t_in, y_oh, graph, rng):
        est = self.objective.estimator
        if self.critic is None:
            return
        for _ in range(self.hyper.critic_steps):
            if est == "mine":
                target = (Tensor(y_oh) if _TAG_ORDER[self.objective.tag] == 1
                          else self._target_x(x_raw, t_in))
                mine_train_step(self.critic, t_out, target, rng=rng)
            elif est == "dim_local":
                dim_train_step(self.critic, self._target_x(x_raw, t_in),
                               _gap(t_out), rng=rng,
                               max_positions=self.hyper.dim_max_positions)
            elif est == "gmi_lite":
                gmi_train_step(self.critic, self._target_x(x_raw, t_in), t_out,
                               graph, rng=rng,
                               neg_per_node=self.hyper.gmi_neg_per_node,
                               max_nodes=self.hyper.gmi_max_nodes)

    def value(self, t_out: Tensor, x_raw, t_in, y_oh, graph, rng):
        """The differentiable objective tensor and whether to ascend it."""
        obj, est = self.objective, self.objective.estimator
        if obj.tag == TAG_CROSS_ENTROPY:
            return cross_entropy(t_out, y_oh), False
        if _TAG_ORDER[obj.tag] == 1:  # toward the labels
            if est == "matrix":
                rows, target = self._mi_rows(t_out, y_oh, rng)
                return matrix_mi(rows, target).tensor, True
            return mine_dv_bound(self.critic, t_out, Tensor(y_oh),
                                 rng=rng).tensor, True
        # toward the input side
        target = self._target_x(x_raw, t_in)
        if est == "matrix":
            rows, tgt = self._mi_rows(t_out, np.asarray(target.data), rng)
            return matrix_mi(rows, Tensor(tgt)).tensor, True
        if est == "mine":
            return mine_dv_bound(self.critic, t_out, target, rng=rng).tensor, True
        if est == "dim_local":
            return dim_local_mi(target, _gap(t_out), self.critic, rng=rng,
                                max_positions=self.hyper.dim_max_positions).tensor, True
        return gmi_lite(target, t_out, graph, self.critic, rng=rng,
                        neg_per_node=self.hyper.gmi_neg_per_node,
                        max_nodes=self.hyper.gmi_max_nodes).tensor, True


def _train_indices(data: Dataset) -> np.ndarray:
    idx = data.splits.get("train")
    if idx is None or len(idx) == 0:
        raise ContractError("dataset has no train split")
    return np.asarray(idx, dtype=np.intp)


def _epoch_batches(indices: np.ndarray, batch_size: int, rng) -> list:
    """One seeded shuffle, fixed for the whole module: identical batches
    every epoch keep a zero-lr run exactly constant."""
    order = np.array(indices, copy=True)
    rng.shuffle(order)
    return [order[lo:lo + batch_size] for lo in range(0, len(order), batch_size)]


def _labeled_rows(objective: Objective, data: Dataset, idx: np.ndarray,
                  batch_labels: np.ndarray):
    """Row positions the objective may use within the current batch."""
    if data.kind == "nodegraph":
        if objective.labeled_only or objective.tag == TAG_CROSS_ENTROPY:
            return np.flatnonzero(data.label_mask)
        return np.arange(data.features.num_nodes)
    if objective.labeled_only and data.label_mask is not None:
        return np.flatnonzero(data.label_mask[idx])
    return np.arange(len(batch_labels))


def train_module(k: int, plan: ModulePlan, model: Model, data: Dataset):
    """Train module k of the plan, leaving every other parameter untouched.
    Returns (module parameter tensors, per-epoch objective trajectory,
    per-epoch wall-clock ms, skipped-batch count)."""
    if not 0 <= k < model.num_modules:
        raise ContractError(f"module index {k} outside 0..{model.num_modules - 1}")
    if len(plan.modules) != model.num_modules:
        raise ContractError("plan does not match the model's module count")
    if not all(model.trained[:k]):
        raise ContractError(
            f"upstream modules of {k} are untrained; train sequentially")

    plan_module = plan.modules[k]
    hyper = plan_module.hyper
    rng = np.random.default_rng((hyper.seed, 31, k))
    train_idx = _train_indices(data)

    # probe one small batch for estimator shapes
    with T.stop_recording():
        probe_idx = train_idx[:min(4, len(train_idx))]
        x_probe, graph_probe, _ = _dataset_batch(data, probe_idx)
        t_in_probe = model.forward_upto(k, x_probe, graph=graph_probe)
        t_out_probe = model.forward_module(k, t_in_probe, graph=graph_probe)
    machinery = _ModuleObjective(model, k, plan_module,
                                 x_probe, t_in_probe, t_out_probe)

    optimizer = Adam(model.module_params(k), lr=hyper.lr)
    width = model.output_width
    trajectory, walls = [], []
    skipped = 0
    batch_size = (len(train_idx) if data.kind == "nodegraph"
                  else hyper.batch_size)
    batches = _epoch_batches(train_idx, batch_size, rng)

    for _epoch in range(hyper.epochs):
        t0 = time.perf_counter()
        values, weights = [], []
        for idx in batches:
            x, graph, labels = _dataset_batch(data, idx)
            rows = _labeled_rows(plan_module.objective, data, idx, labels)
            if rows.size == 0:
                skipped += 1
                continue
            with T.stop_recording():
                t_in = model.forward_upto(k, x, graph=graph)
            with Tape(owner=("module", k)):
                t_out = model.forward_module(k, t_in, graph=graph)
                if _TAG_ORDER[plan_module.objective.tag] >= 1:
                    # label-directed objectives score only the labeled rows
                    labels_src = (data.labels if data.kind == "nodegraph"
                                  else labels)
                    y_oh = one_hot(labels_src[rows], width)
                    t_obj = (t_out if rows.size == t_out.shape[0]
                             else T.gather_rows(t_out, rows))
                else:
                    y_oh = None
                    t_obj = t_out
                machinery.train_critic(t_obj, x, t_in, y_oh, graph, rng)
                obj, maximize = machinery.value(t_obj, x, t_in, y_oh, graph, rng)
                value = obj.item()
                if not np.isfinite(value):
                    raise NumericError(
                        f"module {k}: non-finite objective "
                        f"(diagnostics: {T.diagnostics()})")
                grads = backward(obj)
            optimizer.step(grads, maximize=maximize)
            values.append(value)
            weights.append(t_obj.shape[0])
        # weight by objective rows so ragged final batches don't skew epochs
        trajectory.append(float(np.average(values, weights=weights))
                          if values else float("nan"))
        walls.append((time.perf_counter() - t0) * 1000.0)

    model.trained[k] = True
    return model.module_params(k), trajectory, walls, skipped


def _plan_config(plan: ModulePlan, mode: str) -> dict:
    hyper = plan.modules[0].hyper
    return {"architecture": plan.architecture, "mode": mode,
            "suite": plan.suite, "epochs": hyper.epochs,
            "batch_size": hyper.batch_size, "lr": hyper.lr,
            "seed": hyper.seed,
            "objectives": [f"{m.objective.tag}/{m.objective.estimator}"
                           for m in plan.modules]}


def train_sequential(plan: ModulePlan, data: Dataset):
    """Train all modules in order, first to last; returns the trained model
    and its TrainReport."""
    seed = plan.modules[0].hyper.seed
    model = Model(plan.architecture, seed=seed)
    trajectories, wall_ms, epoch_walls = [], [], []
    skipped = 0
    for k in range(model.num_modules):
        _, traj, walls, skip = train_module(k, plan, model, data)
        trajectories.append(traj)
        epoch_walls.append(walls)
        wall_ms.append(float(sum(walls)))
        skipped += skip
    report = TrainReport(
        architecture=plan.architecture, mode="mole",
        trajectories=trajectories, wall_ms=wall_ms,
        train_accuracy=_split_accuracy(model, data, "train"),
        test_accuracy=_split_accuracy(model, data, "test"),
        config=_plan_config(plan, "mole"), seed=seed,
        skipped_batches=skipped, epoch_wall_ms=epoch_walls)
    return model, report


def train_bp(architecture: str, data: Dataset, hyper: Optional[Hyper] = None):
    """End-to-end cross-entropy baseline on the identical stack, starting
    from bit-identical initial parameters (same seed path as the
    module-wise runs)."""
    hyper = hyper or Hyper()
    model = Model(architecture, seed=hyper.seed)
    params = [t for k in range(model.num_modules) for t in model.module_params(k)]
    optimizer = Adam(params, lr=hyper.lr)
    rng = np.random.default_rng((hyper.seed, 47))
    train_idx = _train_indices(data)
    width = model.output_width
    batch_size = (len(train_idx) if data.kind == "nodegraph"
                  else hyper.batch_size)
    batches = _epoch_batches(train_idx, batch_size, rng)

    trajectory, walls = [], []
    for _epoch in range(hyper.epochs):
        t0 = time.perf_counter()
        values, weights = [], []
        for idx in batches:
            x, graph, labels = _dataset_batch(data, idx)
            if data.kind == "nodegraph":
                rows = np.flatnonzero(data.label_mask)
                y_oh = one_hot(data.labels[rows], width)
            else:
                rows = np.arange(len(labels))
                y_oh = one_hot(labels, width)
            with Tape(owner=None):
                out = model.predict(x, graph=graph)
                pred = out if rows.size == out.shape[0] else T.gather_rows(out, rows)
                loss = cross_entropy(pred, y_oh)
                value = loss.item()
                if not np.isfinite(value):
                    raise NumericError(
                        f"bp: non-finite loss (diagnostics: {T.diagnostics()})")
                grads = backward(loss)
            optimizer.step(grads)
            values.append(value)
            weights.append(rows.size)
        trajectory.append(float(np.average(values, weights=weights))
                          if values else float("nan"))
        walls.append((time.perf_counter() - t0) * 1000.0)

    model.trained = [True] * model.num_modules
    config = {"architecture": architecture, "mode": "bp",
              "epochs": hyper.epochs, "batch_size": hyper.batch_size,
              "lr": hyper.lr, "seed": hyper.seed}
    report = TrainReport(
        architecture=architecture, mode="bp", trajectories=[trajectory],
        wall_ms=[float(sum(walls))],
        train_accuracy=_split_accuracy(model, data, "train"),
        test_accuracy=_split_accuracy(model, data, "test"),
        config=config, seed=hyper.seed, epoch_wall_ms=[walls])
    return model, report
