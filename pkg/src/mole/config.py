"""Run configuration: a flat key=value text format with dotted keys, an
``include`` mechanism for shared defaults, and strict schema validation
(unknown keys are rejected by name, so typos never pass silently).
Precedence: command-line flags > config file > built-in defaults."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .tensor import TensorError


class ConfigError(TensorError):
    pass


_MODES = ("mole", "bp")
_SUITES = ("matrix", "mine", "dim+mine", "gmi+mine")
_KINDS = ("synth", "tabular", "grid", "multigraph", "nodegraph")
_SPLITS = ("train", "val", "test")

# key -> (type tag, default, doc). "data.param.*" is the one wildcard
# family: free-form synthetic-generator parameters.
SCHEMA = {
    "architecture": ("str", "", "reference stack name (required for train)"),
    "mode": ("choice:" + "|".join(_MODES), "mole", "training mode"),
    "suite": ("choice:" + "|".join(_SUITES), "matrix", "estimator suite"),
    "seed": ("int", 0, "master seed"),
    "out": ("str", "run", "output directory"),
    "threads": ("int", 1, "BLAS thread cap (results are thread-invariant)"),
    "data.kind": ("choice:" + "|".join(_KINDS), "synth", "dataset shape"),
    "data.synth": ("str", "gaussian_blobs", "synthetic generator kind"),
    "data.seed": ("int", 0, "synthetic generator seed"),
    "data.path": ("str", "", "tabular CSV / multigraph container path"),
    "data.test_path": ("str", "", "optional second tabular file (test rows)"),
    "data.schema": ("choice:adult|relaxed", "adult", "tabular schema"),
    "data.images": ("str", "", "IDX image file (train)"),
    "data.labels": ("str", "", "IDX label file (train) / nodegraph labels"),
    "data.test_images": ("str", "", "IDX image file (test)"),
    "data.test_labels": ("str", "", "IDX label file (test)"),
    "data.limit": ("int", 0, "keep first N train samples (0 = all)"),
    "data.features": ("str", "", "nodegraph feature matrix path"),
    "data.edges": ("str", "", "nodegraph edge list path"),
    "data.mask": ("str", "", "nodegraph label mask path"),
    "train.epochs": ("int", 30, "epochs per module"),
    "train.batch_size": ("int", 128, "minibatch size"),
    "train.lr": ("float", 1e-3, "module learning rate"),
    "train.critic_lr": ("float", 1e-4, "critic learning rate"),
    "train.critic_steps": ("int", 5, "critic steps per module step"),
    "train.mi_sample_cap": ("int", 512, "spectral estimator row cap"),
    "train.mi_x_target": ("choice:previous|raw", "previous",
                          "X side of encoder objectives"),
    "train.gmi_neg_per_node": ("int", 10, "graph-MI negatives per node"),
    "train.gmi_max_nodes": ("int", 256, "graph-MI node subsample"),
    "train.dim_max_positions": ("int", 64, "local-MI position subsample"),
    "probe.samples": ("int", 1000, "info-plane subsample"),
    "probe.tolerance_bits": ("float", 0.15, "DPI tolerance"),
    "probe.split": ("choice:" + "|".join(_SPLITS), "test", "probe split"),
    "probe.seed": ("int", 0, "probe subsample seed"),
    "eval.split": ("choice:" + "|".join(_SPLITS), "test", "eval split"),
    "export.samples": ("int", 1000, "embedding export subsample"),
    "export.split": ("choice:" + "|".join(_SPLITS), "test", "export split"),
}

_WILDCARD_PREFIX = "data.param."


@dataclass
class RunConfig:
    """Fully-resolved, typed configuration (every key has a value)."""

    values: dict = field(default_factory=dict)
    synth_params: dict = field(default_factory=dict)

    def __getitem__(self, key):
        if key in self.values:
            return self.values[key]
        raise ConfigError(f"unknown config key {key!r}")


def _coerce(key: str, spec_type: str, raw: str):
    try:
        if spec_type == "int":
            return int(raw)
        if spec_type == "float":
            return float(raw)
        if spec_type.startswith("choice:"):
            allowed = spec_type.split(":", 1)[1].split("|")
            if raw not in allowed:
                raise ConfigError(
                    f"config key {key!r}: {raw!r} not one of {allowed}")
            return raw
        return str(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: bad {spec_type} {raw!r}") from exc


def _parse_number(key: str, raw: str):
    try:
        f = float(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: bad number {raw!r}") from exc
    return int(f) if f == int(f) else f


def parse_config_file(path, _stack=None) -> dict:
    """Read ``key = value`` lines (# comments, blank lines allowed) into a
    raw string map. ``include other.cfg`` splices another file first, so
    later keys in the including file win."""
    path = Path(path)
    stack = _stack or ()
    resolved = path.resolve()
    if resolved in stack:
        raise ConfigError(f"config include cycle at {path}")
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out: dict = {}
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("include "):
            target = line[len("include "):].strip()
            included = parse_config_file(path.parent / target,
                                         stack + (resolved,))
            out.update(included)
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        out[key.strip()] = value.strip()
    return out


def resolve(raw: dict) -> RunConfig:
    """Apply defaults and types; reject unknown keys by name."""
    values = {key: default for key, (_, default, _) in SCHEMA.items()}
    synth_params = {}
    for key, raw_value in raw.items():
        if key.startswith(_WILDCARD_PREFIX):
            name = key[len(_WILDCARD_PREFIX):]
            if not name:
                raise ConfigError(f"unknown config key {key!r}")
            synth_params[name] = _parse_number(key, raw_value)
            continue
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _coerce(key, SCHEMA[key][0], str(raw_value))
    return RunConfig(values=values, synth_params=synth_params)


def format_resolved(config: RunConfig) -> str:
    lines = ["# resolved configuration (defaults applied)"]
    for key in sorted(config.values):
        lines.append(f"{key} = {config.values[key]}")
    for name in sorted(config.synth_params):
        lines.append(f"{_WILDCARD_PREFIX}{name} = {config.synth_params[name]}")
    return "\n".join(lines) + "\n"


def data_root() -> Path:
    return Path(os.environ.get("MOLE_DATA_DIR", "."))


def _resolve_path(value: str, key: str) -> Path:
    if not value:
        raise ConfigError(f"config key {key!r} is required for this data.kind")
    path = Path(value)
    return path if path.is_absolute() else data_root() / path


def _ensure_splits(dataset, seed: int):
    """File datasets arriving without a train split get the stock
    stratified 2/3–1/3 partition."""
    from . import data as D

    if "train" in dataset.splits:
        return dataset
    return D.split(dataset, (2.0 / 3.0, 1.0 / 3.0), seed=seed)


def load_dataset(config: RunConfig):
    """Build the Dataset named by the data.* keys; file paths resolve
    against MOLE_DATA_DIR unless absolute."""
    from . import data as D

    kind = config["data.kind"]
    if kind == "synth":
        return D.synth_generate(config["data.synth"], config.synth_params,
                                seed=config["data.seed"])
    if kind == "tabular":
        schema = (D.ADULT_SCHEMA if config["data.schema"] == "adult"
                  else D.RELAXED_ADULT_SCHEMA)
        train = D.load_tabular_csv(_resolve_path(config["data.path"],
                                                 "data.path"), schema)
        if config["data.test_path"]:
            test = D.load_tabular_csv(
                _resolve_path(config["data.test_path"], "data.test_path"),
                schema)
            return D.combine_train_test(train, test)
        return _ensure_splits(train, config["data.seed"])
    if kind == "grid":
        train = D.load_idx(_resolve_path(config["data.images"], "data.images"),
                           _resolve_path(config["data.labels"], "data.labels"))
        limit = config["data.limit"]
        if limit:
            train = D.take_first(train, limit)
        if config["data.test_images"]:
            test = D.load_idx(
                _resolve_path(config["data.test_images"], "data.test_images"),
                _resolve_path(config["data.test_labels"], "data.test_labels"))
            return D.combine_train_test(train, test)
        return _ensure_splits(train, config["data.seed"])
    if kind == "multigraph":
        graphs = D.load_multigraph(_resolve_path(config["data.path"],
                                                 "data.path"))
        return _ensure_splits(graphs, config["data.seed"])
    return D.load_nodegraph(
        _resolve_path(config["data.features"], "data.features"),
        _resolve_path(config["data.edges"], "data.edges"),
        _resolve_path(config["data.labels"], "data.labels"),
        _resolve_path(config["data.mask"], "data.mask"))


def hyper_from(config: RunConfig):
    from .trainer import Hyper

    return Hyper(
        epochs=config["train.epochs"],
        batch_size=config["train.batch_size"],
        lr=config["train.lr"],
        critic_lr=config["train.critic_lr"],
        critic_steps=config["train.critic_steps"],
        mi_sample_cap=config["train.mi_sample_cap"],
        mi_x_target=config["train.mi_x_target"],
        gmi_neg_per_node=config["train.gmi_neg_per_node"],
        gmi_max_nodes=config["train.gmi_max_nodes"],
        dim_max_positions=config["train.dim_max_positions"],
        seed=config["seed"])
