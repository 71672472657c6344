"""Command-line front door.

Commands: train, eval, probe, export-embeddings, import, synth. Every
command resolves its configuration from (in rising precedence) built-in
defaults, the --config file, then flags; the fully-resolved config lands
next to the outputs so any run can be reproduced bit-identically. Exit
codes: 0 success, 2 user/config/data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import figures
from .checkpoint import CheckpointError
from .config import (
    ConfigError,
    RunConfig,
    format_resolved,
    hyper_from,
    load_dataset,
    parse_config_file,
    parse_overrides,
    resolve,
)
from .data import (
    DataError,
    Dataset,
    write_idx,
    write_multigraph,
    write_nodegraph,
    write_tabular_tsv,
)
from .graphs import GraphBatch
from .probe import (
    LOW_N_THRESHOLD,
    accuracy,
    dpi_check,
    export_embeddings,
    info_plane,
    read_embeddings,
    write_info_plane,
)
from .tensor import NumericError, TensorError
from .trainer import Model, build_plan, train_bp, train_sequential

ELEMENT_COUNT = 14


# ---------------------------------------------------------------------------
# upstream-format converters (the `import` command)
# ---------------------------------------------------------------------------


def _single_file(in_dir: Path, suffix: str) -> Path:
    hits = sorted(in_dir.glob(f"*{suffix}"))
    if len(hits) != 1:
        raise DataError(
            f"{in_dir}: expected exactly one *{suffix}, found {len(hits)}")
    return hits[0]


def _int_lines(path: Path) -> list:
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            out.append(int(float(line)))
        except ValueError:
            raise DataError(f"{path}:{lineno}: expected an integer, "
                            f"got {line!r}") from None
    return out


def import_tu_graph(in_dir) -> Dataset:
    """Convert a TU-style graph-classification directory (the *_A.txt /
    *_graph_indicator.txt / *_graph_labels.txt / *_node_labels.txt quartet,
    1-based ids) into a multigraph dataset."""
    in_dir = Path(in_dir)
    if not in_dir.is_dir():
        raise DataError(f"{in_dir}: not a directory")
    a_path = _single_file(in_dir, "_A.txt")
    indicator = _int_lines(_single_file(in_dir, "_graph_indicator.txt"))
    graph_labels = _int_lines(_single_file(in_dir, "_graph_labels.txt"))
    node_labels = _int_lines(_single_file(in_dir, "_node_labels.txt"))

    if len(node_labels) != len(indicator):
        raise DataError(
            f"{in_dir}: {len(indicator)} indicator rows vs "
            f"{len(node_labels)} node labels")
    num_graphs = max(indicator) if indicator else 0
    if sorted(set(indicator)) != list(range(1, num_graphs + 1)):
        raise DataError(f"{in_dir}: graph indicator ids are not 1..{num_graphs}")
    if len(graph_labels) != num_graphs:
        raise DataError(f"{in_dir}: {num_graphs} graphs vs "
                        f"{len(graph_labels)} graph labels")

    classes = sorted(set(graph_labels))
    if len(classes) != 2:
        raise DataError(f"{in_dir}: need binary graph labels, got {classes}")
    label_of = {c: i for i, c in enumerate(classes)}

    # global 1-based node id -> (graph index, local node index)
    local = []
    counts = [0] * num_graphs
    for gid in indicator:
        g = gid - 1
        local.append((g, counts[g]))
        counts[g] += 1
    elements = [[] for _ in range(num_graphs)]
    for el, (g, _) in zip(node_labels, local):
        if not 0 <= el < ELEMENT_COUNT:
            raise DataError(f"{in_dir}: node label {el} outside "
                            f"0..{ELEMENT_COUNT - 1}")
        elements[g].append(el)

    edges = [[] for _ in range(num_graphs)]
    for lineno, line in enumerate(a_path.read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise DataError(f"{a_path}:{lineno}: expected 'u, v'")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataError(f"{a_path}:{lineno}: non-integer edge") from None
        if not (1 <= u <= len(local) and 1 <= v <= len(local)):
            raise DataError(f"{a_path}:{lineno}: edge ({u}, {v}) references "
                            f"a missing node")
        gu, lu = local[u - 1]
        gv, lv = local[v - 1]
        if gu != gv:
            raise DataError(f"{a_path}:{lineno}: edge ({u}, {v}) crosses graphs")
        edges[gu].append((lu, lv))

    eye = np.eye(ELEMENT_COUNT)
    graphs = [GraphBatch(eye[np.asarray(els, dtype=np.intp)], edg)
              for els, edg in zip(elements, edges)]
    labels = np.array([label_of[c] for c in graph_labels], dtype=np.int64)
    return Dataset(kind="multigraph", features=graphs, labels=labels,
                   class_count=2,
                   provenance={"source": str(in_dir), "digest": ""})


def import_planetoid(in_dir, labeled_per_class: int = 20) -> Dataset:
    """Convert a planetoid-like citation directory (<stem>.content with
    ``id feat... label`` rows, <stem>.cites with ``cited citing`` pairs)
    into a nodegraph dataset. The labeled-training mask marks the first
    ``labeled_per_class`` nodes of each class in file order."""
    in_dir = Path(in_dir)
    if not in_dir.is_dir():
        raise DataError(f"{in_dir}: not a directory")
    content = _single_file(in_dir, ".content")
    cites = _single_file(in_dir, ".cites")

    ids, rows, label_names = [], [], []
    for lineno, line in enumerate(content.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) < 3:
            raise DataError(f"{content}:{lineno}: expected 'id feats... label'")
        try:
            rows.append([float(v) for v in parts[1:-1]])
        except ValueError:
            raise DataError(f"{content}:{lineno}: non-numeric feature") from None
        ids.append(parts[0])
        label_names.append(parts[-1])
    if not rows:
        raise DataError(f"{content}: no rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataError(f"{content}: inconsistent feature widths {sorted(widths)}")
    index_of = {}
    for i, node_id in enumerate(ids):
        if node_id in index_of:
            raise DataError(f"{content}: duplicate node id {node_id!r}")
        index_of[node_id] = i

    classes = sorted(set(label_names))
    label_ids = {c: i for i, c in enumerate(classes)}
    labels = np.array([label_ids[c] for c in label_names], dtype=np.int64)

    edges = []
    for lineno, line in enumerate(cites.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DataError(f"{cites}:{lineno}: expected 'cited citing'")
        if parts[0] not in index_of or parts[1] not in index_of:
            raise DataError(f"{cites}:{lineno}: edge references unknown "
                            f"node id")
        edges.append((index_of[parts[0]], index_of[parts[1]]))

    mask = np.zeros(len(ids), dtype=bool)
    taken = {c: 0 for c in range(len(classes))}
    for i, y in enumerate(labels):
        if taken[int(y)] < labeled_per_class:
            mask[i] = True
            taken[int(y)] += 1
    idx = np.arange(len(ids))
    return Dataset(kind="nodegraph",
                   features=GraphBatch(np.asarray(rows, dtype=np.float64),
                                       edges),
                   labels=labels, class_count=len(classes), label_mask=mask,
                   splits={"train": idx[mask], "test": idx[~mask]},
                   provenance={"source": str(in_dir), "digest": ""})


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------


def _resolve_config(args) -> RunConfig:
    raw = parse_config_file(args.config) if args.config else {}
    raw.update(parse_overrides(getattr(args, "set", None)))
    if getattr(args, "seed", None) is not None:
        raw["seed"] = str(args.seed)
    if getattr(args, "out", None):
        raw["out"] = args.out
    if getattr(args, "threads", None) is not None:
        raw["threads"] = str(args.threads)
    return resolve(raw)


def _out_dir(config: RunConfig) -> Path:
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_model(path) -> Model:
    try:
        return Model.load(path)
    except CheckpointError as exc:
        raise ConfigError(f"checkpoint {path}: {exc}") from exc


def cmd_train(args) -> int:
    config = _resolve_config(args)
    if not config["architecture"]:
        raise ConfigError("config key 'architecture' is required for train")
    out = _out_dir(config)
    dataset = load_dataset(config)
    (out / "resolved.cfg").write_text(format_resolved(config),
                                      encoding="utf-8")
    hyper = hyper_from(config)
    if config["mode"] == "bp":
        model, report = train_bp(config["architecture"], dataset, hyper)
    else:
        plan = build_plan(config["architecture"], config["suite"], hyper)
        model, report = train_sequential(plan, dataset)
    model.save(out / "model.ckpt")
    # wall-clock goes to its own file so report.log is bit-reproducible
    lines = [f"dataset digest={dataset.digest} source="
             f"{dataset.provenance.get('source', '')}"]
    lines += report.log_lines(include_wall=False)
    (out / "report.log").write_text("\n".join(lines) + "\n", encoding="utf-8")
    timing = [f"module={k} wall_ms={w:.1f}"
              for k, w in enumerate(report.wall_ms)]
    (out / "timing.log").write_text("\n".join(timing) + "\n", encoding="utf-8")
    figures.training_curves(report, out / "curves.png")
    print(f"train ok mode={report.mode} architecture={report.architecture} "
          f"train_acc={report.train_accuracy:.4f} "
          f"test_acc={report.test_accuracy:.4f} out={out}")
    return 0


def cmd_eval(args) -> int:
    config = _resolve_config(args)
    model = _load_model(args.checkpoint)
    dataset = load_dataset(config)
    split = args.split or config["eval.split"]
    value = accuracy(model, dataset, split)
    print(f"accuracy split={split} value={value:.17g} "
          f"n={len(dataset.splits[split])}")
    return 0


def cmd_probe(args) -> int:
    config = _resolve_config(args)
    model = _load_model(args.checkpoint)
    dataset = load_dataset(config)
    out = _out_dir(config)
    samples = config["probe.samples"]
    if samples < LOW_N_THRESHOLD:
        print(f"warning: low-n probe (samples={samples} < "
              f"{LOW_N_THRESHOLD}); estimates will be noisy")
    points = info_plane(model, dataset, config["probe.split"],
                        samples_per_estimate=samples,
                        seed=config["probe.seed"])
    write_info_plane(points, out / "info_plane.tsv")
    report = dpi_check(points, config["probe.tolerance_bits"])
    (out / "dpi.log").write_text("\n".join(report.log_lines()) + "\n",
                                 encoding="utf-8")
    figures.info_plane_figure(points, out / "info_plane.png",
                              title=model.architecture)
    (out / "resolved.cfg").write_text(format_resolved(config),
                                      encoding="utf-8")
    for line in report.log_lines():
        print(line)
    return 0


def cmd_export(args) -> int:
    config = _resolve_config(args)
    model = _load_model(args.checkpoint)
    dataset = load_dataset(config)
    out = _out_dir(config)
    metas = export_embeddings(model, dataset, config["export.split"],
                              out / "embeddings.tsv",
                              samples_per_estimate=config["export.samples"],
                              seed=config["seed"])
    figures.embedding_figure(read_embeddings(out / "embeddings.tsv"),
                             out / "embeddings.png")
    for meta in metas:
        print(f"layer={meta['layer']} width={meta['width']} "
              f"silhouette={meta['silhouette']:.4f}")
    return 0


def cmd_import(args) -> int:
    out = Path(args.output)
    if args.format == "tu-graph":
        dataset = import_tu_graph(args.input)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_multigraph(out, dataset)
        print(f"import ok format=tu-graph graphs={dataset.num_samples} "
              f"out={out}")
    else:
        dataset = import_planetoid(args.input,
                                   labeled_per_class=args.labeled_per_class)
        out.mkdir(parents=True, exist_ok=True)
        write_nodegraph(out / "features.tsv", out / "edges.tsv",
                        out / "labels.tsv", out / "mask.tsv", dataset)
        print(f"import ok format=planetoid-like nodes={dataset.num_samples} "
              f"classes={dataset.class_count} out={out}")
    return 0


def cmd_synth(args) -> int:
    config = _resolve_config(args)
    from .data import synth_generate

    kind = args.kind or config["data.synth"]
    dataset = synth_generate(kind, config.synth_params,
                             seed=config["data.seed"])
    out = _out_dir(config)
    if dataset.kind == "tabular":
        write_tabular_tsv(out / "data.tsv", dataset)
    elif dataset.kind == "grid":
        write_idx(out / "images.idx", out / "labels.idx", dataset)
    elif dataset.kind == "multigraph":
        write_multigraph(out / "graphs.jsonl", dataset)
    else:
        write_nodegraph(out / "features.tsv", out / "edges.tsv",
                        out / "labels.tsv", out / "mask.tsv", dataset)
    print(f"synth ok kind={kind} samples={dataset.num_samples} "
          f"digest={dataset.digest} out={out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common(sub):
    sub.add_argument("--config", help="config file path")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a config key (repeatable)")
    sub.add_argument("--seed", type=int, help="override the master seed")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--threads", type=int, help="BLAS thread cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mole",
        description="modular gradient-isolated training toolkit")
    subs = parser.add_subparsers(dest="command", required=True)

    train = subs.add_parser("train", help="train a model per the config")
    _add_common(train)
    train.set_defaults(func=cmd_train)

    ev = subs.add_parser("eval", help="accuracy of a checkpoint on a split")
    _add_common(ev)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--split", choices=("train", "val", "test"))
    ev.set_defaults(func=cmd_eval)

    probe = subs.add_parser("probe",
                            help="information-plane records + DPI check")
    _add_common(probe)
    probe.add_argument("--checkpoint", required=True)
    probe.set_defaults(func=cmd_probe)

    export = subs.add_parser("export-embeddings",
                             help="per-layer embedding export with PCA")
    _add_common(export)
    export.add_argument("--checkpoint", required=True)
    export.set_defaults(func=cmd_export)

    imp = subs.add_parser("import", help="convert an upstream dataset layout")
    imp.add_argument("--format", required=True,
                     choices=("tu-graph", "planetoid-like"))
    imp.add_argument("--input", required=True, help="source directory")
    imp.add_argument("--output", required=True,
                     help="container file (tu-graph) or directory")
    imp.add_argument("--labeled-per-class", type=int, default=20)
    imp.set_defaults(func=cmd_import)

    synth = subs.add_parser("synth", help="write a synthetic dataset")
    _add_common(synth)
    synth.add_argument("--kind", help="generator kind")
    synth.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = getattr(args, "threads", None) or 1
    try:
        with threadpool_limits(limits=threads):
            return args.func(args)
    except NumericError as exc:
        diag = Path("numeric_failure.log")
        out = getattr(args, "out", None)
        if out:
            Path(out).mkdir(parents=True, exist_ok=True)
            diag = Path(out) / "numeric_failure.log"
        diag.write_text(f"{exc}\n", encoding="utf-8")
        print(f"error: numeric failure ({exc}); diagnostics at {diag}",
              file=sys.stderr)
        return 3
    except (TensorError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
