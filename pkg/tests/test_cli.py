"""End-to-end command tests through cli.main (no subprocesses)."""

import numpy as np
import pytest

from mole.cli import import_planetoid, import_tu_graph, main
from mole.data import DataError, load_multigraph, load_nodegraph
from mole.tensor import NumericError


@pytest.fixture
def blobs_cfg(tmp_path):
    cfg = tmp_path / "blobs.cfg"
    cfg.write_text(
        "architecture = adult_mlp\n"
        "suite = matrix\n"
        "data.kind = synth\n"
        "data.synth = gaussian_blobs\n"
        "data.param.n = 160\n"
        "data.param.dim = 104\n"
        "data.param.classes = 2\n"
        "train.epochs = 2\n"
        "train.batch_size = 64\n")
    return cfg


def _train(cfg, out, seed=0, extra=()):
    return main(["train", "--config", str(cfg), "--out", str(out),
                 "--seed", str(seed), *extra])


def test_train_writes_run_directory(blobs_cfg, tmp_path, capsys):
    out = tmp_path / "run"
    assert _train(blobs_cfg, out) == 0
    for name in ("resolved.cfg", "model.ckpt", "report.log", "timing.log",
                 "curves.png"):
        assert (out / name).exists(), name
    stdout = capsys.readouterr().out
    assert "train ok" in stdout
    report = (out / "report.log").read_text()
    assert report.startswith("dataset digest=")
    assert "summary mode=mole" in report
    assert "wall_ms" not in report  # timing lives in timing.log
    resolved = (out / "resolved.cfg").read_text()
    assert "train.epochs = 2" in resolved
    assert "seed = 0" in resolved


def test_train_eval_consistency(blobs_cfg, tmp_path, capsys):
    out = tmp_path / "run"
    _train(blobs_cfg, out, seed=4)
    summary = [ln for ln in (out / "report.log").read_text().splitlines()
               if ln.startswith("summary")][0]
    reported = float(summary.split("test_acc=")[1].split()[0])
    capsys.readouterr()
    assert main(["eval", "--config", str(blobs_cfg),
                 "--checkpoint", str(out / "model.ckpt"),
                 "--split", "test"]) == 0
    printed = capsys.readouterr().out
    value = float(printed.split("value=")[1].split()[0])
    assert abs(value - reported) < 5e-7  # summary rounds to 6 places


def test_train_is_byte_deterministic(blobs_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _train(blobs_cfg, a, seed=11)
    _train(blobs_cfg, b, seed=11)
    assert (a / "model.ckpt").read_bytes() == (b / "model.ckpt").read_bytes()
    assert (a / "report.log").read_bytes() == (b / "report.log").read_bytes()


def test_flag_precedence_over_file_and_set(blobs_cfg, tmp_path):
    out = tmp_path / "run"
    assert _train(blobs_cfg, out, seed=3, extra=["--set", "seed=2"]) == 0
    assert "seed = 3" in (out / "resolved.cfg").read_text()


def test_unknown_config_key_exits_2(blobs_cfg, tmp_path, capsys):
    code = _train(blobs_cfg, tmp_path / "x", extra=["--set", "learningrate=1"])
    assert code == 2
    assert "learningrate" in capsys.readouterr().err


def test_missing_architecture_exits_2(tmp_path, capsys):
    cfg = tmp_path / "min.cfg"
    cfg.write_text("data.kind = synth\ndata.param.dim = 8\n")
    assert _train(cfg, tmp_path / "x") == 2
    assert "architecture" in capsys.readouterr().err


def test_corrupt_checkpoint_exits_2(blobs_cfg, tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    code = main(["eval", "--config", str(blobs_cfg),
                 "--checkpoint", str(bad)])
    assert code == 2
    assert "bad magic" in capsys.readouterr().err


def test_numeric_failure_exits_3_with_diagnostics(blobs_cfg, tmp_path,
                                                  monkeypatch, capsys):
    import mole.cli as cli_mod

    def explode(plan, data):
        raise NumericError("synthetic blow-up")

    monkeypatch.setattr(cli_mod, "train_sequential", explode)
    out = tmp_path / "boom"
    assert _train(blobs_cfg, out) == 3
    assert (out / "numeric_failure.log").read_text().startswith("synthetic")
    assert "diagnostics" in capsys.readouterr().err


def test_probe_writes_records_and_figures(blobs_cfg, tmp_path, capsys):
    out = tmp_path / "run"
    _train(blobs_cfg, out)
    capsys.readouterr()
    code = main(["probe", "--config", str(blobs_cfg),
                 "--checkpoint", str(out / "model.ckpt"),
                 "--out", str(out), "--set", "probe.samples=60"])
    assert code == 0
    assert (out / "info_plane.tsv").exists()
    assert (out / "dpi.log").read_text().startswith("dpi passed=")
    assert (out / "info_plane.png").stat().st_size > 1000
    assert "dpi passed=" in capsys.readouterr().out


def test_probe_low_n_warning(blobs_cfg, tmp_path, capsys):
    out = tmp_path / "run"
    _train(blobs_cfg, out)
    capsys.readouterr()
    main(["probe", "--config", str(blobs_cfg),
          "--checkpoint", str(out / "model.ckpt"), "--out", str(out),
          "--set", "probe.samples=10"])
    assert "low-n" in capsys.readouterr().out


def test_export_embeddings_command(blobs_cfg, tmp_path, capsys):
    out = tmp_path / "run"
    _train(blobs_cfg, out)
    capsys.readouterr()
    code = main(["export-embeddings", "--config", str(blobs_cfg),
                 "--checkpoint", str(out / "model.ckpt"), "--out", str(out),
                 "--set", "export.samples=40"])
    assert code == 0
    assert (out / "embeddings.tsv").exists()
    assert (out / "embeddings.png").stat().st_size > 1000
    assert "silhouette=" in capsys.readouterr().out


def test_synth_command_writes_containers(tmp_path):
    out = tmp_path / "synthout"
    code = main(["synth", "--kind", "motif_graphs", "--set",
                 "data.param.n=10", "--out", str(out)])
    assert code == 0
    loaded = load_multigraph(out / "graphs.jsonl")
    assert loaded.num_samples == 10


# ---------------------------------------------------------------------------
# import converters
# ---------------------------------------------------------------------------


def _tu_dir(tmp_path):
    raw = tmp_path / "tu"
    raw.mkdir()
    (raw / "demo_A.txt").write_text(
        "1, 2\n2, 1\n2, 3\n3, 2\n4, 5\n5, 4\n")
    (raw / "demo_graph_indicator.txt").write_text("1\n1\n1\n2\n2\n")
    (raw / "demo_graph_labels.txt").write_text("1\n2\n")
    (raw / "demo_node_labels.txt").write_text("0\n3\n5\n0\n13\n")
    return raw


def test_import_tu_graph_roundtrip(tmp_path):
    raw = _tu_dir(tmp_path)
    dataset = import_tu_graph(raw)
    assert dataset.num_samples == 2
    assert list(dataset.labels) == [0, 1]
    g0 = dataset.features[0]
    assert g0.num_nodes == 3
    assert np.array_equal(np.argmax(g0.node_features.data, axis=1), [0, 3, 5])
    assert g0.undirected_edges.tolist() == [[0, 1], [1, 2]]

    out = tmp_path / "graphs.jsonl"
    assert main(["import", "--format", "tu-graph", "--input", str(raw),
                 "--output", str(out)]) == 0
    loaded = load_multigraph(out)
    assert loaded.num_samples == 2

    out2 = tmp_path / "graphs2.jsonl"
    main(["import", "--format", "tu-graph", "--input", str(raw),
          "--output", str(out2)])
    assert out.read_bytes() == out2.read_bytes()


def test_import_tu_graph_errors_with_line_numbers(tmp_path, capsys):
    raw = _tu_dir(tmp_path)
    with (raw / "demo_A.txt").open("a") as fh:
        fh.write("1, 9\n")
    code = main(["import", "--format", "tu-graph", "--input", str(raw),
                 "--output", str(tmp_path / "x.jsonl")])
    assert code == 2
    assert ":7:" in capsys.readouterr().err

    second = tmp_path / "c"
    second.mkdir()
    cross = _tu_dir(second)
    (cross / "demo_A.txt").write_text("1, 4\n")
    with pytest.raises(DataError, match="crosses graphs"):
        import_tu_graph(cross)


def _planetoid_dir(tmp_path):
    raw = tmp_path / "pl"
    raw.mkdir()
    (raw / "demo.content").write_text(
        "n1 1 0 0 sports\n"
        "n2 0 1 0 sports\n"
        "n3 0 0 1 science\n"
        "n4 1 1 0 science\n")
    (raw / "demo.cites").write_text("n1 n2\nn3 n4\nn2 n3\n")
    return raw


def test_import_planetoid_roundtrip(tmp_path):
    raw = _planetoid_dir(tmp_path)
    dataset = import_planetoid(raw, labeled_per_class=1)
    assert dataset.num_samples == 4
    assert dataset.class_count == 2
    # labels follow sorted class-name order: science=0, sports=1
    assert list(dataset.labels) == [1, 1, 0, 0]
    # first node of each class in file order is mask-true
    assert list(dataset.label_mask) == [True, False, True, False]

    out = tmp_path / "container"
    assert main(["import", "--format", "planetoid-like", "--input", str(raw),
                 "--output", str(out), "--labeled-per-class", "1"]) == 0
    loaded = load_nodegraph(out / "features.tsv", out / "edges.tsv",
                            out / "labels.tsv", out / "mask.tsv")
    assert np.array_equal(loaded.labels, dataset.labels)
    assert np.array_equal(loaded.label_mask, dataset.label_mask)
    assert np.array_equal(loaded.features.node_features.data,
                          dataset.features.node_features.data)


def test_import_planetoid_unknown_citation(tmp_path, capsys):
    raw = _planetoid_dir(tmp_path)
    with (raw / "demo.cites").open("a") as fh:
        fh.write("n1 ghost\n")
    code = main(["import", "--format", "planetoid-like", "--input", str(raw),
                 "--output", str(tmp_path / "out")])
    assert code == 2
    assert ":4:" in capsys.readouterr().err
