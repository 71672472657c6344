"""Trainer tests: plan construction, loss oracles, gradient isolation,
determinism, and checkpoint round-trips."""

import math

import numpy as np
import pytest

from mole.data import synth_generate
from mole.tensor import ContractError, DimensionError, Tensor
from mole.trainer import (
    Hyper,
    Model,
    ModulePlan,
    Objective,
    PlanModule,
    TrainReport,
    build_plan,
    cross_entropy,
    one_hot,
    predict_scores,
    train_bp,
    train_module,
    train_sequential,
)


def _blobs(n=160, seed=0, dim=104):
    return synth_generate("gaussian_blobs", {"n": n, "dim": dim, "classes": 2},
                          seed=seed)


def _fast(**kw):
    base = dict(epochs=2, batch_size=64, seed=0, critic_steps=2,
                mi_sample_cap=64)
    base.update(kw)
    return Hyper(**base)


# ---------------------------------------------------------------------------
# plan construction
# ---------------------------------------------------------------------------


def test_build_plan_adult_matrix_shape():
    plan = build_plan("adult_mlp", "matrix")
    tags = [m.objective.tag for m in plan.modules]
    assert tags == ["MaxMI_X", "MaxMI_Y", "CrossEntropy"]
    assert [m.objective.estimator for m in plan.modules] == \
        ["matrix", "matrix", "none"]
    assert plan.modules[0].layer_indices == (0,)


def test_build_plan_dim_assigns_first_grid_module_only():
    plan = build_plan("mnist_cnn", "dim+mine")
    ests = [m.objective.estimator for m in plan.modules]
    assert ests == ["dim_local", "mine", "mine", "none"]


def test_build_plan_gmi_targets_encoder_graph_modules():
    plan = build_plan("mutagenicity_mpgnn", "gmi+mine")
    ests = [m.objective.estimator for m in plan.modules]
    # dense embedding and the label-side module fall back to the DV critic
    assert ests == ["mine", "gmi_lite", "mine", "none"]

    cora = build_plan("cora_gcn", "gmi+mine")
    assert [m.objective.estimator for m in cora.modules] == \
        ["gmi_lite", "mine", "none"]
    assert cora.modules[1].objective.labeled_only


def test_build_plan_rejects_suite_architecture_mismatch():
    with pytest.raises(ContractError):
        build_plan("adult_mlp", "dim+mine")
    with pytest.raises(ContractError):
        build_plan("adult_mlp", "gmi+mine")
    with pytest.raises(ContractError):
        build_plan("mnist_cnn", "gmi+mine")
    with pytest.raises(ContractError):
        build_plan("adult_mlp", "shannon")


def test_objective_validation():
    with pytest.raises(ContractError):
        Objective("CrossEntropy", "matrix")
    with pytest.raises(ContractError):
        Objective("MaxMI_X", "none")
    with pytest.raises(ContractError):
        Objective("MaxMI_X", "mine", labeled_only=True)
    with pytest.raises(ContractError):
        Objective("MaxEverything", "mine")


def test_plan_rejects_tag_order_violations():
    hyper = Hyper()
    y = PlanModule((0,), Objective("MaxMI_Y", "matrix"), hyper)
    x = PlanModule((1,), Objective("MaxMI_X", "matrix"), hyper)
    ce = PlanModule((2,), Objective("CrossEntropy"), hyper)
    with pytest.raises(ContractError):
        ModulePlan("adult_mlp", "matrix", [y, x, ce])
    with pytest.raises(ContractError):
        ModulePlan("adult_mlp", "matrix", [x, y])  # no CE tail
    with pytest.raises(ContractError):
        ModulePlan("adult_mlp", "matrix", [])


def test_hyper_validation():
    with pytest.raises(ContractError):
        Hyper(epochs=-1)
    with pytest.raises(ContractError):
        Hyper(batch_size=1)
    with pytest.raises(ContractError):
        Hyper(mi_x_target="rawest")


# ---------------------------------------------------------------------------
# loss oracles
# ---------------------------------------------------------------------------


def test_one_hot_roundtrip():
    oh = one_hot(np.array([0, 2, 1]), 3)
    assert oh.shape == (3, 3)
    assert np.array_equal(np.argmax(oh, axis=1), [0, 2, 1])
    assert np.array_equal(oh.sum(axis=1), np.ones(3))
    with pytest.raises(ContractError):
        one_hot(np.array([0, 3]), 3)


def test_cross_entropy_perfect_prediction_is_tiny():
    y = one_hot(np.array([1, 0, 2]), 3)
    loss = cross_entropy(Tensor(y), y).item()
    assert 0.0 <= loss <= 1e-11


def test_cross_entropy_uniform_prediction_is_log_c():
    for c in (2, 4, 10):
        pred = np.full((6, c), 1.0 / c)
        y = one_hot(np.arange(6) % c, c)
        loss = cross_entropy(Tensor(pred), y).item()
        assert abs(loss - math.log(c)) < 1e-12


def test_cross_entropy_known_value():
    loss = cross_entropy(Tensor(np.array([[0.7, 0.3]])),
                         np.array([[1.0, 0.0]])).item()
    assert abs(loss - (-math.log(0.7))) < 1e-12


def test_cross_entropy_validation():
    good = np.array([[0.5, 0.5]])
    with pytest.raises(ContractError):
        cross_entropy(Tensor(np.array([[0.9, 0.3]])), np.array([[1.0, 0.0]]))
    with pytest.raises(ContractError):
        cross_entropy(Tensor(good), np.array([[0.5, 0.5]]))
    with pytest.raises(DimensionError):
        cross_entropy(Tensor(good), np.array([[1.0, 0.0, 0.0]]))


# ---------------------------------------------------------------------------
# gradient isolation and sequencing
# ---------------------------------------------------------------------------


def test_trained_module_changes_only_its_own_params():
    data = _blobs()
    plan = build_plan("adult_mlp", "matrix", _fast())
    model = Model("adult_mlp", seed=0)
    model.trained[0] = True  # pretend upstream done so we can train module 1
    before = [model.module_bytes(k) for k in range(model.num_modules)]
    train_module(1, plan, model, data)
    after = [model.module_bytes(k) for k in range(model.num_modules)]
    assert after[0] == before[0]
    assert after[2] == before[2]
    assert after[1] != before[1]


def test_isolation_holds_with_neural_critics():
    data = _blobs()
    plan = build_plan("adult_mlp", "mine", _fast())
    model = Model("adult_mlp", seed=3)
    before = [model.module_bytes(k) for k in range(model.num_modules)]
    train_module(0, plan, model, data)
    after = [model.module_bytes(k) for k in range(model.num_modules)]
    assert after[1] == before[1]
    assert after[2] == before[2]
    assert after[0] != before[0]


def test_sequential_order_is_enforced():
    data = _blobs()
    plan = build_plan("adult_mlp", "matrix", _fast())
    model = Model("adult_mlp", seed=0)
    with pytest.raises(ContractError):
        train_module(1, plan, model, data)
    with pytest.raises(ContractError):
        train_module(5, plan, model, data)


def test_zero_lr_is_a_noop():
    """Frozen cross-entropy module: params bit-identical and the epoch
    trajectory exactly constant (the epoch aggregate is sample-weighted, so
    reshuffled ragged batches cannot move it)."""
    data = _blobs()
    plan = build_plan("adult_mlp", "matrix", _fast(lr=0.0, epochs=3))
    model = Model("adult_mlp", seed=1)
    model.trained[0] = model.trained[1] = True
    before = model.module_bytes(2)
    _, trajectory, _, _ = train_module(2, plan, model, data)
    assert model.module_bytes(2) == before
    assert max(trajectory) == min(trajectory)


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------


def test_sequential_run_reports_and_improves():
    data = _blobs(n=240)
    plan = build_plan("adult_mlp", "matrix", _fast(epochs=8))
    model, report = train_sequential(plan, data)
    assert all(model.trained)
    assert len(report.trajectories) == 3
    assert all(len(t) == 8 for t in report.trajectories)
    # cross-entropy on separable blobs must come down
    ce = report.trajectories[-1]
    assert ce[-1] < ce[0]
    assert report.test_accuracy > 0.5
    assert report.skipped_batches == 0
    assert len(report.wall_ms) == 3 and all(w > 0 for w in report.wall_ms)


def test_training_is_deterministic():
    runs = []
    for _ in range(2):
        plan = build_plan("adult_mlp", "mine", _fast(seed=7))
        model, report = train_sequential(plan, _blobs(seed=7))
        blob = b"".join(model.module_bytes(k) for k in range(model.num_modules))
        runs.append((blob, report.trajectories))
    assert runs[0][0] == runs[1][0]
    assert runs[0][1] == runs[1][1]

    plan = build_plan("adult_mlp", "mine", _fast(seed=8))
    other, _ = train_sequential(plan, _blobs(seed=7))
    blob = b"".join(other.module_bytes(k) for k in range(other.num_modules))
    assert blob != runs[0][0]


def test_bp_and_mole_share_initial_parameters():
    a = Model("mnist_cnn", seed=5)
    b = Model("mnist_cnn", seed=5)
    for k in range(a.num_modules):
        assert a.module_bytes(k) == b.module_bytes(k)

    # epochs=0 leaves train_bp's model at its initial state
    data = synth_generate("bar_patterns", {"n": 40}, seed=0)
    trained, _ = train_bp("mnist_cnn", data, Hyper(epochs=0, seed=5))
    for k in range(a.num_modules):
        assert trained.module_bytes(k) == a.module_bytes(k)


def test_bp_reduces_loss_on_blobs():
    data = _blobs(n=240)
    model, report = train_bp("adult_mlp", data, _fast(epochs=8))
    traj = report.trajectories[0]
    assert traj[-1] < traj[0]
    assert report.train_accuracy > 0.8
    assert report.mode == "bp"


def test_nodegraph_training_uses_labeled_rows():
    data = synth_generate(
        "two_community",
        {"nodes": 80, "feature_dim": 1433, "labeled_per_class": 10}, seed=2)
    plan = build_plan("cora_gcn", "gmi+mine", _fast(epochs=2))
    model, report = train_sequential(plan, data)
    assert report.skipped_batches == 0
    assert len(report.trajectories) == 3
    scores = predict_scores(model, data, data.splits["test"])
    assert scores.shape == (len(data.splits["test"]), 7)


def test_multigraph_training_runs_all_suites():
    data = synth_generate("motif_graphs", {"n": 60}, seed=4)
    for suite in ("matrix", "gmi+mine"):
        plan = build_plan("mutagenicity_mpgnn", suite,
                          _fast(epochs=1, batch_size=20))
        model, report = train_sequential(plan, data)
        assert len(report.trajectories) == 4
        assert 0.0 <= report.test_accuracy <= 1.0


def test_mi_target_can_be_raw_input():
    data = _blobs()
    plan = build_plan("adult_mlp", "mine", _fast(mi_x_target="raw"))
    model, report = train_sequential(plan, data)
    assert all(len(t) == 2 for t in report.trajectories)


def test_predict_scores_chunking_matches_single_shot():
    data = _blobs(n=100)
    model = Model("adult_mlp", seed=0)
    idx = data.splits["train"]
    a = predict_scores(model, data, idx, chunk=16)
    b = predict_scores(model, data, idx, chunk=10_000)
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# reports and checkpoints
# ---------------------------------------------------------------------------


def test_report_validation():
    with pytest.raises(ContractError):
        TrainReport("adult_mlp", "mole", [[1.0]], [1.0], 1.5, 0.5,
                    {"epochs": 1}, 0)
    with pytest.raises(ContractError):
        TrainReport("adult_mlp", "mole", [[1.0, 2.0]], [1.0], 0.5, 0.5,
                    {"epochs": 1}, 0)


def test_log_lines_one_record_per_epoch():
    report = TrainReport("adult_mlp", "mole", [[0.5, 0.4], [0.9, 0.8]],
                         [2.0, 2.0], 0.75, 0.5, {"epochs": 2}, 3,
                         epoch_wall_ms=[[1.0, 1.0], [1.0, 1.0]])
    lines = report.log_lines()
    assert len(lines) == 5
    assert lines[0] == "module=0 epoch=0 objective=0.500000 wall_ms=1.0"
    assert lines[-1].startswith("summary mode=mole")
    assert "seed=3" in lines[-1]


def test_model_checkpoint_roundtrip(tmp_path):
    data = _blobs(n=120)
    plan = build_plan("adult_mlp", "matrix", _fast(epochs=1))
    model, _ = train_sequential(plan, data)
    path = tmp_path / "model.npz"
    model.save(path)
    loaded = Model.load(path)
    assert loaded.architecture == "adult_mlp"
    assert loaded.trained == model.trained
    for k in range(model.num_modules):
        assert loaded.module_bytes(k) == model.module_bytes(k)
    idx = data.splits["test"]
    assert np.array_equal(predict_scores(loaded, data, idx),
                          predict_scores(model, data, idx))
