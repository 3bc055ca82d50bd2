"""Training loop, synthetic data, linear evaluation and sweeps."""
import numpy as np
import pytest

from hypergcl.graphnet import AugmentationConfig
from hypergcl.losses import LossWeights
from hypergcl.trainer import (
    DatasetConfig,
    EncoderConfig,
    ExperimentConfig,
    NonFiniteLossError,
    OptimizerConfig,
    build_dataset,
    linear_eval,
    make_synthetic,
    sweep,
    train,
    write_trace_csv,
)


def tree31_config(**overrides):
    base = dict(
        variant="hypergcl",
        weights=LossWeights(lambda_u=3.0, t=2.0),
        encoder=EncoderConfig(hidden_dim=16, out_dim=8, init_scale=6.0),
        optimizer=OptimizerConfig(learning_rate=1e-2, steps=500),
        dataset=DatasetConfig(
            kind="balanced_tree", params={"branching": 2, "height": 4, "feature_noise": 1.0}
        ),
        augment1=AugmentationConfig(0.2, 0.1, seed=1),
        augment2=AugmentationConfig(0.2, 0.1, seed=2),
        seed=0,
        log_every=10,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# ------------------------------------------------------------ synthetic data

def test_balanced_tree_counts():
    g = make_synthetic("balanced_tree", {"branching": 2, "height": 3}, seed=0)
    assert g.n == 15
    assert g.num_edges == 14


def test_balanced_tree_labels_are_root_subtrees():
    g = make_synthetic("balanced_tree", {"branching": 3, "height": 3}, seed=0)
    assert np.array_equal(np.unique(g.labels), [0, 1, 2])
    # the root joins subtree 0; level-1 nodes carry their own subtree index
    assert g.labels[0] == 0
    assert np.array_equal(g.labels[1:4], [0, 1, 2])
    # children inherit the subtree of their parent
    for i in range(1, g.n):
        parent = (i - 1) // 3
        if parent > 0:
            assert g.labels[i] == g.labels[parent]


def test_balanced_tree_validation():
    with pytest.raises(ValueError):
        make_synthetic("balanced_tree", {"branching": 1, "height": 3}, seed=0)
    with pytest.raises(ValueError):
        make_synthetic("balanced_tree", {"branching": 2, "height": 1}, seed=0)
    with pytest.raises(ValueError):
        make_synthetic("balanced_tree", {"branching": 2, "height": 3, "bogus": 1}, seed=0)


def test_sbm_expected_cut_edges():
    cuts = []
    for s in range(30):
        g = make_synthetic("sbm", {"block_sizes": [50, 50], "p_in": 0.2, "p_out": 0.01}, seed=s)
        lab = g.labels
        cuts.append(np.sum(lab[g.edges[:, 0]] != lab[g.edges[:, 1]]))
    # 2500 cross pairs at p_out = 0.01: mean 25, sd ~5; the 30-seed mean is within +-3
    assert abs(np.mean(cuts) - 25.0) < 3.0


def test_sbm_validation():
    with pytest.raises(ValueError):
        make_synthetic("sbm", {"block_sizes": [10, 10], "p_in": 0.1, "p_out": 0.2}, seed=0)


def test_synthetic_determinism():
    a = make_synthetic("sbm", {"block_sizes": [20, 20], "p_in": 0.3, "p_out": 0.05}, seed=7)
    b = make_synthetic("sbm", {"block_sizes": [20, 20], "p_in": 0.3, "p_out": 0.05}, seed=7)
    assert np.array_equal(a.edges, b.edges)
    assert np.array_equal(a.features, b.features)


def test_splits_cover_and_are_disjoint():
    g = make_synthetic("balanced_tree", {"branching": 3, "height": 4}, seed=0)
    tr, va, te = g.splits["train"], g.splits["val"], g.splits["test"]
    assert len(tr) == 30  # 10 per class
    all_idx = np.concatenate([tr, va, te])
    assert len(np.unique(all_idx)) == g.n
    for cls in range(3):
        assert np.sum(g.labels[tr] == cls) == 10


# ---------------------------------------------------------------- train loop

def test_train_deterministic_bitwise():
    cfg = tree31_config(optimizer=OptimizerConfig(learning_rate=1e-2, steps=60))
    p1, t1 = train(cfg)
    p2, t2 = train(cfg)
    assert np.array_equal(p1.theta1.data, p2.theta1.data)
    assert np.array_equal(p1.theta2.data, p2.theta2.data)
    assert t1.records == t2.records


def test_align_only_collapses_and_hypergcl_does_not():
    collapse = tree31_config(
        weights=LossWeights(lambda_u=0.0, t=2.0),
        optimizer=OptimizerConfig(learning_rate=4e-2, steps=500),
    )
    _, trace = train(collapse)
    assert trace.last().erank_ambient <= 1.5

    healthy = tree31_config(optimizer=OptimizerConfig(learning_rate=1e-2, steps=500))
    _, trace = train(healthy)
    assert trace.last().erank_ambient >= 0.75 * 8


def test_loss_windows_non_increasing_at_default_lr():
    cfg = ExperimentConfig(
        variant="hypergcl",
        weights=LossWeights(lambda_u=3.0, t=2.0),
        encoder=EncoderConfig(hidden_dim=32, out_dim=16, init_scale=6.0),
        optimizer=OptimizerConfig(learning_rate=1e-3, steps=400),
        dataset=DatasetConfig(
            kind="sbm",
            params={"block_sizes": [30, 30], "p_in": 0.2, "p_out": 0.02, "feature_noise": 0.5},
        ),
        augment1=AugmentationConfig(0.2, 0.1, seed=1),
        augment2=AugmentationConfig(0.2, 0.1, seed=2),
        seed=0,
        log_every=10,
    )
    _, trace = train(cfg)
    tot, steps = trace.column("total"), trace.column("step")
    windows = [tot[(steps >= a) & (steps < a + 50)].mean() for a in range(0, 400, 50)]
    assert all(windows[i + 1] <= windows[i] + 1e-9 for i in range(len(windows) - 1))


def test_naive_uniformity_pushes_mean_norm_to_margin():
    cfg = tree31_config(
        variant="hyperbolic-naive-uniformity",
        weights=LossWeights(lambda_u=2.0, t=2.0),
        encoder=EncoderConfig(hidden_dim=16, out_dim=8, init_scale=1.0),
        optimizer=OptimizerConfig(learning_rate=1e-2, steps=400),
    )
    _, trace = train(cfg)
    cap = (1.0 - cfg.eps) / np.sqrt(cfg.curvature)
    assert trace.last().mean_norm > 0.99 * cap


def test_nonfinite_loss_aborts_with_step():
    # tanh/projection saturate most blowups; a step of ~1e160 makes the
    # second encode's weight product exceed the float64 range
    cfg = tree31_config(optimizer=OptimizerConfig(learning_rate=1e160, steps=50))
    with pytest.raises(NonFiniteLossError) as exc:
        train(cfg)
    assert exc.value.step >= 0
    assert exc.value.trace is not None


def test_trace_csv_format(tmp_path):
    cfg = tree31_config(optimizer=OptimizerConfig(learning_rate=1e-2, steps=30))
    _, trace = train(cfg)
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "step,total,align,iso,erank_ambient,erank_tangent,mean_norm"
    assert len(lines) == 1 + len(trace.records)
    first = lines[1].split(",")
    assert int(first[0]) == 0
    assert float(first[1]) == trace.records[0].total


# --------------------------------------------------------------- linear eval

def test_linear_eval_separated_clusters():
    rng = np.random.default_rng(0)
    n = 60
    labels = np.repeat([0, 1], n // 2)
    y = np.where(labels[:, None] == 0, -1.0, 1.0) * np.ones((n, 2)) + 0.01 * rng.standard_normal((n, 2))
    z = np.tanh(np.linalg.norm(y, axis=1, keepdims=True)) * y / np.linalg.norm(y, axis=1, keepdims=True)
    idx = rng.permutation(n)
    splits = {"train": idx[:20], "val": idx[20:40], "test": idx[40:]}
    assert linear_eval(z, labels, splits, curvature=1.0) == 1.0


def test_linear_eval_shuffled_labels_chance_level():
    accs = []
    for s in range(20):
        rng = np.random.default_rng(s)
        z = rng.standard_normal((100, 8)) * 0.1
        labels = rng.permutation(np.repeat([0, 1], 50))
        idx = rng.permutation(100)
        splits = {"train": idx[:40], "val": idx[40:60], "test": idx[60:]}
        accs.append(linear_eval(z, labels, splits, curvature=1.0))
    assert abs(np.mean(accs) - 0.5) < 0.05


def test_linear_eval_errors():
    z = np.zeros((4, 2))
    with pytest.raises(ValueError):
        linear_eval(z, None, {"train": [0, 1], "test": [2, 3]})
    labels = np.array([0, 0, 1, 1])
    with pytest.raises(ValueError):
        linear_eval(z, labels, None)
    with pytest.raises(ValueError):
        linear_eval(z, np.array([0, 0, 0, 1]), {"train": [0, 1], "test": [2, 3]})


# --------------------------------------------------------------------- sweep

def test_sweep_axes_and_determinism():
    cfg = tree31_config(optimizer=OptimizerConfig(learning_rate=1e-2, steps=60))
    rows = sweep(cfg, "curvature", [0.5, 1.0], seeds=[0, 1])
    assert [r["value"] for r in rows] == [0.5, 1.0]
    for r in rows:
        assert 0.0 <= r["accuracy"] <= 1.0
        assert r["erank_ambient"] >= 1.0
    again = sweep(cfg, "curvature", [0.5, 1.0], seeds=[0, 1])
    assert rows == again
    with pytest.raises(ValueError):
        sweep(cfg, "nope", [1.0])
    with pytest.raises(ValueError):
        sweep(cfg, "curvature", [])


def test_sweep_isotropy_changes_target(tmp_path):
    cfg = tree31_config(optimizer=OptimizerConfig(learning_rate=1e-2, steps=120))
    rows = sweep(cfg, "gaussian_isotropy", [0.0, 0.7], seeds=[0])
    # forcing a fraction of target variances to 0.01 must reduce the erank
    assert rows[1]["erank_ambient"] < rows[0]["erank_ambient"]


def test_build_dataset_from_files(tmp_path):
    import json

    g0 = make_synthetic("balanced_tree", {"branching": 2, "height": 3}, seed=0)
    edges = tmp_path / "edges.txt"
    edges.write_text("\n".join(f"{a} {b}" for a, b in g0.edges))
    feats = tmp_path / "features.csv"
    header = ",".join(f"f{i}" for i in range(g0.features.shape[1]))
    feats.write_text(
        header + "\n" + "\n".join(",".join(repr(float(v)) for v in row) for row in g0.features)
    )
    labels = tmp_path / "labels.csv"
    labels.write_text("label\n" + "\n".join(str(v) for v in g0.labels))
    splits = tmp_path / "splits.json"
    splits.write_text(json.dumps({k: v.tolist() for k, v in g0.splits.items()}))

    cfg = DatasetConfig(
        kind="files",
        params={
            "edges": str(edges),
            "features": str(feats),
            "labels": str(labels),
            "splits": str(splits),
        },
    )
    g = build_dataset(cfg, seed=0)
    assert g.n == g0.n
    assert np.array_equal(g.edges, g0.edges)
    assert np.array_equal(g.features, g0.features)
    assert np.array_equal(g.labels, g0.labels)
