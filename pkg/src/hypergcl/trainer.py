"""Full-batch self-supervised training, linear evaluation and sweeps.

One training step opens a fresh tape, encodes two independently augmented
views, evaluates the selected objective and applies an Adam update to the
Euclidean encoder parameters (the manifold constraint is enforced by the
projection head, so no Riemannian optimizer is involved).  Everything is
seeded: given identical configs, two runs produce bit-identical traces.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import geometry as geom
from . import losses, spectral
from .graphnet import AugmentationConfig, GcnParams, Graph, augment, encode, init_params, normalize_adjacency
from .losses import LossWeights
from .tensor import NonFiniteError, Tape, Tensor
from .linalg import NotSPDError

__all__ = [
    "OptimizerConfig",
    "EncoderConfig",
    "EvalConfig",
    "DatasetConfig",
    "ExperimentConfig",
    "TraceRecord",
    "TrainingTrace",
    "NonFiniteLossError",
    "Adam",
    "make_synthetic",
    "build_dataset",
    "train",
    "linear_eval",
    "sweep",
    "SWEEP_AXES",
    "write_trace_csv",
    "write_matrix_csv",
    "write_sweep_csv",
]

SWEEP_AXES = ("curvature", "gaussian_mean", "gaussian_isotropy")


class NonFiniteLossError(RuntimeError):
    """Training aborted on a non-finite loss; carries the failing step."""

    def __init__(self, step: int, reason: str, trace: "TrainingTrace"):
        super().__init__(f"non-finite loss at step {step}: {reason}")
        self.step = step
        self.reason = reason
        self.trace = trace


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    steps: int = 500
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be nonnegative")


@dataclass(frozen=True)
class EncoderConfig:
    hidden_dim: int = 256
    out_dim: int = 64
    prelu_init: float = 0.25
    init_scale: float = 1.0

    def __post_init__(self):
        if self.hidden_dim < 1 or self.out_dim < 1:
            raise ValueError("encoder dims must be >= 1")
        if self.init_scale <= 0.0:
            raise ValueError("init_scale must be positive")


@dataclass(frozen=True)
class EvalConfig:
    steps: int = 300
    learning_rate: float = 0.5
    l2: float = 1e-4

    def __post_init__(self):
        if self.steps < 1 or self.learning_rate <= 0.0 or self.l2 < 0.0:
            raise ValueError("invalid linear-eval settings")


@dataclass(frozen=True)
class DatasetConfig:
    """Synthetic generator spec or file paths (kind = balanced_tree | sbm | files)."""

    kind: str = "balanced_tree"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("balanced_tree", "sbm", "files"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    curvature: float = 1.0
    eps: float = 1e-5
    variant: str = "hypergcl"
    weights: LossWeights = field(default_factory=LossWeights)
    target_mean: float = 0.0
    isotropy_degrade_p: Optional[float] = None
    jitter: float = spectral.DEFAULT_JITTER
    augment1: AugmentationConfig = field(default_factory=lambda: AugmentationConfig(seed=1))
    augment2: AugmentationConfig = field(default_factory=lambda: AugmentationConfig(seed=2))
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    log_every: int = 10
    dataset: DatasetConfig = field(default_factory=DatasetConfig)

    def __post_init__(self):
        if self.curvature <= 0.0:
            raise ValueError("curvature must be positive")
        if not (0.0 < self.eps < 1.0):
            raise ValueError("eps must lie in (0, 1)")
        if self.variant not in losses.VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.isotropy_degrade_p is not None and not (0.0 <= self.isotropy_degrade_p <= 1.0):
            raise ValueError("isotropy_degrade_p must lie in [0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")


@dataclass(frozen=True)
class TraceRecord:
    step: int
    total: float
    align: float
    iso: float
    erank_ambient: float
    erank_tangent: float
    mean_norm: float


@dataclass
class TrainingTrace:
    records: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def last(self) -> TraceRecord:
        if not self.records:
            raise ValueError("empty trace")
        return self.records[-1]


class Adam:
    """Standard Adam with bias correction over a fixed list of arrays."""

    def __init__(self, shapes, lr: float, beta1: float, beta2: float, eps: float):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params: list, grads: list) -> list:
        self.t += 1
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            mhat = self.m[i] / (1.0 - self.beta1 ** self.t)
            vhat = self.v[i] / (1.0 - self.beta2 ** self.t)
            out.append(p - self.lr * mhat / (np.sqrt(vhat) + self.eps))
        return out


def _derived_seed(*parts) -> int:
    """Stable nonnegative seed from a tuple of nonnegative ints."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


# ------------------------------------------------------------------ datasets

def _make_splits(labels: np.ndarray, train_per_class: int, rng) -> dict:
    train = []
    rest = []
    for cls in np.unique(labels):
        idx = np.where(labels == cls)[0]
        idx = rng.permutation(idx)
        train.extend(idx[:train_per_class])
        rest.extend(idx[train_per_class:])
    rest = rng.permutation(np.array(rest, dtype=int))
    half = rest.size // 2
    return {
        "train": np.sort(np.array(train, dtype=int)),
        "val": np.sort(rest[:half]),
        "test": np.sort(rest[half:]),
    }


def _noisy_onehot(labels: np.ndarray, num_classes: int, noise: float, rng) -> np.ndarray:
    x = np.eye(num_classes)[labels]
    return x + noise * rng.standard_normal(x.shape)


def make_synthetic(kind: str, params: dict, seed: int) -> Graph:
    """Deterministic desk-scale benchmark graphs.

    balanced_tree(branching b >= 2, height h >= 2): a complete b-ary tree
    of depth h; each node's label is the root-child subtree it belongs to
    (the root joins subtree 0).  sbm(block_sizes, p_in > p_out): labels are
    block ids.  Features are a noisy one-hot of the label.
    """
    rng = np.random.default_rng(seed)
    params = dict(params)
    noise = float(params.pop("feature_noise", 0.3))
    train_per_class = int(params.pop("train_per_class", 10))
    if kind == "balanced_tree":
        b = int(params.pop("branching"))
        h = int(params.pop("height"))
        if params:
            raise ValueError(f"unknown balanced_tree params {sorted(params)}")
        if b < 2 or h < 2:
            raise ValueError("balanced_tree needs branching >= 2 and height >= 2")
        n = (b ** (h + 1) - 1) // (b - 1)
        children = np.arange(1, n)
        edges = np.column_stack([(children - 1) // b, children])
        labels = np.zeros(n, dtype=int)
        for i in range(1, n):
            anc = i
            while anc > b:
                anc = (anc - 1) // b
            labels[i] = anc - 1
        features = _noisy_onehot(labels, b, noise, rng)
        splits = _make_splits(labels, train_per_class, rng)
        return Graph(n, edges, features, labels=labels, splits=splits)
    if kind == "sbm":
        sizes = [int(s) for s in params.pop("block_sizes")]
        p_in = float(params.pop("p_in"))
        p_out = float(params.pop("p_out"))
        if params:
            raise ValueError(f"unknown sbm params {sorted(params)}")
        if not sizes or min(sizes) < 1:
            raise ValueError("sbm needs nonempty positive block sizes")
        if not (0.0 <= p_out < p_in <= 1.0):
            raise ValueError("sbm requires 0 <= p_out < p_in <= 1")
        n = sum(sizes)
        labels = np.repeat(np.arange(len(sizes)), sizes)
        iu, ju = np.triu_indices(n, k=1)
        prob = np.where(labels[iu] == labels[ju], p_in, p_out)
        keep = rng.random(iu.size) < prob
        edges = np.column_stack([iu[keep], ju[keep]])
        features = _noisy_onehot(labels, len(sizes), noise, rng)
        splits = _make_splits(labels, train_per_class, rng)
        return Graph(n, edges, features, labels=labels, splits=splits)
    raise ValueError(f"unknown synthetic kind {kind!r}")


def build_dataset(cfg: DatasetConfig, seed: int) -> Graph:
    if cfg.kind == "files":
        from .graphnet import load_graph

        p = cfg.params
        return load_graph(p["edges"], p["features"], p.get("labels"), p.get("splits"))
    return make_synthetic(cfg.kind, cfg.params, seed)


# ------------------------------------------------------------------ training

def _target_diag(cfg: ExperimentConfig) -> Optional[np.ndarray]:
    if cfg.isotropy_degrade_p is None:
        return None
    d = cfg.encoder.out_dim
    k = int(round(cfg.isotropy_degrade_p * d))
    diag = np.ones(d)
    if k:
        rng = np.random.default_rng(_derived_seed(cfg.seed, 104729))
        diag[rng.choice(d, size=k, replace=False)] = 0.01
    return diag


def _tangent_matrix(z: np.ndarray, c: float) -> np.ndarray:
    return geom.log0_rows(Tensor(z), c).data


def train(cfg: ExperimentConfig, graph: Optional[Graph] = None):
    """Optimize the selected objective; returns (params, trace).

    The trace is logged every `log_every` steps (plus the final step) on the
    un-augmented graph: loss parts, effective ranks of the ambient and
    log0-mapped embedding matrices, and the mean embedding norm.
    """
    if graph is None:
        graph = build_dataset(cfg.dataset, cfg.seed)
    d_x = graph.features.shape[1]
    params = init_params(
        d_x,
        cfg.encoder.hidden_dim,
        cfg.encoder.out_dim,
        cfg.seed,
        cfg.encoder.prelu_init,
        cfg.encoder.init_scale,
    )
    opt = cfg.optimizer
    adam = Adam(
        [t.data.shape for t in params.all_tensors()],
        opt.learning_rate,
        opt.beta1,
        opt.beta2,
        opt.adam_eps,
    )
    adj_full = normalize_adjacency(graph)
    target_diag = _target_diag(cfg)
    trace = TrainingTrace()

    def log_record(step: int, total: float, align: float, second: float):
        z = encode(graph, params, cfg.curvature, cfg.eps, adj=adj_full).data
        y = _tangent_matrix(z, cfg.curvature)
        trace.records.append(
            TraceRecord(
                step=step,
                total=total,
                align=align,
                iso=second,
                erank_ambient=spectral.effective_rank(z),
                erank_tangent=spectral.effective_rank(y),
                mean_norm=float(np.mean(np.sqrt(np.sum(z * z, axis=1)))),
            )
        )

    for step in range(opt.steps):
        g1 = augment(graph, replace(cfg.augment1, seed=_derived_seed(cfg.augment1.seed, step)))
        g2 = augment(graph, replace(cfg.augment2, seed=_derived_seed(cfg.augment2.seed, step)))
        try:
            with Tape() as tape:
                z1 = encode(g1, params, cfg.curvature, cfg.eps)
                z2 = encode(g2, params, cfg.curvature, cfg.eps)
                total, align, second = losses.total_loss_parts(
                    z1,
                    z2,
                    cfg.weights,
                    cfg.curvature,
                    cfg.variant,
                    jitter=cfg.jitter,
                    target_mean=cfg.target_mean,
                    target_diag=target_diag,
                )
            grads = tape.backward(total)
        except (NonFiniteError, NotSPDError) as e:
            raise NonFiniteLossError(step, str(e), trace) from e
        tensors = params.all_tensors()
        gs = [grads.wrt(t) for t in tensors]
        if opt.weight_decay:
            gs[0] = gs[0] + opt.weight_decay * tensors[0].data
            gs[1] = gs[1] + opt.weight_decay * tensors[1].data
        new = adam.step([t.data for t in tensors], gs)
        params.theta1 = Tensor(new[0])
        params.theta2 = Tensor(new[1])
        params.slopes = (Tensor(new[2]), Tensor(new[3]))
        if step % cfg.log_every == 0 or step == opt.steps - 1:
            try:
                log_record(step, float(total), float(align), float(second))
            except (NonFiniteError, NotSPDError) as e:
                raise NonFiniteLossError(step, str(e), trace) from e
    return params, trace


def final_embedding(cfg: ExperimentConfig, params: GcnParams, graph: Graph) -> np.ndarray:
    return encode(graph, params, cfg.curvature, cfg.eps).data


# --------------------------------------------------------------- linear eval

def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def linear_eval(
    z: np.ndarray,
    labels: np.ndarray,
    splits: dict,
    curvature: Optional[float] = None,
    cfg: EvalConfig = EvalConfig(),
) -> float:
    """Logistic-regression probe on frozen embeddings; returns test accuracy.

    Hyperbolic embeddings are mapped to the tangent plane by log0 first
    (pass the curvature); Euclidean embeddings are used as-is.  The probe is
    multinomial, trained full-batch by gradient descent with an L2 penalty,
    deterministically from a zero init.
    """
    z = np.asarray(z, dtype=float)
    if labels is None:
        raise ValueError("linear_eval needs labels")
    labels = np.asarray(labels, dtype=int)
    if splits is None or any(k not in splits for k in ("train", "test")):
        raise ValueError("linear_eval needs train/test splits")
    x = _tangent_matrix(z, float(curvature)) if curvature is not None else z
    tr = np.asarray(splits["train"], dtype=int)
    te = np.asarray(splits["test"], dtype=int)
    if tr.size == 0 or te.size == 0:
        raise ValueError("train and test splits must be nonempty")
    classes = np.unique(labels[tr])
    if classes.size < 2:
        raise ValueError("train split contains a single class")
    k = int(labels.max()) + 1
    xt = x[tr]
    onehot = np.eye(k)[labels[tr]]
    w = np.zeros((x.shape[1], k))
    b = np.zeros(k)
    m = xt.shape[0]
    for _ in range(cfg.steps):
        p = _softmax(xt @ w + b)
        diff = (p - onehot) / m
        w -= cfg.learning_rate * (xt.T @ diff + cfg.l2 * w)
        b -= cfg.learning_rate * diff.sum(axis=0)
    pred = np.argmax(x[te] @ w + b, axis=1)
    return float(np.mean(pred == labels[te]))


# -------------------------------------------------------------------- sweeps

def _apply_axis(cfg: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    if axis == "curvature":
        return replace(cfg, curvature=float(value))
    if axis == "gaussian_mean":
        return replace(cfg, target_mean=float(value))
    if axis == "gaussian_isotropy":
        return replace(cfg, isotropy_degrade_p=float(value))
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def _reseeded(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(
        cfg,
        seed=seed,
        augment1=replace(cfg.augment1, seed=_derived_seed(seed, 1)),
        augment2=replace(cfg.augment2, seed=_derived_seed(seed, 2)),
    )


def sweep(base: ExperimentConfig, axis: str, values, seeds=None) -> list:
    """One train+eval per (value, seed); rows report seed-averaged metrics."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    seeds = [base.seed] if seeds is None else [int(s) for s in seeds]
    rows = []
    for value in values:
        accs, eras, erts = [], [], []
        for seed in seeds:
            cfg = _apply_axis(_reseeded(base, seed), axis, value)
            graph = build_dataset(cfg.dataset, cfg.seed)
            params, trace = train(cfg, graph)
            last = trace.last()
            acc = linear_eval(
                final_embedding(cfg, params, graph),
                graph.labels,
                graph.splits,
                curvature=cfg.curvature,
                cfg=cfg.eval,
            )
            accs.append(acc)
            eras.append(last.erank_ambient)
            erts.append(last.erank_tangent)
        rows.append(
            {
                "value": float(value),
                "accuracy": float(np.mean(accs)),
                "erank_ambient": float(np.mean(eras)),
                "erank_tangent": float(np.mean(erts)),
            }
        )
    return rows


# ------------------------------------------------------------------- file IO

def write_trace_csv(trace: TrainingTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "total", "align", "iso", "erank_ambient", "erank_tangent", "mean_norm"])
        for r in trace.records:
            writer.writerow(
                [
                    r.step,
                    repr(r.total),
                    repr(r.align),
                    repr(r.iso),
                    repr(r.erank_ambient),
                    repr(r.erank_tangent),
                    repr(r.mean_norm),
                ]
            )


def write_matrix_csv(matrix: np.ndarray, path) -> None:
    """Plain CSV of floats, one matrix row per line, no header."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="") as fh:
        for row in matrix:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def write_sweep_csv(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "accuracy", "erank_ambient", "erank_tangent"])
        for row in rows:
            writer.writerow(
                [
                    repr(row["value"]),
                    repr(row["accuracy"]),
                    repr(row["erank_ambient"]),
                    repr(row["erank_tangent"]),
                ]
            )
