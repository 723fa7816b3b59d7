"""Training loop, stratified splitting, accuracy evaluation, K sweep, comparison.

The protocol is deliberately rigid: seeded stratified 2/3-1/3 split,
minibatches of two samples realized as two independent forward/backward
passes whose gradients are averaged, one SGD step per batch, a fixed
number of epochs, no early stopping.  Every source of randomness is an
explicit seed, so two runs with equal configuration are bit-identical.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .cloud import Dataset, LabeledSample
from .modal import GeneratorConfig, generate_dataset
from .models import (
    CnnConfig,
    Dgcnn,
    DgcnnConfig,
    PointNet,
    PointNetConfig,
    ProjCnn,
    ProjectionSpec,
    project_dataset,
)
from .nn.loss import softmax_cross_entropy
from .nn.optim import OptimizerConfig, SgdMomentum

DEFAULT_SWEEP_KS = (5, 10, 15, 20, 30)


class DivergenceError(RuntimeError):
    """Training hit a non-finite loss; carries the epoch/batch coordinates."""

    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 20
    batch_size: int = 2
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    split_train_fraction: float = 2.0 / 3.0
    split_seed: int = 7
    shuffle_each_epoch: bool = True

    def __post_init__(self):
        if not 0.0 < self.split_train_fraction < 1.0:
            raise ValueError("split_train_fraction must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def digest(self) -> str:
        text = (
            f"epochs={self.epochs};batch={self.batch_size};"
            f"lr={repr(self.optimizer.learning_rate)};mu={repr(self.optimizer.momentum)};"
            f"frac={repr(self.split_train_fraction)};split_seed={self.split_seed};"
            f"shuffle={self.shuffle_each_epoch}"
        )
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class Metrics:
    epoch_losses: list[float] = field(default_factory=list)
    test_accuracy: float | None = None
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0
    wall_time_s: float = 0.0
    config_digest: str = ""

    @property
    def confusion(self) -> tuple[int, int, int, int]:
        return (self.tp, self.tn, self.fp, self.fn)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_dataset(
    dataset: Dataset, fraction: float, seed: int
) -> tuple[list[LabeledSample], list[LabeledSample]]:
    """Seeded stratified split into (train, test).

    The total train size is round(fraction * n); each class contributes a
    count within one sample of fraction * class_count, and both splits keep
    at least one sample of every class.
    """
    n = len(dataset)
    if n < 3:
        raise ValueError(f"dataset must have at least 3 samples, got {n}")
    labels = dataset.labels()
    classes = sorted(set(labels.tolist()))
    counts = {c: int((labels == c).sum()) for c in classes}
    for c, cnt in counts.items():
        if cnt < 2:
            raise ValueError(f"class {c} has only {cnt} sample(s); need >= 2 per class")

    n_train = _round_half_up(fraction * n)
    base = {c: int(np.floor(fraction * counts[c])) for c in classes}
    # clamp so neither split loses a class, then hand out the remainder by
    # largest fractional part (ties toward the smaller class id)
    for c in classes:
        base[c] = min(max(base[c], 1), counts[c] - 1)
    remainder = n_train - sum(base.values())
    frac_part = sorted(classes, key=lambda c: (-(fraction * counts[c] - np.floor(fraction * counts[c])), c))
    i = 0
    while remainder != 0 and i < 10 * len(classes):
        c = frac_part[i % len(classes)]
        step = 1 if remainder > 0 else -1
        if 1 <= base[c] + step <= counts[c] - 1:
            base[c] += step
            remainder -= step
        i += 1

    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        rng.shuffle(members)
        train_idx += members[: base[c]].tolist()
        test_idx += members[base[c]:].tolist()
    train_idx = np.array(train_idx)
    rng.shuffle(train_idx)
    test_idx = np.array(sorted(test_idx))
    return (
        [dataset.samples[i] for i in train_idx],
        [dataset.samples[i] for i in test_idx],
    )


def train_model(
    model,
    pairs: list[tuple[np.ndarray, int]],
    cfg: TrainingConfig,
) -> Metrics:
    """Run the fixed-epoch SGD loop over (input, label) pairs, mutating `model`.

    Per batch: forward each sample in train mode, backpropagate its loss,
    average the accumulated gradients over the batch and apply one
    momentum-SGD step.  Records the mean training loss of each epoch.
    """
    if not pairs:
        raise ValueError("empty training set")
    t0 = time.perf_counter()
    opt = SgdMomentum(model.parameters(), cfg.optimizer)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence((cfg.split_seed, 1)))
    metrics = Metrics(config_digest=cfg.digest())
    n = len(pairs)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n) if cfg.shuffle_each_epoch else np.arange(n)
        losses = []
        for b_start in range(0, n, cfg.batch_size):
            batch = order[b_start: b_start + cfg.batch_size]
            opt.zero_grad()
            for j in batch:
                x, y = pairs[j]
                logits = model.forward(x, mode="train")
                loss, dlogits = softmax_cross_entropy(logits, y)
                if not np.isfinite(loss):
                    raise DivergenceError(epoch, b_start // cfg.batch_size, loss)
                # scaling the seed gradient averages the per-sample gradients
                # without an extra pass over every parameter tensor
                model.backward(dlogits / len(batch))
                losses.append(loss)
            opt.step()
        metrics.epoch_losses.append(float(np.mean(losses)))
    metrics.wall_time_s = time.perf_counter() - t0
    return metrics


def evaluate_accuracy(model, pairs: list[tuple[np.ndarray, int]], metrics: Metrics | None = None) -> Metrics:
    """Eval-mode predictions with accuracy and confusion counts (positive = class 1)."""
    if not pairs:
        raise ValueError("empty evaluation set")
    m = metrics if metrics is not None else Metrics()
    m.tp = m.tn = m.fp = m.fn = 0
    for x, y in pairs:
        pred = model.predict(x)
        if pred == 1 and y == 1:
            m.tp += 1
        elif pred == 0 and y == 0:
            m.tn += 1
        elif pred == 1 and y == 0:
            m.fp += 1
        else:
            m.fn += 1
    m.test_accuracy = (m.tp + m.tn) / len(pairs)
    return m


def cloud_pairs(samples: list[LabeledSample]) -> list[tuple[np.ndarray, int]]:
    return [(s.cloud.data, s.label) for s in samples]


def derive_seed(base: int, salt: int) -> int:
    """Deterministic 63-bit child seed for independent substreams."""
    return int(np.random.SeedSequence((base, salt)).generate_state(1, np.uint64)[0] >> 1)


def train_and_eval_split(model, train_samples, test_samples, cfg: TrainingConfig) -> Metrics:
    metrics = train_model(model, cloud_pairs(train_samples), cfg)
    return evaluate_accuracy(model, cloud_pairs(test_samples), metrics)


def k_sweep(
    dataset: Dataset,
    k_values: tuple[int, ...],
    cfg: TrainingConfig,
    init_seed: int = 0,
) -> list[tuple[int, float]]:
    """Train a fresh DGCNN per K on one shared split; report test accuracies.

    Each K gets its own deterministically derived initialization seed, so
    sweep points are independent trainings rather than warm starts.
    """
    if len(set(k_values)) != len(k_values):
        raise ValueError("K values must be distinct")
    min_n = min(s.cloud.n_points for s in dataset.samples)
    for k in k_values:
        if k >= min_n:
            raise ValueError(f"K={k} must be < smallest cloud size {min_n}")
    train_samples, test_samples = split_dataset(dataset, cfg.split_train_fraction, cfg.split_seed)
    input_dim = dataset.spatial_dim + dataset.n_channels
    out = []
    for k in k_values:
        model = Dgcnn(DgcnnConfig(input_dim=input_dim, k_neighbors=k,
                                  init_seed=derive_seed(init_seed, k)))
        m = train_and_eval_split(model, train_samples, test_samples, cfg)
        out.append((k, float(m.test_accuracy)))
    return out


def image_pairs(images: list[tuple[str, np.ndarray, int]], ids: set[str]) -> list[tuple[np.ndarray, int]]:
    return [(img[None, :, :], label) for sid, img, label in images if sid in ids]


def model_comparison(
    dataset: Dataset,
    cfg: TrainingConfig,
    k_neighbors: int = 10,
    cnn_cfg: CnnConfig | None = None,
    init_seed: int = 0,
) -> list[tuple[str, float]]:
    """Train CNN-per-projection, PointNet and DGCNN on one identical split.

    On d=3 data the CNN appears twice (xy and yz projections); on d=2 data
    once.  Returns [(model_name, test_accuracy), ...] in table order.
    """
    cnn_cfg = cnn_cfg if cnn_cfg is not None else CnnConfig()
    train_samples, test_samples = split_dataset(dataset, cfg.split_train_fraction, cfg.split_seed)
    train_ids = {s.sample_id for s in train_samples}
    test_ids = {s.sample_id for s in test_samples}
    input_dim = dataset.spatial_dim + dataset.n_channels
    rows: list[tuple[str, float]] = []

    planes = [(0, 1)] if dataset.spatial_dim == 2 else [(0, 1), (1, 2)]
    for salt, plane in enumerate(planes):
        spec = ProjectionSpec(plane=plane, resolution=cnn_cfg.resolution)
        images, _ = project_dataset(dataset, spec)
        cnn = ProjCnn(replace(cnn_cfg, init_seed=derive_seed(init_seed, 100 + salt)))
        cnn_train_cfg = replace(cfg, epochs=cnn_cfg.epochs)
        m = train_model(cnn, image_pairs(images, train_ids), cnn_train_cfg)
        m = evaluate_accuracy(cnn, image_pairs(images, test_ids), m)
        rows.append((f"cnn_{spec.plane_name()}", float(m.test_accuracy)))

    pn = PointNet(PointNetConfig(input_dim=input_dim, init_seed=derive_seed(init_seed, 200)))
    m = train_and_eval_split(pn, train_samples, test_samples, cfg)
    rows.append(("pointnet", float(m.test_accuracy)))

    dg = Dgcnn(DgcnnConfig(input_dim=input_dim, k_neighbors=k_neighbors,
                           init_seed=derive_seed(init_seed, 300)))
    m = train_and_eval_split(dg, train_samples, test_samples, cfg)
    rows.append(("dgcnn", float(m.test_accuracy)))
    return rows


def replicate_protocol(
    gen_cfg: GeneratorConfig,
    cfg: TrainingConfig,
    master_seeds: tuple[int, ...] = (42, 43, 44),
    k_neighbors: int = 10,
) -> dict[str, list[float]]:
    """Full protocol per master seed: generate, split, train both point models.

    Seed s regenerates the dataset with generator seed s and derives split
    and init seeds from it.  Returns per-model accuracy lists aligned with
    ``master_seeds``.
    """
    acc: dict[str, list[float]] = {"pointnet": [], "dgcnn": []}
    for s in master_seeds:
        ds = generate_dataset(replace(gen_cfg, seed=s))
        run_cfg = replace(cfg, split_seed=derive_seed(s, 2))
        train_samples, test_samples = split_dataset(ds, run_cfg.split_train_fraction, run_cfg.split_seed)
        input_dim = ds.spatial_dim + ds.n_channels
        pn = PointNet(PointNetConfig(input_dim=input_dim, init_seed=derive_seed(s, 3)))
        m = train_and_eval_split(pn, train_samples, test_samples, run_cfg)
        acc["pointnet"].append(float(m.test_accuracy))
        dg = Dgcnn(DgcnnConfig(input_dim=input_dim, k_neighbors=k_neighbors,
                               init_seed=derive_seed(s, 4)))
        m = train_and_eval_split(dg, train_samples, test_samples, run_cfg)
        acc["dgcnn"].append(float(m.test_accuracy))
    return acc


def format_metrics_csv(metrics: Metrics) -> str:
    lines = ["epoch,mean_loss"]
    for i, loss in enumerate(metrics.epoch_losses):
        lines.append(f"{i},{loss:.6g}")
    lines.append(f"test_accuracy,{metrics.test_accuracy:.6g}")
    return "\n".join(lines) + "\n"


def format_sweep_csv(result: list[tuple[int, float]]) -> str:
    lines = ["k,accuracy"] + [f"{k},{a:.6g}" for k, a in result]
    return "\n".join(lines) + "\n"


def format_comparison_csv(rows: list[tuple[str, float]]) -> str:
    lines = ["model,accuracy"] + [f"{name},{a:.6g}" for name, a in rows]
    return "\n".join(lines) + "\n"
