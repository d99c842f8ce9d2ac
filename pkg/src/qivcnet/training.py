"""Cross-validated training loop with early stopping and checkpointing.

Per fold: a fresh network is built from a forked seed, a stratified slice
of the training fold becomes the validation split, and adaptive-moment
gradient descent minimizes the weighted CCE+Dice task loss plus the scaled
KL penalty.  After each epoch the validation F1 decides whether to write a
checkpoint (strict improvement) or burn patience; when patience is
exhausted the best checkpoint is restored and the held-out test fold is
scored.

Randomness is partitioned so results do not depend on execution order:
the master seed forks once per fold (in fold order), and each fold forks
separate streams for parameter init, batch shuffling, and weight noise.
Folds may therefore run in parallel processes without changing any output.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .dataio import write_csv
from .errors import ConfigError, DataError, NumericalError
from .folds import FoldSplit, segment_labels
from .losses import LossWeights, composite_loss, one_hot
from .metrics import MetricsReport, compute_metrics
from .network import NetworkConfig, QivcNet, config_to_dict, infer_probs, segments_to_batch
from .rng import Rng
from .variational import total_loss

TRAIN_LOG_HEADER = ("epoch", "train_loss", "cce", "dice", "w_cce", "w_dice",
                    "kl", "val_f1", "val_acc")


@dataclass(frozen=True)
class TrainHyper:
    """Optimization settings; defaults follow the reference configuration."""

    lr: float = 1e-3
    batch: int = 256
    epochs: int = 500
    patience: int = 50
    val_fraction: float = 0.1
    dynamic_weights: bool = True
    ema_decay: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.lr <= 0.0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")
        if self.batch < 2:
            raise ConfigError(f"batch size must be >= 2, got {self.batch}")
        if self.epochs < 1 or self.epochs > 500:
            raise ConfigError(f"epochs must be in [1, 500], got {self.epochs}")
        if self.patience < 0:
            raise ConfigError(f"patience must be >= 0, got {self.patience}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val fraction must be in (0, 1), got {self.val_fraction}")


@dataclass
class TrainState:
    """Mutable per-fold training progress."""

    epoch: int = 0
    best_val_f1: float = -1.0
    best_epoch: int = -1
    bad_epochs: int = 0
    stopped_early: bool = False
    checkpoint_path: str = ""


@dataclass
class FoldResult:
    fold: int
    state: TrainState
    report: MetricsReport
    log_rows: "list[tuple]" = field(default_factory=list)


class Adam:
    """Adaptive moment estimation with bias correction."""

    def __init__(self, params: "list[Tensor]", lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = [p for p in params if p.requires_grad]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        lr_t = self.lr * math.sqrt(1.0 - self.beta2 ** self.t) / (1.0 - self.beta1 ** self.t)
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= lr_t * m / (np.sqrt(v) + self.eps)


def stratified_val_split(labels: np.ndarray, indices: np.ndarray, fraction: float,
                         rng: Rng) -> "tuple[np.ndarray, np.ndarray]":
    """Split fold-train indices into (train, validation), stratified by class."""
    indices = np.asarray(indices, dtype=np.int64)
    train: "list[int]" = []
    val: "list[int]" = []
    for c in np.unique(labels[indices]):
        pool = indices[labels[indices] == c]
        if len(pool) < 2:
            raise DataError(f"class {c} has too few segments to split off validation")
        pool = pool[rng.permutation(len(pool))]
        n_val = max(1, int(round(fraction * len(pool))))
        if len(pool) - n_val < 1:
            n_val = len(pool) - 1
        val.extend(pool[:n_val].tolist())
        train.extend(pool[n_val:].tolist())
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(val, dtype=np.int64))


def evaluate_segments(net: QivcNet, segments, labels: np.ndarray) -> MetricsReport:
    """Deterministic inference metrics over a list of segments."""
    probs = infer_probs(net, segments)
    preds = probs.argmax(axis=1)
    return compute_metrics(labels, preds, probs[:, 1])


def train_fold(segments, fold_index: int, train_idx: np.ndarray, test_idx: np.ndarray,
               net_cfg: NetworkConfig, hyper: TrainHyper, fold_rng: Rng,
               fold_dir: "str | Path") -> FoldResult:
    """Train one fold end to end; writes checkpoint.bin and train_log.csv."""
    fold_dir = Path(fold_dir)
    fold_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = fold_dir / "checkpoint.bin"
    labels = segment_labels(segments)
    if len(np.unique(labels[train_idx])) < 2 or len(np.unique(labels[test_idx])) < 2:
        raise DataError(f"fold {fold_index}: a split is missing one of the classes")

    rng_init = fold_rng.fork()
    rng_data = fold_rng.fork()
    rng_noise = fold_rng.fork()
    inner_train, val_idx = stratified_val_split(labels, train_idx, hyper.val_fraction, rng_data)

    net = QivcNet(net_cfg, rng_init)
    opt = Adam(net.parameters(), lr=hyper.lr, beta1=hyper.beta1,
               beta2=hyper.beta2, eps=hyper.adam_eps)
    lw = LossWeights(decay=hyper.ema_decay)
    state = TrainState(checkpoint_path=str(ckpt_path))
    val_segments = [segments[i] for i in val_idx]
    val_labels = labels[val_idx]
    x_train = segments_to_batch([segments[i] for i in inner_train])
    y_train = labels[inner_train]

    meta_common = {
        "fold_index": fold_index,
        "n_segments": len(segments),
        "train_indices": [int(i) for i in inner_train],
        "val_indices": [int(i) for i in val_idx],
        "test_indices": [int(i) for i in test_idx],
        "network": config_to_dict(net_cfg),
    }
    log_rows: "list[tuple]" = []
    n = len(inner_train)

    for epoch in range(1, hyper.epochs + 1):
        state.epoch = epoch
        perm = rng_data.permutation(n)
        sums = {"loss": 0.0, "cce": 0.0, "dice": 0.0, "kl": 0.0}
        seen = 0
        for start in range(0, n, hyper.batch):
            take = perm[start: start + hyper.batch]
            if len(take) < 2:
                continue  # a singleton batch has no usable batch statistics
            xb = Tensor(x_train[take])
            yb = one_hot(y_train[take])
            probs = net.forward(xb, training=True, rng=rng_noise)
            loss, cce_v, dice_v, _ = composite_loss(probs, yb, lw, update_weights=False)
            kl = net.kl()
            objective = total_loss(loss, kl, net_cfg.kl_scale)
            value = objective.item()
            if not np.isfinite(value):
                raise NumericalError(
                    f"fold {fold_index} epoch {epoch}: non-finite training loss")
            opt.zero_grad()
            ad.backward(objective)
            opt.step()
            size = len(take)
            sums["loss"] += value * size
            sums["cce"] += cce_v * size
            sums["dice"] += dice_v * size
            sums["kl"] += kl.item() * size
            seen += size
        w_cce, w_dice = lw.w_cce, lw.w_dice
        if hyper.dynamic_weights and seen:
            lw.update(sums["cce"] / seen, sums["dice"] / seen)
        val_report = evaluate_segments(net, val_segments, val_labels)
        log_rows.append((epoch, sums["loss"] / seen, sums["cce"] / seen,
                         sums["dice"] / seen, w_cce, w_dice, sums["kl"] / seen,
                         val_report.f1, val_report.accuracy))
        if val_report.f1 >= state.best_val_f1:
            # ties refresh the checkpoint: among equally best epochs the most
            # recent is kept (longer-trained weights are better calibrated),
            # but only a strict improvement resets the patience counter
            improved = val_report.f1 > state.best_val_f1
            state.best_val_f1 = val_report.f1
            state.best_epoch = epoch
            if improved:
                state.bad_epochs = 0
            else:
                state.bad_epochs += 1
            save_checkpoint(ckpt_path, net.state_arrays(),
                            {**meta_common, "best_val_f1": val_report.f1,
                             "best_epoch": epoch})
            if state.bad_epochs > hyper.patience:
                state.stopped_early = True
                break
        else:
            state.bad_epochs += 1
            if state.bad_epochs > hyper.patience:
                state.stopped_early = True
                break

    if state.best_epoch < 0:
        raise NumericalError(f"fold {fold_index}: no epoch produced a usable checkpoint")
    arrays, _ = load_checkpoint(ckpt_path)
    net.load_state(arrays)
    report = evaluate_segments(net, [segments[i] for i in test_idx], labels[test_idx])
    write_csv(fold_dir / "train_log.csv", TRAIN_LOG_HEADER, log_rows)
    return FoldResult(fold=fold_index, state=state, report=report, log_rows=log_rows)


def _fold_job(args) -> FoldResult:
    return train_fold(*args)


def train(segments, split: FoldSplit, net_cfg: NetworkConfig, hyper: TrainHyper,
          seed: int, outdir: "str | Path", fold_index: "int | None" = None,
          jobs: int = 1) -> "list[FoldResult]":
    """Train all folds (or one), sequentially or in parallel processes.

    Per-fold rngs are forked from the master seed before any work starts,
    so the artifacts are identical regardless of ``jobs`` or ``fold_index``.
    """
    outdir = Path(outdir)
    master = Rng(seed)
    fold_rngs = [master.fork() for _ in range(split.k)]
    wanted = range(split.k) if fold_index is None else [fold_index]
    for i in wanted:
        if not 0 <= i < split.k:
            raise ConfigError(f"fold index {i} out of range for {split.k} folds")
    tasks = [(segments, i, split.train_indices(i), split.test_indices(i),
              net_cfg, hyper, fold_rngs[i], outdir / f"fold{i}")
             for i in wanted]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_fold_job, tasks))
    else:
        results = [_fold_job(t) for t in tasks]
    return results


METRICS_CSV_HEADER = ("fold",) + MetricsReport.CSV_HEADER + ("best_val_f1", "best_epoch")


def metrics_rows(results: "list[FoldResult]") -> "list[tuple]":
    """Per-fold metric rows plus a mean row when more than one fold ran."""
    rows = [(r.fold,) + r.report.csv_row() + (repr(r.state.best_val_f1), str(r.state.best_epoch))
            for r in results]
    if len(results) > 1:
        reports = [r.report for r in results]
        mean = ["mean"]
        for name in MetricsReport.CSV_HEADER:
            mean.append(repr(float(np.mean([getattr(rep, name) for rep in reports]))))
        mean.append(repr(float(np.mean([r.state.best_val_f1 for r in results]))))
        mean.append(repr(float(np.mean([r.state.best_epoch for r in results]))))
        rows.append(tuple(mean))
    return rows
