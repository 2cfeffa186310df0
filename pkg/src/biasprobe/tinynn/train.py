"""Deterministic training and evaluation loops.

Given a seed and a fixed thread count, train() is bit-reproducible: epoch
shuffles, augmentation draws and weight init all come from splitmix64
substreams, batches reduce in a fixed order, and evaluation is read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .._mem import enable_heap_reuse
from ..imagecore import LabeledImage
from ..rng import SplitMix64, derive_seed
from ..tasks import AugmentSpec, TaskSpec, augment
from .builders import ModelConfig, build_network
from .checkpoint import Checkpoint, checkpoint_from_network, network_from_checkpoint
from .layers import softmax_cross_entropy
from .optim import make_optimizer

DEFAULT_LR = {"adam": 1e-3, "momentum": 1e-1}


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite, naming the epoch and batch."""


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float | None = None  # None -> per-optimizer default
    weight_decay: float = 1e-4
    batch_size: int = 64
    epochs: int = 60
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("adam", "momentum"):
            raise ValueError(f"optimizer must be 'adam' or 'momentum', got {self.optimizer!r}")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    @property
    def lr(self) -> float:
        return self.learning_rate if self.learning_rate is not None else DEFAULT_LR[self.optimizer]


@dataclass(frozen=True)
class EpochMetric:
    epoch: int
    split: str
    loss: float
    accuracy: float


@dataclass
class EvalResult:
    overall: float
    per_category: np.ndarray  # accuracy per class index
    counts: np.ndarray
    loss: float = float("nan")


def _to_batch(images: list[np.ndarray]) -> np.ndarray:
    return np.ascontiguousarray(np.stack(images).transpose(0, 3, 1, 2))


def _forward_eval(net, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    outs = []
    for i in range(0, x.shape[0], batch_size):
        outs.append(net.forward(x[i:i + batch_size], train=False))
    return np.concatenate(outs, axis=0)


def evaluate_network(net, images: list[LabeledImage], batch_size: int = 64) -> EvalResult:
    """Per-category and overall argmax accuracy (ties go to the lowest index)."""
    if not images:
        raise ValueError("cannot evaluate on an empty image list")
    x = _to_batch([im.image for im in images])
    y = np.array([im.label for im in images])
    logits = _forward_eval(net, x, batch_size)
    loss, _, _ = softmax_cross_entropy(logits, y)
    pred = logits.argmax(axis=1)  # argmax returns the first (lowest) index on ties
    ncat = int(y.max()) + 1 if len(y) else 0
    per = np.zeros(ncat)
    counts = np.zeros(ncat, dtype=int)
    for c in range(ncat):
        sel = y == c
        counts[c] = sel.sum()
        per[c] = (pred[sel] == c).mean() if counts[c] else 0.0
    return EvalResult(float((pred == y).mean()), per, counts, loss)


def evaluate(ckpt: Checkpoint, images: list[LabeledImage], batch_size: int = 64) -> EvalResult:
    """Evaluate a checkpoint; image sizes must match the config's input size."""
    for im in images:
        if im.image.shape[0] != ckpt.config.input_size or im.image.shape[1] != ckpt.config.input_size:
            raise ValueError(
                f"image {im.source_id} is {im.image.shape[0]}x{im.image.shape[1]}, "
                f"model expects {ckpt.config.input_size}")
    return evaluate_network(network_from_checkpoint(ckpt), images, batch_size)


def train(
    config: ModelConfig,
    task: TaskSpec,
    tc: TrainConfig,
    augment_spec: AugmentSpec | None = AugmentSpec(),
    lr_patience: int = 5,
    early_stop_patience: int = 10,
    stop_val_accuracy: float | None = None,
    verbose: bool = False,
) -> tuple[Checkpoint, list[EpochMetric]]:
    """Train `config` on `task` and return (checkpoint, per-epoch metrics).

    Per epoch: seeded shuffle, augmented mini-batches, one optimizer step per
    batch, then a validation pass. The learning rate halves after
    `lr_patience` epochs without a validation-accuracy improvement; training
    stops early after `early_stop_patience` such epochs, or as soon as
    validation accuracy reaches `stop_val_accuracy` when that is set.
    """
    if not task.train or not task.val:
        raise ValueError("task must have non-empty train and val splits")
    enable_heap_reuse()
    net = build_network(config, seed=tc.seed, dtype=np.float32)
    optimizer = make_optimizer(tc.optimizer, net.params(), tc.lr, tc.weight_decay)

    x_train = np.stack([im.image for im in task.train])
    y_train = np.array([im.label for im in task.train])
    n = len(task.train)
    metrics: list[EpochMetric] = []
    best_val, stale = -1.0, 0

    for epoch in range(tc.epochs):
        shuffle_rng = SplitMix64(derive_seed(tc.seed, epoch, 0))
        aug_rng = SplitMix64(derive_seed(tc.seed, epoch, 1))
        order = shuffle_rng.permutation(n)
        losses: list[float] = []
        correct = 0
        seen = 0
        for b0 in range(0, n, tc.batch_size):
            idx = order[b0:b0 + tc.batch_size]
            if len(idx) < 2:
                continue  # batch statistics need >= 2 samples
            if augment_spec is not None:
                imgs = [augment(x_train[i], augment_spec, aug_rng) for i in idx]
            else:
                imgs = [x_train[i] for i in idx]
            xb = _to_batch(imgs)
            yb = y_train[idx]
            logits = net.forward(xb, train=True)
            loss, probs, dlogits = softmax_cross_entropy(logits, yb)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} batch {b0 // tc.batch_size}")
            losses.append(loss)
            correct += int((probs.argmax(axis=1) == yb).sum())
            seen += len(idx)
            net.backward(dlogits)
            optimizer.step(net.params(), net.grads())

        val = evaluate_network(net, task.val, batch_size=max(tc.batch_size, 32))
        train_loss = float(np.mean(losses)) if losses else float("nan")
        train_acc = correct / seen if seen else float("nan")
        metrics.append(EpochMetric(epoch, "train", train_loss, train_acc))
        metrics.append(EpochMetric(epoch, "val", val.loss, val.overall))
        if verbose:
            print(f"epoch {epoch}: train loss {train_loss:.4f} acc {train_acc:.3f} "
                  f"| val acc {val.overall:.3f} (lr {optimizer.lr:g})")

        if val.overall > best_val + 1e-12:
            best_val = val.overall
            stale = 0
        else:
            stale += 1
            if stale % lr_patience == 0:
                optimizer.lr *= 0.5
        if stop_val_accuracy is not None and val.overall >= stop_val_accuracy:
            break
        if stale >= early_stop_patience:
            break

    ckpt = checkpoint_from_network(net, config, optimizer,
                                   epoch=len(metrics) // 2, rng_seed=tc.seed)
    return ckpt, metrics


def metrics_to_csv(metrics: list[EpochMetric]) -> str:
    lines = ["epoch,split,loss,accuracy"]
    for m in metrics:
        lines.append(f"{m.epoch},{m.split},{m.loss!r},{m.accuracy!r}")
    return "\n".join(lines) + "\n"
