"""Losses, the shuffled-order training loop, evaluation and attention inspection."""
from __future__ import annotations

import math
from collections.abc import Collection
from dataclasses import asdict, dataclass, field

import numpy as np

from . import functional as F
from .container import Dataset
from .errors import StateError, ValidationError
from .model import EST
from .pipeline import (PermutationTable, PipelineConfig, make_snippet_set,
                       shuffle_snippets, video_rng)
from .tensor import Tensor, backward

EVAL_STREAM = 2**31 - 1  # epoch slot reserved for evaluation sampling


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    warmup_frac: float = 0.05
    batch_size: int = 8
    epochs: int = 50
    lambda_ssop: float = 1.0
    seed: int = 0
    optimizer: str = "sgd"          # "sgd" or "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.lambda_ssop < 0:
            raise ValidationError("lambda_ssop must be non-negative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValidationError("batch_size and epochs must be positive")


# ---------------------------------------------------------------------------
# losses


def loss_cls(probs: Tensor, labels) -> Tensor:
    return F.bce_sum_loss(probs, F.one_hot(labels, probs.shape[-1]))


def loss_ssop(probs: Tensor, order_labels) -> Tensor:
    if order_labels is None or any(o is None for o in np.atleast_1d(order_labels)):
        raise StateError("order loss is only defined on shuffled snippet sets")
    return F.bce_sum_loss(probs, F.one_hot(np.asarray(order_labels, dtype=int),
                                           probs.shape[-1]))


def total_loss(l_cls: Tensor, l_s: Tensor | None, lambda_ssop: float = 1.0) -> Tensor:
    if l_s is None or lambda_ssop == 0:
        return l_cls
    return l_cls + l_s * lambda_ssop


# ---------------------------------------------------------------------------
# schedule and optimizers


def learning_rate_at(step: int, total_steps: int, base_lr: float, warmup_frac: float) -> float:
    """Linear warmup to ``base_lr`` over the first ``warmup_frac`` of steps, then cosine to 0."""
    warmup = max(1, int(round(warmup_frac * total_steps)))
    if step < warmup:
        return base_lr * (step + 1) / warmup
    span = total_steps - warmup
    if span <= 0:
        return base_lr
    progress = min(1.0, (step - warmup + 1) / span)
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * progress))


class SGD:
    def __init__(self, params: dict[str, Tensor]):
        self.params = params

    def step(self, lr: float, trainable: Collection[str] | None = None) -> None:
        for name, p in self.params.items():
            if p.grad is None or (trainable is not None and name not in trainable):
                continue
            p.data -= lr * p.grad


class Adam:
    def __init__(self, params: dict[str, Tensor], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self, lr: float, trainable: Collection[str] | None = None) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1 - b1 ** self.t, 1 - b2 ** self.t
        for name, p in self.params.items():
            if p.grad is None or (trainable is not None and name not in trainable):
                continue
            self.m[name] = b1 * self.m[name] + (1 - b1) * p.grad
            self.v[name] = b2 * self.v[name] + (1 - b2) * p.grad ** 2
            p.data -= lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)


def make_optimizer(model: EST, cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(model.params, cfg.beta1, cfg.beta2, cfg.adam_eps)
    return SGD(model.params)


# ---------------------------------------------------------------------------
# batches


@dataclass
class Batch:
    frames: np.ndarray                 # B x n x J x H x W x C
    labels: np.ndarray
    order_labels: np.ndarray | None
    video_ids: np.ndarray


def training_batch(videos, table: PermutationTable, seed: int, epoch: int,
                   pcfg: PipelineConfig = PipelineConfig()) -> Batch:
    """Sample snippets and one shuffle order per video from its (seed, epoch, id) stream."""
    sets = []
    for v in videos:
        rng = video_rng(seed, v.id, epoch)
        s = make_snippet_set(v, rng, pcfg)
        sets.append(shuffle_snippets(s, int(rng.integers(len(table))), table))
    return Batch(np.stack([s.frames for s in sets]), np.array([s.label for s in sets]),
                 np.array([s.order_label for s in sets]), np.array([s.video_id for s in sets]))


def eval_batch(videos, seed: int, pcfg: PipelineConfig = PipelineConfig()) -> Batch:
    """Natural snippet order, sampling seeded by video id only."""
    sets = [make_snippet_set(v, video_rng(seed, v.id, EVAL_STREAM), pcfg) for v in videos]
    return Batch(np.stack([s.frames for s in sets]), np.array([s.label for s in sets]),
                 None, np.array([s.video_id for s in sets]))


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochStats:
    epoch: int
    lr: float
    loss_cls: float
    loss_ssop: float | None
    train_acc: float
    order_acc: float | None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trainer:
    """Holds optimizer state and the global step for a full run."""
    model: EST
    dataset: Dataset
    table: PermutationTable
    cfg: TrainConfig = TrainConfig()
    pcfg: PipelineConfig = PipelineConfig()
    trainable: Collection[str] | None = None
    step: int = 0
    history: list[EpochStats] = field(default_factory=list)

    def __post_init__(self):
        if len(self.dataset) == 0:
            raise ValidationError("cannot train on an empty dataset")
        self.optimizer = make_optimizer(self.model, self.cfg)
        self.steps_per_epoch = math.ceil(len(self.dataset) / self.cfg.batch_size)
        self.total_steps = self.steps_per_epoch * self.cfg.epochs

    def lr(self) -> float:
        return learning_rate_at(self.step, self.total_steps, self.cfg.learning_rate,
                                self.cfg.warmup_frac)

    def train_step(self, batch: Batch) -> tuple[float, float | None, int, int]:
        use_ssop = self.cfg.lambda_ssop > 0
        out = self.model(batch.frames, with_ssop=use_ssop)
        l_c = loss_cls(out.probs, batch.labels)
        l_s = loss_ssop(out.order_probs, batch.order_labels) if use_ssop else None
        loss = total_loss(l_c, l_s, self.cfg.lambda_ssop)
        self.model.zero_grad()
        backward(loss)
        self.optimizer.step(self.lr(), self.trainable)
        self.step += 1
        correct = int((out.probs.data.argmax(-1) == batch.labels).sum())
        order_correct = (int((out.order_probs.data.argmax(-1) == batch.order_labels).sum())
                         if use_ssop else 0)
        return l_c.item(), (l_s.item() if use_ssop else None), correct, order_correct

    def train_epoch(self) -> EpochStats:
        epoch = len(self.history)
        order = np.random.default_rng([self.cfg.seed, epoch]).permutation(len(self.dataset))
        lr = self.lr()
        sums = [0.0, 0.0, 0, 0]
        for start in range(0, len(order), self.cfg.batch_size):
            videos = [self.dataset.videos[i] for i in order[start:start + self.cfg.batch_size]]
            l_c, l_s, c, oc = self.train_step(
                training_batch(videos, self.table, self.cfg.seed, epoch, self.pcfg))
            sums[0] += l_c
            sums[1] += l_s or 0.0
            sums[2] += c
            sums[3] += oc
        n = len(self.dataset)
        use_ssop = self.cfg.lambda_ssop > 0
        stats = EpochStats(epoch, lr, sums[0] / n, sums[1] / n if use_ssop else None,
                           sums[2] / n, sums[3] / n if use_ssop else None)
        self.history.append(stats)
        return stats

    def fit(self, callback=None) -> list[EpochStats]:
        while len(self.history) < self.cfg.epochs:
            stats = self.train_epoch()
            if callback is not None:
                callback(stats)
        return self.history


def train_epoch(trainer: Trainer) -> EpochStats:
    return trainer.train_epoch()


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalReport:
    accuracy: float
    confusion_matrix: np.ndarray
    order_accuracy: float | None = None
    loss_trace: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy,
                "confusion_matrix": self.confusion_matrix.tolist(),
                "order_accuracy": self.order_accuracy,
                "loss_trace": list(self.loss_trace)}


def _predict(model: EST, dataset: Dataset, seed: int, batch_size: int,
             pcfg: PipelineConfig):
    for start in range(0, len(dataset), batch_size):
        batch = eval_batch(dataset.videos[start:start + batch_size], seed, pcfg)
        yield batch, model(batch.frames, with_ssop=False)


def evaluate(model: EST, dataset: Dataset, seed: int = 0, batch_size: int = 32,
             pcfg: PipelineConfig = PipelineConfig()) -> EvalReport:
    """FER accuracy and confusion matrix on natural snippet order (rows: true class)."""
    c = dataset.num_classes
    confusion = np.zeros((c, c), dtype=int)
    for batch, out in _predict(model, dataset, seed, batch_size, pcfg):
        np.add.at(confusion, (batch.labels, out.probs.data.argmax(-1)), 1)
    total = confusion.sum()
    return EvalReport(float(np.trace(confusion) / total) if total else 0.0, confusion)


def order_accuracy(model: EST, dataset: Dataset, table: PermutationTable, seed: int = 0,
                   epoch: int = 0, batch_size: int = 32,
                   pcfg: PipelineConfig = PipelineConfig()) -> float:
    correct = 0
    for start in range(0, len(dataset), batch_size):
        batch = training_batch(dataset.videos[start:start + batch_size], table, seed, epoch, pcfg)
        out = model(batch.frames, with_ssop=True)
        correct += int((out.order_probs.data.argmax(-1) == batch.order_labels).sum())
    return correct / len(dataset)


@dataclass
class AttentionInspection:
    records: list[dict]
    histogram: np.ndarray

    @property
    def entropy(self) -> float:
        return argmax_entropy(self.histogram)


def inspect_attention(model: EST, dataset: Dataset, seed: int = 0, batch_size: int = 32,
                      pcfg: PipelineConfig = PipelineConfig()) -> AttentionInspection:
    """Final decoder-layer attention over snippets for every video, plus argmax histogram."""
    records = []
    hist = np.zeros(model.cfg.n, dtype=int)
    for batch, out in _predict(model, dataset, seed, batch_size, pcfg):
        for i, vid in enumerate(batch.video_ids):
            att = out.cross_attention[i]
            hist[int(att.argmax())] += 1
            records.append({"video_id": int(vid),
                            "snippet_attention": [float(a) for a in att],
                            "predicted_class": int(out.probs.data[i].argmax()),
                            "probabilities": [float(p) for p in out.probs.data[i]]})
    return AttentionInspection(records, hist)


def argmax_entropy(histogram) -> float:
    """Shannon entropy (nats) of a histogram of argmax indices."""
    h = np.asarray(histogram, dtype=float)
    p = h[h > 0] / h.sum()
    return float(-(p * np.log(p)).sum()) + 0.0  # + 0.0 turns -0.0 into 0.0


# ---------------------------------------------------------------------------
# gradient check of the full model


def random_inputs(model: EST, videos: int = 2, seed: int = 0):
    """Random snippet frames with random class and order labels, shaped for ``model``."""
    cfg = model.cfg
    rng = np.random.default_rng(seed)
    frames = rng.random((videos, cfg.n, cfg.J, cfg.height, cfg.width, cfg.channels))
    return (frames, rng.integers(cfg.num_classes, size=videos),
            rng.integers(cfg.num_shuffle_types, size=videos))


def model_gradcheck(model: EST, frames, labels, order_labels, lambda_ssop: float = 1.0,
                    h: float = 1e-4, tol: float = 1e-3):
    """Finite-difference check of d(total_loss)/d(every parameter)."""
    from .gradcheck import gradcheck

    def loss_fn():
        out = model(frames, with_ssop=lambda_ssop > 0)
        l_s = loss_ssop(out.order_probs, order_labels) if lambda_ssop > 0 else None
        return total_loss(loss_cls(out.probs, labels), l_s, lambda_ssop)

    return gradcheck(loss_fn, model.params, h, tol)
