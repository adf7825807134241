"""Training loop, dataset splits, and evaluation metrics.

Splits are deterministic functions of the seed: a shuffled 3:1 split or a
leave-one-session-out partition.  Training folds epochs into images, runs
seeded-shuffle mini-batches through Adam, and records per-epoch mean loss.
Evaluation produces accuracy, macro F1 and the confusion matrix.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace

import numpy as np

from .model import CnnCsaModel
from .optim import Adam
from .preproc import EpochDataset
from .seeding import derive_rng
from .tensor import Tensor, no_grad, softmax_cross_entropy

N_CLASSES = 4


def _parse_split(split: str) -> tuple:
    if split == "random":
        return ("random", None)
    if split.startswith("session:"):
        try:
            return ("session", int(split.split(":", 1)[1]))
        except ValueError:
            raise ValueError(f"bad split spec {split!r}; use random or session:N") from None
    raise ValueError(f"bad split spec {split!r}; use random or session:N")


@dataclass(frozen=True)
class TrainConfig:
    train_batch: int = 64
    eval_batch: int = 32
    lr: float = 0.001
    weight_decay: float = 0.005
    epochs: int = 200
    seed: int = 0
    split: str = "random"

    def __post_init__(self):
        if self.train_batch < 1 or self.eval_batch < 1:
            raise ValueError("batch sizes must be at least 1")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        _parse_split(self.split)

    def to_dict(self) -> dict:
        return {
            "train_batch": self.train_batch,
            "eval_batch": self.eval_batch,
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "epochs": self.epochs,
            "seed": self.seed,
            "split": self.split,
        }


def split(dataset: EpochDataset, config: TrainConfig) -> tuple:
    """Partition into (train, test) by the config's split rule."""
    mode, arg = _parse_split(config.split)
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    if mode == "random":
        perm = derive_rng(config.seed, "split").permutation(n)
        cut = (n * 3) // 4
        return dataset.subset(perm[:cut]), dataset.subset(perm[cut:])
    sessions = dataset.sessions()
    test_idx = np.flatnonzero(sessions == arg)
    train_idx = np.flatnonzero(sessions != arg)
    if test_idx.size == 0:
        raise ValueError(f"no epochs recorded in session {arg}")
    if train_idx.size == 0:
        raise ValueError(f"all epochs are in session {arg}; nothing left to train on")
    return dataset.subset(train_idx), dataset.subset(test_idx)


def train(model: CnnCsaModel, train_set: EpochDataset, config: TrainConfig,
          progress=None) -> list:
    """Optimize in place; returns the per-epoch mean loss curve."""
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    images = train_set.images(model.dtype)
    labels = train_set.labels()
    if images.shape[1] != model.input_height:
        raise ValueError(
            f"dataset folds to {images.shape[1]}-row images but the model expects "
            f"{model.input_height}"
        )
    opt = Adam(
        [p for _, p in model.parameters()],
        lr=config.lr,
        weight_decay=config.weight_decay,
    )
    rng = derive_rng(config.seed, "shuffle")
    n = len(train_set)
    curve = []
    for ep in range(config.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.train_batch):
            idx = perm[start:start + config.train_batch]
            loss = softmax_cross_entropy(model.logits(Tensor(images[idx])), labels[idx])
            value = float(loss.data)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"training diverged: loss {value} at epoch {ep + 1}, batch "
                    f"{start // config.train_batch + 1}; try a lower learning rate "
                    "or a different init seed"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += value * len(idx)
        curve.append(total / n)
        if progress is not None:
            progress(ep + 1, curve[-1])
    return curve


def predict(model: CnnCsaModel, dataset: EpochDataset, batch_size: int = 32) -> np.ndarray:
    """Class predictions, computed off-tape in evaluation batches."""
    images = dataset.images(model.dtype)
    preds = np.empty(len(dataset), dtype=np.int64)
    with no_grad():
        for start in range(0, len(dataset), batch_size):
            logits = model.logits(Tensor(images[start:start + batch_size]))
            preds[start:start + len(logits.data)] = np.argmax(logits.data, axis=-1)
    return preds


@dataclass
class EvalReport:
    accuracy: float  # percent
    f1: float  # percent, macro over classes
    confusion: np.ndarray  # [true, predicted] counts
    params: int
    flops: int
    q: int
    seed: int
    runtime_seconds: float = 0.0

    def canonical_dict(self) -> dict:
        """Everything except wall time, which varies run to run."""
        return {
            "accuracy": float(self.accuracy),
            "f1": float(self.f1),
            "confusion": [[int(v) for v in row] for row in self.confusion],
            "params": int(self.params),
            "flops": int(self.flops),
            "q": int(self.q),
            "seed": int(self.seed),
        }

    def to_json(self) -> str:
        return json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))


def macro_f1(confusion: np.ndarray) -> float:
    """Unweighted mean of per-class F1, as a percentage.

    A class with zero precision+recall contributes an F1 of 0.
    """
    conf = np.asarray(confusion, dtype=np.float64)
    scores = []
    for c in range(conf.shape[0]):
        tp = conf[c, c]
        denom = conf[c].sum() + conf[:, c].sum()  # 2tp + fn + fp
        scores.append(0.0 if denom == 0 else 2.0 * tp / denom)
    return 100.0 * float(np.mean(scores))


def evaluate(model: CnnCsaModel, test_set: EpochDataset,
             eval_batch: int = 32, seed: int | None = None) -> EvalReport:
    if len(test_set) == 0:
        raise ValueError("test set is empty")
    t0 = time.perf_counter()
    preds = predict(model, test_set, eval_batch)
    labels = test_set.labels()
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    accuracy = 100.0 * float(np.trace(confusion)) / len(test_set)
    return EvalReport(
        accuracy=accuracy,
        f1=macro_f1(confusion),
        confusion=confusion,
        params=model.count_params(),
        flops=model.count_flops(),
        q=test_set.n_channels,
        seed=model.seed if seed is None else seed,
        runtime_seconds=time.perf_counter() - t0,
    )


def save_report(path, report: EvalReport) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(report.to_json())
        fh.write("\n")


def load_report(path) -> EvalReport:
    with open(path, "r", encoding="ascii") as fh:
        d = json.loads(fh.read())
    return EvalReport(
        accuracy=d["accuracy"],
        f1=d["f1"],
        confusion=np.asarray(d["confusion"], dtype=np.int64),
        params=d["params"],
        flops=d["flops"],
        q=d["q"],
        seed=d["seed"],
    )


def save_loss_curve(path, curve) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("epoch,mean_loss\n")
        for i, v in enumerate(curve, start=1):
            fh.write(f"{i},{float(v)!r}\n")


def load_loss_curve(path) -> list:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().strip().splitlines()[1:]
    return [float(line.split(",")[1]) for line in lines]
