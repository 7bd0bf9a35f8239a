"""Training loop: patient-disjoint splits, ADAM with step decay, early stopping."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .checkpoint import ModelCheckpoint
from .errors import ConfigError, InvalidArgumentError, SplitContaminationError
from .infer import PREPROCESSING, prepare_batch
from .model import QTNet, TargetStats
from .nn import Adam, Tensor, lr_schedule, mse_loss
from .nn.layers import Module
from .signal import EcgRecord


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    max_epochs: int = 40
    patience: int = 5
    base_lr: float = 0.01
    lr_decay: float = 0.5
    lr_every: int = 3
    rng_seed: int = 0
    split_fractions: Tuple[float, float, float] = (0.70, 0.15, 0.15)
    corpus_id: str = ""

    def validate(self) -> None:
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")
        if len(self.split_fractions) != 3 or any(f < 0 for f in self.split_fractions):
            raise ConfigError("split_fractions needs three non-negative values")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions sum to {sum(self.split_fractions)}, not 1")

    def lr(self, epoch: int) -> float:
        return lr_schedule(epoch, self.base_lr, self.lr_decay, self.lr_every)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        if "split_fractions" in data:
            data["split_fractions"] = tuple(data["split_fractions"])
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg


# ----------------------------------------------------------------------------
# splits

def split_by_subject(records: Sequence[EcgRecord], fractions=(0.70, 0.15, 0.15),
                     seed: int = 0) -> Tuple[List[EcgRecord], List[EcgRecord], List[EcgRecord]]:
    """Shuffle subjects (not records) into train/dev/test."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError("split fractions must sum to 1")
    subjects = sorted({r.subject_id for r in records})
    order = np.random.default_rng(seed).permutation(len(subjects))
    n = len(subjects)
    n_train = int(round(fractions[0] * n))
    n_dev = int(round(fractions[1] * n))
    bucket = {}
    for rank, idx in enumerate(order):
        bucket[subjects[idx]] = 0 if rank < n_train else (1 if rank < n_train + n_dev else 2)
    out = ([], [], [])
    for r in records:
        out[bucket[r.subject_id]].append(r)
    return out


def check_disjoint(**splits: Sequence[EcgRecord]) -> None:
    names = list(splits)
    ids = {k: {r.subject_id for r in v} for k, v in splits.items()}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            shared = ids[a] & ids[b]
            if shared:
                example = sorted(shared)[:3]
                raise SplitContaminationError(
                    f"{len(shared)} subject(s) appear in both {a} and {b}, e.g. {example}")


# ----------------------------------------------------------------------------
# early stopping

class EarlyStopping:
    """Track the best dev loss and keep a copy of the parameters that produced it."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ConfigError("patience must be >= 1")
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = -1
        self.best_state: Optional[Dict[str, np.ndarray]] = None
        self.bad_epochs = 0

    def update(self, epoch: int, dev_loss: float, model: Module) -> bool:
        """Record an epoch; return True when training should stop."""
        if dev_loss < self.best_loss:
            self.best_loss = float(dev_loss)
            self.best_epoch = epoch
            self.best_state = {k: v.copy() for k, v in model.state_dict().items()}
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience

    def restore(self, model: Module) -> None:
        if self.best_state is not None:
            model.load_state_dict(self.best_state)


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    dev_mse: float
    lr: float


@dataclass
class TrainingHistory:
    epochs: List[EpochRecord] = field(default_factory=list)
    initial_dev_mse: float = float("nan")
    best_epoch: int = -1
    stopped_early: bool = False
    seconds: float = 0.0

    @property
    def dev_mse(self) -> List[float]:
        return [e.dev_mse for e in self.epochs]

    @property
    def train_mse(self) -> List[float]:
        return [e.train_mse for e in self.epochs]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "train_mse", "dev_mse", "lr"])
        for e in self.epochs:
            writer.writerow([e.epoch, repr(e.train_mse), repr(e.dev_mse), repr(e.lr)])
        return buf.getvalue()


def run_epochs(model: Module, max_epochs: int, patience: int,
               train_epoch: Callable[[int, float], float],
               dev_loss: Callable[[], float],
               lr_fn: Callable[[int], float] = lr_schedule,
               history: Optional[TrainingHistory] = None) -> TrainingHistory:
    """Generic epoch driver with early stopping and best-epoch restoration.

    ``train_epoch(epoch, lr)`` runs one pass and returns the mean training
    loss; ``dev_loss()`` scores the current parameters.
    """
    history = TrainingHistory() if history is None else history
    stopper = EarlyStopping(patience)
    for epoch in range(max_epochs):
        lr = lr_fn(epoch)
        tr = float(train_epoch(epoch, lr))
        dv = float(dev_loss())
        history.epochs.append(EpochRecord(epoch, tr, dv, lr))
        if stopper.update(epoch, dv, model):
            history.stopped_early = True
            break
    stopper.restore(model)
    history.best_epoch = stopper.best_epoch
    return history


# ----------------------------------------------------------------------------
# fitting QTNet

def _targets(records: Sequence[EcgRecord]) -> np.ndarray:
    for r in records:
        if r.labels is None:
            raise InvalidArgumentError(f"record {r.record_id!r} has no labels")
    return np.array([[r.labels.qt_ms, r.labels.hr_bpm] for r in records], dtype=np.float64)


def _bazett(y: np.ndarray) -> np.ndarray:
    return y[:, 0] * np.sqrt(np.clip(y[:, 1], 1e-6, None) / 60.0)


def _eval_mse(model: QTNet, x: np.ndarray, z: np.ndarray, batch_size: int) -> float:
    pred = model.predict_z(x, chunk=batch_size)
    return float(np.mean((pred - z) ** 2))


def fit(train_set: Sequence[EcgRecord], dev_set: Sequence[EcgRecord], model: QTNet,
        train_config: TrainConfig = TrainConfig(),
        log: Optional[Callable[[str], None]] = None) -> Tuple[ModelCheckpoint, TrainingHistory]:
    """Train ``model`` in place and return its checkpoint plus the epoch history.

    The loss is the mean of the QT and HR squared errors on z-scored targets,
    with statistics taken from ``train_set``. Parameters from the epoch with
    the lowest dev loss are restored before the training MAE is measured.
    """
    train_config.validate()
    if not train_set or not dev_set:
        raise InvalidArgumentError("train and dev splits must be non-empty")
    check_disjoint(train=train_set, dev=dev_set)
    t0 = time.perf_counter()

    y_train = _targets(train_set)
    y_dev = _targets(dev_set)
    stats = TargetStats(float(y_train[:, 0].mean()), float(y_train[:, 0].std()),
                        float(y_train[:, 1].mean()), float(y_train[:, 1].std()))
    n_in = model.config.input_length
    x_train = prepare_batch([r.signal for r in train_set], n_in)
    x_dev = prepare_batch([r.signal for r in dev_set], n_in)
    z_train = (y_train - stats.means) / stats.stds
    z_dev = (y_dev - stats.means) / stats.stds

    optimizer = Adam(model.named_parameters())
    rng = np.random.default_rng(train_config.rng_seed)
    bs = train_config.batch_size

    def train_epoch(epoch: int, lr: float) -> float:
        model.train()
        order = rng.permutation(len(x_train))
        total, count = 0.0, 0
        for lo in range(0, len(order), bs):
            idx = order[lo:lo + bs]
            if len(idx) < 2:
                # batch statistics need at least two samples
                continue
            optimizer.zero_grad()
            loss = mse_loss(model(Tensor(x_train[idx])), z_train[idx])
            loss.backward()
            optimizer.step(lr)
            total += float(loss.data) * len(idx)
            count += len(idx)
        return total / max(count, 1)

    def dev_loss() -> float:
        val = _eval_mse(model, x_dev, z_dev, bs)
        if log is not None:
            e = len(history.epochs)
            log(f"epoch {e}: dev_mse={val:.4f} ({time.perf_counter() - t0:.0f}s)")
        return val

    history = TrainingHistory()
    history.initial_dev_mse = _eval_mse(model, x_dev, z_dev, bs)
    run_epochs(model, train_config.max_epochs, train_config.patience, train_epoch, dev_loss,
               train_config.lr, history)
    model.eval()

    pred = model.predict_z(x_train, chunk=bs) * stats.stds + stats.means
    err = np.abs(pred - y_train).mean(axis=0)
    # the alarm adjusts QTc, so keep the QTc error alongside the per-task ones
    qtc_err = np.abs(_bazett(pred) - _bazett(y_train)).mean()
    history.seconds = time.perf_counter() - t0
    provenance = {
        "corpus_id": train_config.corpus_id,
        "seed": train_config.rng_seed,
        "epochs_run": len(history.epochs),
        "best_epoch": history.best_epoch,
        "n_train": len(train_set),
        "n_dev": len(dev_set),
        "train_config": {k: (list(v) if isinstance(v, tuple) else v)
                         for k, v in asdict(train_config).items()},
    }
    ckpt = ModelCheckpoint.from_model(
        model, stats, {"qt_ms": float(err[0]), "hr_bpm": float(err[1]), "qtc_ms": float(qtc_err)},
        provenance, PREPROCESSING)
    return ckpt, history
