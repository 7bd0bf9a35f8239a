"""QTNet: a 1-D ResNet-18 regressing z-scored QT and heart rate from one lead."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np

from .errors import ConfigError, InvalidArgumentError, ShapeError
from .nn import BatchNorm1d, Conv1d, GlobalAvgPool, Linear, MaxPool1d, Module, Tensor, concat
from .nn import tensor as T
from .signal import CANONICAL_LENGTH, IntervalLabels

BASE_WIDTHS = (64, 128, 256, 512)
BLOCKS_PER_STAGE = 2


@dataclass(frozen=True)
class QTNetConfig:
    input_length: int = CANONICAL_LENGTH
    stem_kernel: int = 7
    stem_stride: int = 2
    width_multiplier: float = 1.0
    n_stages: int = 4
    blocks_per_stage: int = BLOCKS_PER_STAGE

    @property
    def stage_widths(self) -> Tuple[int, ...]:
        return tuple(max(1, int(round(w * self.width_multiplier))) for w in BASE_WIDTHS)

    @property
    def stem_channels(self) -> int:
        return self.stage_widths[0]

    def validate(self) -> None:
        if self.n_stages != 4 or self.blocks_per_stage != 2:
            raise ConfigError("QTNet uses the ResNet-18 layout: 4 stages x 2 blocks")
        if self.input_length < 32:
            raise ConfigError(f"input_length {self.input_length} too short")
        if not self.width_multiplier > 0:
            raise ConfigError("width_multiplier must be positive")
        if self.stem_kernel < 1 or self.stem_stride < 1:
            raise ConfigError("stem kernel and stride must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "QTNetConfig":
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


class BasicBlock(Module):
    def __init__(self, in_ch, out_ch, stride, rng):
        self.conv1 = Conv1d(in_ch, out_ch, 3, stride, 1, rng=rng)
        self.bn1 = BatchNorm1d(out_ch)
        self.conv2 = Conv1d(out_ch, out_ch, 3, 1, 1, rng=rng)
        self.bn2 = BatchNorm1d(out_ch)
        if stride != 1 or in_ch != out_ch:
            self.down_conv = Conv1d(in_ch, out_ch, 1, stride, 0, rng=rng)
            self.down_bn = BatchNorm1d(out_ch)
        else:
            self.down_conv = self.down_bn = None

    def forward(self, x):
        out = T.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        shortcut = x if self.down_conv is None else self.down_bn(self.down_conv(x))
        return T.relu(T.residual_add(out, shortcut))


class QTNet(Module):
    """stem -> maxpool -> 4x2 basic blocks -> global average -> QT and HR heads."""

    def __init__(self, config: QTNetConfig, rng):
        config.validate()
        self.config = config
        widths = config.stage_widths
        self.stem = Conv1d(1, config.stem_channels, config.stem_kernel, config.stem_stride,
                           config.stem_kernel // 2, rng=rng)
        self.stem_bn = BatchNorm1d(config.stem_channels)
        self.pool = MaxPool1d(3, 2, 1)
        blocks = []
        in_ch = config.stem_channels
        for stage, width in enumerate(widths):
            for b in range(config.blocks_per_stage):
                stride = 2 if (stage > 0 and b == 0) else 1
                blocks.append(BasicBlock(in_ch, width, stride, rng))
                in_ch = width
        self.blocks = blocks
        self.gap = GlobalAvgPool()
        self.head_qt = Linear(in_ch, 1, rng=rng)
        self.head_hr = Linear(in_ch, 1, rng=rng)

    def features(self, x):
        x = T.relu(self.stem_bn(self.stem(x)))
        x = self.pool(x)
        for block in self.blocks:
            x = block(x)
        return self.gap(x)

    def forward(self, x):
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.ndim != 3 or x.shape[1] != 1 or x.shape[2] != self.config.input_length:
            raise ShapeError(f"QTNet expects (batch, 1, {self.config.input_length}), got {x.shape}")
        f = self.features(x)
        return concat([self.head_qt(f), self.head_hr(f)], axis=1)

    def predict_z(self, batch: np.ndarray, chunk: int = 64) -> np.ndarray:
        """Eval-mode forward over (N, L) or (N, 1, L) inputs, returning (N, 2)."""
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim == 2:
            batch = batch[:, None, :]
        was_training = self.training
        self.eval()
        try:
            outs = [self.forward(Tensor(batch[i:i + chunk])).data for i in range(0, len(batch), chunk)]
        finally:
            self.train(was_training)
        return np.concatenate(outs, axis=0) if outs else np.zeros((0, 2))

    def conv_parameter_count(self) -> int:
        return sum(p.data.size for k, p in self.named_parameters().items()
                   if p.data.ndim == 3)

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.named_parameters().values())


def build_qtnet(config: QTNetConfig = QTNetConfig(), rng=None) -> QTNet:
    rng = np.random.default_rng(0) if rng is None else rng
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    return QTNet(config, rng)


@dataclass(frozen=True)
class TargetStats:
    qt_mean: float
    qt_std: float
    hr_mean: float
    hr_std: float

    def __post_init__(self):
        if not self.qt_std > 0 or not self.hr_std > 0:
            raise InvalidArgumentError("target stds must be positive")

    @classmethod
    def from_labels(cls, labels) -> "TargetStats":
        qt = np.array([l.qt_ms for l in labels], dtype=np.float64)
        hr = np.array([l.hr_bpm for l in labels], dtype=np.float64)
        if qt.size == 0:
            raise InvalidArgumentError("cannot compute target statistics of an empty split")
        return cls(float(qt.mean()), float(qt.std()), float(hr.mean()), float(hr.std()))

    @property
    def means(self) -> np.ndarray:
        return np.array([self.qt_mean, self.hr_mean])

    @property
    def stds(self) -> np.ndarray:
        return np.array([self.qt_std, self.hr_std])

    def to_dict(self) -> dict:
        return asdict(self)


def zscore_targets(labels: IntervalLabels, stats: TargetStats) -> Tuple[float, float]:
    return ((labels.qt_ms - stats.qt_mean) / stats.qt_std,
            (labels.hr_bpm - stats.hr_mean) / stats.hr_std)


def unzscore(z_qt: float, z_hr: float, stats: TargetStats) -> Tuple[float, float]:
    return z_qt * stats.qt_std + stats.qt_mean, z_hr * stats.hr_std + stats.hr_mean
