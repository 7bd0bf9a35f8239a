"""Versioned binary container for trained QTNet weights.

Layout (little-endian)::

    magic    8 bytes  b"QTNETCKP"
    version  u16
    sha256   32 bytes over everything that follows
    hlen     u32      length of the JSON header
    header   hlen bytes of canonical JSON (config, stats, MAE, tensor index)
    blobs    float64 arrays in index order
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .errors import CorruptCheckpointError, IncompatibleCheckpointError, InvalidArgumentError
from .model import QTNet, QTNetConfig, TargetStats, build_qtnet

MAGIC = b"QTNETCKP"
FORMAT_VERSION = 1


@dataclass
class ModelCheckpoint:
    config: QTNetConfig
    parameters: Dict[str, np.ndarray]
    target_stats: TargetStats
    training_mae: Dict[str, float]
    provenance: dict = field(default_factory=dict)
    preprocessing: dict = field(default_factory=dict)
    _model: Optional[QTNet] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for key in ("qt_ms", "hr_bpm"):
            if key not in self.training_mae:
                raise InvalidArgumentError(f"training_mae needs {key!r}")
            if self.training_mae[key] < 0:
                raise InvalidArgumentError(f"training_mae[{key!r}] must be non-negative")

    def model(self) -> QTNet:
        """Eval-mode network carrying these weights (built once, then reused)."""
        if self._model is None:
            net = build_qtnet(self.config, np.random.default_rng(0))
            net.load_state_dict(self.parameters)
            net.eval()
            self._model = net
        return self._model

    @classmethod
    def from_model(cls, model: QTNet, stats: TargetStats, training_mae, provenance=None,
                   preprocessing=None) -> "ModelCheckpoint":
        params = {k: np.array(v, dtype=np.float64, copy=True) for k, v in model.state_dict().items()}
        return cls(model.config, params, stats, dict(training_mae), dict(provenance or {}),
                   dict(preprocessing or {}))


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def checkpoint_bytes(ckpt: ModelCheckpoint, version: int = FORMAT_VERSION) -> bytes:
    index = []
    blobs = []
    offset = 0
    for name in sorted(ckpt.parameters):
        arr = np.ascontiguousarray(ckpt.parameters[name], dtype="<f8")
        raw = arr.tobytes()
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = _canonical_json({
        "config": ckpt.config.to_dict(),
        "target_stats": ckpt.target_stats.to_dict(),
        "training_mae": ckpt.training_mae,
        "provenance": ckpt.provenance,
        "preprocessing": ckpt.preprocessing,
        "tensors": index,
    })
    body = struct.pack("<I", len(header)) + header + b"".join(blobs)
    digest = hashlib.sha256(body).digest()
    return MAGIC + struct.pack("<H", version) + digest + body


def save_checkpoint(ckpt: ModelCheckpoint, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(ckpt))


def parse_checkpoint(data: bytes) -> ModelCheckpoint:
    head = 8 + 2 + 32
    if len(data) < head + 4:
        raise CorruptCheckpointError(f"checkpoint truncated ({len(data)} bytes)")
    if data[:8] != MAGIC:
        raise CorruptCheckpointError("not a QTNet checkpoint (bad magic)")
    (version,) = struct.unpack("<H", data[8:10])
    if version != FORMAT_VERSION:
        raise IncompatibleCheckpointError(
            f"checkpoint format version {version}, this build reads version {FORMAT_VERSION}")
    digest = data[10:head]
    body = data[head:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCheckpointError("checksum mismatch")
    (hlen,) = struct.unpack("<I", body[:4])
    try:
        header = json.loads(body[4:4 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"unreadable header: {exc}") from None
    blob = body[4 + hlen:]
    params = {}
    for entry in header["tensors"]:
        lo, n = entry["offset"], entry["nbytes"]
        if lo + n > len(blob):
            raise CorruptCheckpointError(f"tensor {entry['name']} runs past end of file")
        arr = np.frombuffer(blob[lo:lo + n], dtype="<f8").astype(np.float64)
        params[entry["name"]] = arr.reshape(entry["shape"])
    return ModelCheckpoint(
        config=QTNetConfig.from_dict(header["config"]),
        parameters=params,
        target_stats=TargetStats(**header["target_stats"]),
        training_mae=header["training_mae"],
        provenance=header.get("provenance", {}),
        preprocessing=header.get("preprocessing", {}),
    )


def load_checkpoint(path) -> ModelCheckpoint:
    return parse_checkpoint(Path(path).read_bytes())
