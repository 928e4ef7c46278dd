"""Single-file checkpoint container.

Layout::

    GENOME-NCA-CHECKPOINT 1\\n
    <one line of JSON metadata>\\n
    <payload: little-endian float32 arrays W1, b1, W2, back to back>

The metadata records both configs, the epoch, the discriminator and target
digests, each array's name/shape/offset, and a SHA-256 over the metadata
(minus the checksum field itself) followed by the payload.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import ConfigError, NcaConfig, TrainConfig, nca_config_from_dict
from .nca import UpdateNetwork

MAGIC = b"GENOME-NCA-CHECKPOINT"
VERSION = 1
ARRAY_ORDER = ("W1", "b1", "W2")


class CheckpointError(RuntimeError):
    pass


class ConfigConflictError(ConfigError):
    pass


@dataclass
class CheckpointBundle:
    nca_config: NcaConfig
    weights: dict[str, torch.Tensor]
    train_config: TrainConfig | None = None
    epoch: int = 0
    vgg_sha256: str | None = None
    target_sha256: list[str] = field(default_factory=list)

    @classmethod
    def from_network(cls, net: UpdateNetwork, nca_config: NcaConfig, **kwargs) -> CheckpointBundle:
        weights = {k: v.clone().float() for k, v in net.weight_arrays().items()}
        return cls(nca_config=nca_config, weights=weights, **kwargs)

    def build_network(self) -> UpdateNetwork:
        net = UpdateNetwork.from_config(self.nca_config)
        net.load_weight_arrays(self.weights)
        return net


def _digest(meta: dict, payload: bytes) -> str:
    h = hashlib.sha256(json.dumps(meta, sort_keys=True).encode())
    h.update(payload)
    return h.hexdigest()


def save_checkpoint(bundle: CheckpointBundle, path: str | Path) -> Path:
    path = Path(path)
    arrays, chunks, offset = [], [], 0
    for name in ARRAY_ORDER:
        data = bundle.weights[name].detach().cpu().numpy().astype("<f4").tobytes()
        arrays.append({"name": name, "shape": list(bundle.weights[name].shape), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    payload = b"".join(chunks)
    meta = {
        "version": VERSION,
        "nca": bundle.nca_config.to_dict(),
        "train": bundle.train_config.to_dict() if bundle.train_config else None,
        "epoch": bundle.epoch,
        "vgg_sha256": bundle.vgg_sha256,
        "target_sha256": list(bundle.target_sha256),
        "arrays": arrays,
    }
    meta["checksum"] = _digest(meta, payload)
    header = MAGIC + b" " + str(VERSION).encode() + b"\n" + json.dumps(meta, sort_keys=True).encode() + b"\n"

    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def load_checkpoint(
    path: str | Path,
    expected_config: NcaConfig | None = None,
    vgg_sha256: str | None = None,
) -> CheckpointBundle:
    """Read a checkpoint, verifying its checksum.

    ``expected_config`` raises ConfigConflictError on any mismatch;
    ``vgg_sha256`` only warns, since features from another weights file still work.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    first, _, rest = raw.partition(b"\n")
    parts = first.split(b" ")
    if len(parts) != 2 or parts[0] != MAGIC:
        raise CheckpointError(f"{path} is not a genome-nca checkpoint")
    if parts[1] != str(VERSION).encode():
        raise CheckpointError(f"{path} has format version {parts[1].decode(errors='replace')}, expected {VERSION}")
    header, _, payload = rest.partition(b"\n")
    try:
        meta = json.loads(header)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt metadata ({exc})") from exc
    checksum = meta.pop("checksum", None)
    if checksum != _digest(meta, payload):
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt or was modified")

    weights = {}
    for entry in meta["arrays"]:
        chunk = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(chunk, dtype="<f4").reshape(entry["shape"])
        weights[entry["name"]] = torch.from_numpy(arr.astype(np.float32))
    nca_config = nca_config_from_dict(meta["nca"])
    if expected_config is not None and expected_config != nca_config:
        diffs = [
            f"{k}: checkpoint={v!r} requested={getattr(expected_config, k)!r}"
            for k, v in nca_config.to_dict().items()
            if getattr(expected_config, k) != v
        ]
        raise ConfigConflictError(f"config conflicts with checkpoint {path}: " + "; ".join(diffs))
    if vgg_sha256 and meta.get("vgg_sha256") and vgg_sha256 != meta["vgg_sha256"]:
        warnings.warn(
            f"discriminator weights differ from the ones {path} was trained with",
            stacklevel=2,
        )
    return CheckpointBundle(
        nca_config=nca_config,
        weights=weights,
        train_config=TrainConfig.from_dict(meta["train"]) if meta.get("train") else None,
        epoch=meta["epoch"],
        vgg_sha256=meta.get("vgg_sha256"),
        target_sha256=meta.get("target_sha256", []),
    )
