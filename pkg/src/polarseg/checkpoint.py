"""Checkpoint container: one file holding weights, config, and partition tags.

Layout (little-endian):
  8 bytes magic ``ODCSEGC1``
  uint64  header length in bytes
  JSON header: format_version, flat run config + its sha256, normalization
      stats, epoch counter, partition (per-parameter tags, per-tag trainable
      flags, mode), and an array index [{name, dtype, shape, offset, nbytes}]
  raw array payloads, concatenated in index order

Array names are prefixed ``param/``, ``buffer/``, or ``opt/`` (optimizer
state, present only in resumable checkpoints).
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, flatten_config, unflatten_config
from .exceptions import CheckpointMismatchError
from .model import SegModel
from .optim import Adam
from .peft import ParameterPartition

_MAGIC = b"ODCSEGC1"
FORMAT_VERSION = 1


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(flatten_config(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class Checkpoint:
    run_config: RunConfig
    arrays: dict[str, np.ndarray]
    partition_tags: dict[str, str]
    trainable_flags: dict[str, bool]
    mode: str
    norm_mean: np.ndarray
    norm_std: np.ndarray
    epoch: int
    config_sha256: str

    def optimizer_state(self) -> dict | None:
        if "opt/t" not in self.arrays:
            return None
        state = {"t": self.arrays["opt/t"]}
        for name, arr in self.arrays.items():
            if name.startswith("opt/m/"):
                state[f"m/{name[6:]}"] = arr
            elif name.startswith("opt/v/"):
                state[f"v/{name[6:]}"] = arr
        return state


def save_checkpoint(path, model: SegModel, run_config: RunConfig,
                    partition: ParameterPartition, norm_mean, norm_std,
                    epoch: int = 0, optimizer: Adam | None = None):
    arrays: list[tuple[str, np.ndarray]] = []
    for name, p in model.named_parameters():
        arrays.append((f"param/{name}", p.data))
    for name, buf in model.named_buffers():
        arrays.append((f"buffer/{name}", buf))
    if optimizer is not None:
        for key, arr in optimizer.state_dict().items():
            arrays.append((f"opt/{key}", np.asarray(arr)))

    index = []
    offset = 0
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        index.append({"name": name, "dtype": str(arr.dtype),
                      "shape": list(arr.shape), "offset": offset,
                      "nbytes": int(arr.nbytes)})
        offset += arr.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "config": flatten_config(run_config),
        "config_sha256": config_hash(run_config),
        "partition": {"tags": partition.tags, "trainable": partition.trainable_flags(),
                      "mode": partition.mode},
        "norm_mean": np.asarray(norm_mean, dtype=np.float64).tolist(),
        "norm_std": np.asarray(norm_std, dtype=np.float64).tolist(),
        "epoch": int(epoch),
        "arrays": index,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise CheckpointMismatchError(f"{path}: not a checkpoint (bad magic)")
    (hlen,) = struct.unpack_from("<Q", data, 8)
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointMismatchError(
            f"{path}: unsupported format version {header.get('format_version')}")
    base = 16 + hlen
    arrays = {}
    for item in header["arrays"]:
        arr = np.frombuffer(data, dtype=np.dtype(item["dtype"]),
                            count=int(np.prod(item["shape"])) if item["shape"] else 1,
                            offset=base + item["offset"])
        arrays[item["name"]] = arr.reshape(item["shape"]).copy()
    cfg = unflatten_config(header["config"])
    embedded_hash = header["config_sha256"]
    actual = config_hash(cfg)
    if actual != embedded_hash:
        raise CheckpointMismatchError(
            f"{path}: config hash mismatch (embedded {embedded_hash[:12]}, "
            f"recomputed {actual[:12]})")
    return Checkpoint(
        run_config=cfg, arrays=arrays,
        partition_tags=header["partition"]["tags"],
        trainable_flags=header["partition"]["trainable"],
        mode=header["partition"]["mode"],
        norm_mean=np.asarray(header["norm_mean"], dtype=np.float32),
        norm_std=np.asarray(header["norm_std"], dtype=np.float32),
        epoch=int(header["epoch"]),
        config_sha256=embedded_hash,
    )


def build_model_config(cfg: RunConfig):
    return cfg.model


def restore_model(ckpt: Checkpoint) -> SegModel:
    """Rebuild the model from the embedded config and load its weights.

    The parameter census of the rebuilt model must match the stored arrays
    exactly; any difference is reported with both config hashes.
    """
    model = SegModel(build_model_config(ckpt.run_config), seed=ckpt.run_config.seed)
    stored = {n[6:]: a for n, a in ckpt.arrays.items() if n.startswith("param/")}
    current = dict(model.named_parameters())
    if set(stored) != set(current) or any(stored[n].shape != tuple(current[n].shape)
                                          for n in stored):
        raise CheckpointMismatchError(
            "checkpoint parameters do not match the model built from its config "
            f"(config sha256 {ckpt.config_sha256[:12]}, "
            f"rebuilt-model config sha256 {config_hash(ckpt.run_config)[:12]})")
    for name, p in current.items():
        p.data = stored[name].astype(p.data.dtype, copy=True)
    buffers = {n[7:]: a for n, a in ckpt.arrays.items() if n.startswith("buffer/")}
    for prefix, mod in model.named_modules():
        for key in list(getattr(mod, "_buffers", {})):
            full = prefix + key
            if full in buffers:
                mod._buffers[key] = buffers[full].copy()
    return model
