"""Binary checkpoint format.

Layout (little-endian)::

    b"BBCKPT1"  u32 version
    u32 n  config JSON (n bytes, UTF-8)
    32-byte vocabulary SHA-256
    u32 m  manifest JSON (m bytes): tensor names, shapes, blob digest
    float32 blob, tensors concatenated in manifest order
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig
from .network import AcousticModel

MAGIC = b"BBCKPT1"
VERSION = 1


class CorruptCheckpoint(ValueError):
    pass


class ConfigMismatch(ValueError):
    pass


@dataclass
class Checkpoint:
    model: AcousticModel
    step: int
    vocab_digest: bytes
    optimizer_state: dict  # param name -> {"step", "exp_avg", "exp_avg_sq"}
    extra: dict


def _tensors(model: AcousticModel, optimizer) -> list[tuple[str, torch.Tensor]]:
    out = [(f"param/{n}", p.detach()) for n, p in model.named_parameters()]
    out += [(f"buffer/{n}", b) for n, b in model.named_buffers()]
    if optimizer is not None:
        by_id = {id(p): n for n, p in model.named_parameters()}
        for group in optimizer.param_groups:
            for p in group["params"]:
                state = optimizer.state.get(p)
                if not state:
                    continue
                name = by_id[id(p)]
                for key in ("step", "exp_avg", "exp_avg_sq"):
                    out.append((f"opt/{name}/{key}", torch.as_tensor(state[key])))
    return out


def save_checkpoint(path: str | Path, model: AcousticModel, optimizer=None, step: int = 0,
                    vocab_digest: bytes = b"\0" * 32, extra: dict | None = None) -> None:
    if len(vocab_digest) != 32:
        raise ValueError("vocab digest must be 32 bytes")
    config = json.dumps({"model": json.loads(model.config.to_json()), "step": step, "extra": extra or {}},
                        sort_keys=True).encode("utf-8")
    tensors = _tensors(model, optimizer)
    blob = b"".join(t.detach().cpu().numpy().astype("<f4").tobytes() for _, t in tensors)
    manifest = json.dumps({
        "tensors": [[name, list(t.shape)] for name, t in tensors],
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(config)), config, vocab_digest,
             struct.pack("<I", len(manifest)), manifest, blob]
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptCheckpoint("file is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def read_header(path: str | Path) -> tuple[dict, bytes, dict, bytes]:
    r = _Reader(Path(path).read_bytes())
    if r.take(len(MAGIC)) != MAGIC:
        raise CorruptCheckpoint("bad magic")
    version = r.u32()
    if version != VERSION:
        raise CorruptCheckpoint(f"unsupported version {version}")
    try:
        config = json.loads(r.take(r.u32()).decode("utf-8"))
        digest = r.take(32)
        manifest = json.loads(r.take(r.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"unreadable header: {exc}") from None
    blob = r.data[r.pos:]
    return config, digest, manifest, blob


def load_checkpoint(path: str | Path, vocab_digest: bytes | None = None,
                    expected_config: ModelConfig | None = None) -> Checkpoint:
    config, digest, manifest, blob = read_header(path)
    if vocab_digest is not None and digest != vocab_digest:
        raise ConfigMismatch("checkpoint was trained with a different vocabulary")
    try:
        model_config = ModelConfig(**config["model"])
    except (TypeError, ValueError, KeyError) as exc:
        raise CorruptCheckpoint(f"bad model config: {exc}") from None
    if expected_config is not None and expected_config != model_config:
        raise ConfigMismatch("model configuration differs from the checkpoint")
    sizes = [int(np.prod(shape)) for _, shape in manifest["tensors"]]
    if len(blob) != 4 * sum(sizes):
        raise CorruptCheckpoint(f"blob has {len(blob)} bytes, manifest needs {4 * sum(sizes)}")
    if hashlib.sha256(blob).hexdigest() != manifest.get("blob_sha256"):
        raise CorruptCheckpoint("parameter blob digest mismatch")
    flat = np.frombuffer(blob, dtype="<f4")
    values, offset = {}, 0
    for (name, shape), size in zip(manifest["tensors"], sizes):
        values[name] = torch.from_numpy(flat[offset:offset + size].reshape(shape).copy())
        offset += size

    model = AcousticModel(model_config)
    state = {}
    for name in model.state_dict():
        key = f"param/{name}" if f"param/{name}" in values else f"buffer/{name}"
        if key not in values:
            raise CorruptCheckpoint(f"missing tensor {name}")
        state[name] = values[key]
    model.load_state_dict(state)
    opt = {}
    for name, tensor in values.items():
        if name.startswith("opt/"):
            pname, key = name[4:].rsplit("/", 1)
            opt.setdefault(pname, {})[key] = tensor
    return Checkpoint(model, int(config["step"]), digest, opt, config.get("extra", {}))


def restore_optimizer(optimizer: torch.optim.Optimizer, model: AcousticModel, state: dict) -> None:
    """Load per-parameter Adam moments saved by :func:`save_checkpoint`."""
    params = dict(model.named_parameters())
    for name, entry in state.items():
        p = params[name]
        optimizer.state[p] = {
            "step": entry["step"].reshape(()).clone(),
            "exp_avg": entry["exp_avg"].clone(),
            "exp_avg_sq": entry["exp_avg_sq"].clone(),
        }
