"""Binary checkpoint format.

Layout::

    8 bytes   magic  b"NBCKPT\\x00\\x01"
    8 bytes   manifest length, little-endian uint64
    M bytes   manifest, UTF-8 JSON (format version, encoder config, vocabulary
              digest, tensor index with name/shape/offset/count, payload digest)
    P bytes   payload: every tensor as contiguous little-endian float64, in
              manifest order
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .encoder import EncoderConfig
from .tensor import Tensor

MAGIC = b"NBCKPT\x00\x01"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: EncoderConfig
    params: dict[str, Tensor]
    vocab_digest: str = ""
    extra: dict = field(default_factory=dict)


def save_checkpoint(path, config: EncoderConfig, params: dict[str, Tensor], vocab_digest: str = "",
                    extra: dict | None = None) -> None:
    index = []
    chunks = []
    offset = 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name].data if isinstance(params[name], Tensor) else params[name],
                                   dtype="<f8")
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr.tobytes())
        offset += arr.size * 8
    payload = b"".join(chunks)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": config.to_dict(),
        "vocab_digest": vocab_digest,
        "tensors": index,
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "extra": extra or {},
    }
    head = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    Path(path).write_bytes(MAGIC + struct.pack("<Q", len(head)) + head + payload)


def load_checkpoint(path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if len(blob) < 16:
        raise CheckpointError(f"{path}: file too short ({len(blob)} bytes) for a checkpoint header")
    if blob[:6] != MAGIC[:6]:
        raise CheckpointError(f"{path}: not a checkpoint file")
    m_len = struct.unpack("<Q", blob[8:16])[0]
    if len(blob) < 16 + m_len:
        raise CheckpointError(f"{path}: truncated manifest (need {m_len} bytes, have {len(blob) - 16})")
    try:
        manifest = json.loads(blob[16:16 + m_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable manifest") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION or blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: format version {version} unsupported (expected {FORMAT_VERSION})")
    payload = blob[16 + m_len:]
    if len(payload) != manifest["payload_bytes"]:
        raise CheckpointError(f"{path}: payload length {len(payload)} != expected {manifest['payload_bytes']}")
    if hashlib.sha256(payload).hexdigest() != manifest["payload_sha256"]:
        raise CheckpointError(f"{path}: payload digest mismatch (corrupted file)")
    params: dict[str, Tensor] = {}
    for entry in manifest["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        if count != entry["count"] or entry["offset"] + count * 8 > len(payload):
            raise CheckpointError(f"{path}: tensor {entry['name']} span inconsistent with payload")
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=entry["offset"]).reshape(entry["shape"])
        params[entry["name"]] = T.parameter(arr.astype(np.float64))
    return Checkpoint(EncoderConfig.from_dict(manifest["config"]), params, manifest["vocab_digest"],
                      manifest.get("extra", {}))


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
