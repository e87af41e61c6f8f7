"""Self-describing binary checkpoints.

Layout (all integers little-endian)::

    b"ECHONAV\\0" | u32 version | u64 header length | header JSON |
    float64 payload | sha256 of every preceding byte

The header carries the config snapshot, a parameter manifest
(name, shape, offset in floats) and free-form metadata.  The checksum is
verified before anything is parsed, so truncated or corrupted files never load
partially.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .config import RunConfig, from_dict
from .errors import ChecksumError, VersionError

MAGIC = b"ECHONAV\0"
FORMAT_VERSION = 1
_DIGEST = 32


def encode_checkpoint(state: dict, config: dict, meta: dict | None = None,
                      version: int = FORMAT_VERSION) -> bytes:
    manifest, chunks, offset = [], [], 0
    for name, arr in state.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.size
    header = json.dumps({"config": config, "manifest": manifest, "payload_floats": offset,
                         "meta": meta or {}}, sort_keys=True, separators=(",", ":")).encode()
    body = MAGIC + struct.pack("<IQ", version, len(header)) + header + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def decode_checkpoint(blob: bytes) -> tuple:
    """Return ``(state, config_dict, meta)``; raises on any integrity problem."""
    if len(blob) < len(MAGIC) + 12 + _DIGEST:
        raise ChecksumError("checkpoint is truncated")
    body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("checkpoint checksum mismatch (corrupt or truncated file)")
    if body[:len(MAGIC)] != MAGIC:
        raise ChecksumError("not an echonav checkpoint")
    version, hlen = struct.unpack_from("<IQ", body, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionError(f"checkpoint format version {version}, this build reads {FORMAT_VERSION}")
    start = len(MAGIC) + 12
    header = json.loads(body[start:start + hlen])
    payload = np.frombuffer(body[start + hlen:], dtype="<f8")
    if payload.size != header["payload_floats"]:
        raise ChecksumError("payload length disagrees with the manifest")
    state = {}
    for entry in header["manifest"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        state[entry["name"]] = payload[entry["offset"]:entry["offset"] + n].reshape(entry["shape"]).astype(np.float64)
    return state, header["config"], header["meta"]


def save_checkpoint(path, policy, config: RunConfig, meta: dict | None = None) -> Path:
    path = Path(path)
    blob = encode_checkpoint(policy.state_dict(), config.to_dict(snapshot=True), meta)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)
    return path


def read_checkpoint(path) -> tuple:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())


def manifest_names(path) -> list:
    state, _, _ = read_checkpoint(path)
    return list(state)


def load_policy(path):
    """Rebuild the policy and its ``RunConfig`` from a checkpoint file."""
    from .policy import AGVPPolicy

    state, cfg_dict, meta = read_checkpoint(path)
    cfg = from_dict(cfg_dict)
    policy = AGVPPolicy(cfg.fusion, cfg.obs, cfg.policy, seed=cfg.run.seed)
    policy.load_state_dict(state)
    return policy, cfg, meta
