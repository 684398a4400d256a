"""Checkpoint files: a JSON manifest followed by a raw little-endian float32 blob.

Layout::

    b"TMCKPT"  u16 version  u64 manifest_length  manifest (UTF-8 JSON)  blob

The manifest echoes the run configuration and lists every tensor with its
name, shape, dtype, byte offset and length inside the blob.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import CheckpointError
from .model import MattingNet, ModelConfig

MAGIC = b"TMCKPT"
VERSION = 1
_HEADER = struct.Struct("<HQ")


def encode_checkpoint(state: dict[str, np.ndarray], config: dict) -> bytes:
    records, chunks, offset = [], [], 0
    for name, value in state.items():
        raw = np.ascontiguousarray(value, dtype="<f4").tobytes()
        records.append({"name": name, "shape": list(value.shape), "dtype": "<f4",
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {"format": "trimatte-checkpoint", "version": VERSION, "config": config,
                "tensors": records, "blob_bytes": offset}
    text = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + _HEADER.pack(VERSION, len(text)) + text + b"".join(chunks)


def decode_checkpoint(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if not data.startswith(MAGIC):
        raise CheckpointError("not a checkpoint (bad magic)")
    start = len(MAGIC)
    if len(data) < start + _HEADER.size:
        raise CheckpointError("checkpoint header truncated")
    version, length = _HEADER.unpack_from(data, start)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    body = start + _HEADER.size
    if len(data) < body + length:
        raise CheckpointError("checkpoint manifest truncated")
    try:
        manifest = json.loads(data[body:body + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint manifest: {exc}") from exc
    blob = data[body + length:]
    if len(blob) != manifest.get("blob_bytes"):
        raise CheckpointError(f"checkpoint blob has {len(blob)} bytes, manifest says {manifest.get('blob_bytes')}")
    state = {}
    for rec in manifest["tensors"]:
        shape = tuple(rec["shape"])
        need = int(np.prod(shape, dtype=np.int64)) * 4
        if rec["nbytes"] != need or rec["offset"] + need > len(blob):
            raise CheckpointError(f"tensor '{rec['name']}' record is inconsistent with the blob")
        arr = np.frombuffer(blob, dtype="<f4", count=need // 4, offset=rec["offset"])
        state[rec["name"]] = arr.reshape(shape).astype(np.float32)
    return manifest, state


def save_checkpoint(path: str | os.PathLike, model: MattingNet, run_config: dict | None = None) -> bytes:
    config = {"model": model.config.to_dict()}
    if run_config is not None:
        config["run"] = run_config
    data = encode_checkpoint(model.state_dict(), config)
    with open(path, "wb") as f:
        f.write(data)
    return data


def check_state(model: MattingNet, state: dict[str, np.ndarray]) -> None:
    """Raise naming the first model tensor that is missing or mis-shaped in ``state``."""
    for name, p in model.named_parameters():
        if name not in state:
            raise CheckpointError(f"tensor '{name}' missing from checkpoint")
        if state[name].shape != p.shape:
            raise CheckpointError(f"tensor '{name}' has shape {state[name].shape}, model expects {p.shape}")
    extra = set(state) - {n for n, _ in model.named_parameters()}
    if extra:
        raise CheckpointError(f"checkpoint has unexpected tensor '{sorted(extra)[0]}'")


def load_checkpoint(path: str | os.PathLike, model: MattingNet | None = None) -> tuple[MattingNet, dict]:
    """Load into ``model`` (validated against its shapes) or into a fresh model built from the manifest."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise CheckpointError(f"{path}: {exc.strerror}") from exc
    manifest, state = decode_checkpoint(data)
    if model is None:
        try:
            model = MattingNet(ModelConfig.from_dict(manifest["config"]["model"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"checkpoint config cannot build a model: {exc}") from exc
    check_state(model, state)
    model.load_state_dict(state)
    return model, manifest
