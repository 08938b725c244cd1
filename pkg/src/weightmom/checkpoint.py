"""Binary checkpoints: weights, bit-packed masks, magnitude history, optimizer.

Layout: magic "WMCK" | version u32 LE | header length u32 LE | JSON header |
raw little-endian float64 payloads | crc32 of the payload bytes (u32 LE).
Everything is stored at full precision so a resumed run replays bit-exactly.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

MAGIC = b"WMCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class CheckpointState:
    epoch: int
    meta: dict
    arrays: dict          # name -> ndarray (masks already unpacked to uint8)
    optimizer: dict       # scalar optimizer state
    history: dict         # scalar history state


def _entries_for(model, masks, history, optimizer):
    hstate = history.state()
    entries = []
    for _, idx, layer in model.prunable():
        entries.append((f"layer{idx}.weight", layer.weight.data, "tensor"))
        entries.append((f"layer{idx}.bias", layer.bias.data, "tensor"))
        entries.append((f"layer{idx}.mask", masks[idx], "mask"))
        entries.append((f"layer{idx}.history", hstate["buffers"][idx], "tensor"))
        for slot, name in ((0, "w"), (1, "b")):
            entries.append((f"layer{idx}.adam_m_{name}", optimizer.m[idx][slot],
                            "tensor"))
            entries.append((f"layer{idx}.adam_v_{name}", optimizer.v[idx][slot],
                            "tensor"))
    return entries


def write_checkpoint(path, model, masks, history, optimizer, epoch, meta=None):
    entries = _entries_for(model, masks, history, optimizer)
    manifest = []
    payload = bytearray()
    for name, arr, kind in entries:
        if kind == "mask":
            raw = np.packbits(arr.astype(np.uint8)).tobytes()
            dtype = "packed_bits"
        else:
            raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
            dtype = "<f8"
        manifest.append({"name": name, "kind": kind, "dtype": dtype,
                         "shape": list(arr.shape), "offset": len(payload),
                         "nbytes": len(raw)})
        payload.extend(raw)

    hstate = history.state()
    header = {
        "epoch": epoch,
        "meta": meta or {},
        "optimizer": {
            "step_count": optimizer.step_count,
            "base_lr": optimizer.base_lr,
            "decay": optimizer.decay,
            "decay_interval": optimizer.decay_interval,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "epsilon": optimizer.epsilon,
        },
        "history": {
            "window": hstate["window"],
            "mode": hstate["mode"],
            "ema_coeff": hstate["ema_coeff"],
            "epochs_recorded": hstate["epochs_recorded"],
            "head": hstate["head"],
        },
        "manifest": manifest,
    }
    header_bytes = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(header_bytes)))
        f.write(header_bytes)
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(bytes(payload))))


def read_checkpoint(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise CheckpointError(
            f"{path}: format version {version} unsupported (expected {VERSION})")
    header_end = 12 + header_len
    header = json.loads(raw[12:header_end])
    payload = raw[header_end:-4]
    (stored_crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(payload) != stored_crc:
        raise CheckpointError(f"{path}: payload checksum mismatch")

    arrays = {}
    for entry in header["manifest"]:
        chunk = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        shape = tuple(entry["shape"])
        if entry["kind"] == "mask":
            bits = np.unpackbits(np.frombuffer(chunk, dtype=np.uint8))
            arrays[entry["name"]] = bits[:int(np.prod(shape))].reshape(shape)
        else:
            arrays[entry["name"]] = np.frombuffer(
                chunk, dtype="<f8").astype(np.float64).reshape(shape)
    return CheckpointState(
        epoch=header["epoch"], meta=header["meta"], arrays=arrays,
        optimizer=header["optimizer"], history=header["history"])


def restore_training_state(state, model, masks, history, optimizer):
    """Load a CheckpointState into live training objects, in place."""
    buffers = {}
    for _, idx, layer in model.prunable():
        try:
            weight = state.arrays[f"layer{idx}.weight"]
            bias = state.arrays[f"layer{idx}.bias"]
            mask = state.arrays[f"layer{idx}.mask"]
            buffers[idx] = state.arrays[f"layer{idx}.history"]
        except KeyError as e:
            raise CheckpointError(f"checkpoint missing entry for layer {idx}: {e}")
        if weight.shape != layer.weight.shape:
            raise CheckpointError(
                f"layer {idx} shape mismatch: checkpoint {weight.shape}, "
                f"model {layer.weight.shape}")
        layer.weight.data[...] = weight
        layer.bias.data[...] = bias
        masks.bits[idx] = mask.astype(np.uint8).copy()
        for slot, name in ((0, "w"), (1, "b")):
            optimizer.m[idx][slot][...] = state.arrays[f"layer{idx}.adam_m_{name}"]
            optimizer.v[idx][slot][...] = state.arrays[f"layer{idx}.adam_v_{name}"]
    optimizer.step_count = state.optimizer["step_count"]
    history.load_state({**state.history, "buffers": buffers})
