# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""
Binary checkpoint format.

Layout (all integers little-endian):

    magic            8 bytes  b"ERRNETCK"
    version          u32
    header length    u32
    header           UTF-8 JSON, sorted keys (stage, step, epoch, rng state, store list, meta)
    entry count      u32
    entries          name length u16, name UTF-8 "<store>/<param>", kind u8, ndim u8,
                     ndim x u32 dims, float32 payload

Entry kinds are parameters, Adam first and second moments, and non-trainable buffers.
Nothing time-dependent is stored, so saving the same state twice yields identical bytes.
"""

import json
import os
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any

import numpy as np

from errornet.autodiff.params import AdamState, ParamStore
from errornet.networks.base import NetworkSpec
from errornet.utils.errors import ConfigError, DataError

MAGIC = b"ERRNETCK"
FORMAT_VERSION = 1


class CheckpointFormatError(DataError):
    """A checkpoint file is corrupt, truncated or written by another format version."""


class EntryKind(IntEnum):
    PARAM = 0
    MOMENT_M = 1
    MOMENT_V = 2
    BUFFER = 3


@dataclass
class StoreState:
    """Snapshot of one ParamStore."""

    params: dict[str, np.ndarray] = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    moments: dict[str, AdamState] = field(default_factory=dict)
    adam_step: int = 0

    @classmethod
    def capture(cls, store: ParamStore) -> "StoreState":
        return cls(
            params={name: np.array(t.data, dtype=np.float32) for name, t in store},
            buffers={name: np.array(b, dtype=np.float32) for name, b in store.buffers.items()},
            moments={
                name: AdamState(np.array(s.m, dtype=np.float32), np.array(s.v, dtype=np.float32))
                for name, s in store.moments.items()
            },
            adam_step=store.step,
        )

    def restore(self, store: ParamStore, with_moments: bool = True) -> None:
        store.load_arrays(self.params, self.buffers)
        if with_moments:
            store.moments = {
                name: AdamState(state.m.copy(), state.v.copy())
                for name, state in self.moments.items()
            }
            store.step = self.adam_step


@dataclass
class Checkpoint:
    stage: str
    stores: dict[str, StoreState]
    step: int = 0
    epoch: int = 0
    rng_state: dict[str, Any] | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_stores(
        cls,
        stage: str,
        stores: dict[str, ParamStore],
        step: int = 0,
        epoch: int = 0,
        rng_state: dict[str, Any] | None = None,
        meta: dict[str, Any] | None = None,
    ) -> "Checkpoint":
        return cls(
            stage=stage,
            stores={name: StoreState.capture(store) for name, store in stores.items()},
            step=step,
            epoch=epoch,
            rng_state=rng_state,
            meta=dict(meta or {}),
        )

    def restore_into(self, stores: dict[str, ParamStore], with_moments: bool = True) -> None:
        missing = sorted(set(stores) - set(self.stores))
        if missing:
            raise CheckpointFormatError(
                f"Checkpoint of stage {self.stage} has no weights for: {', '.join(missing)}"
            )
        for name, store in stores.items():
            self.stores[name].restore(store, with_moments=with_moments)

    def header(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "step": self.step,
            "epoch": self.epoch,
            "rng_state": self.rng_state,
            "stores": {name: state.adam_step for name, state in self.stores.items()},
            "meta": self.meta,
        }


def _entries(checkpoint: Checkpoint) -> list[tuple[str, EntryKind, np.ndarray]]:
    entries = []
    for store_name, state in sorted(checkpoint.stores.items()):
        for name, array in state.params.items():
            entries.append((f"{store_name}/{name}", EntryKind.PARAM, array))
        for name, moment in state.moments.items():
            entries.append((f"{store_name}/{name}", EntryKind.MOMENT_M, moment.m))
            entries.append((f"{store_name}/{name}", EntryKind.MOMENT_V, moment.v))
        for name, array in state.buffers.items():
            entries.append((f"{store_name}/{name}", EntryKind.BUFFER, array))
    return entries


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    header = json.dumps(checkpoint.header(), sort_keys=True, separators=(",", ":")).encode()
    entries = _entries(checkpoint)
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(header)), header]
    chunks.append(struct.pack("<I", len(entries)))
    for name, kind, array in entries:
        encoded = name.encode()
        chunks.append(struct.pack("<HBB", len(encoded), kind, array.ndim))
        chunks.append(encoded)
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return b"".join(chunks)


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> Path:
    """Write atomically: the file either has the old content or the complete new one."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_checkpoint(checkpoint))
    os.replace(tmp, path)
    return path


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data = data
        self.source = source
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointFormatError(
                f"{self.source}: truncated at byte {self.offset} while reading {what} "
                f"({size} bytes needed, {len(self.data) - self.offset} left)"
            )
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> Checkpoint:
    reader = _Reader(data, source)
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointFormatError(f"{source}: bad magic at byte 0, not an errornet checkpoint")
    version, header_len = reader.unpack("<II", "version")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"{source}: format version {version} at byte 8, expected {FORMAT_VERSION}"
        )
    header_offset = reader.offset
    try:
        header = json.loads(reader.take(header_len, "header").decode())
        stage, step, epoch = header["stage"], int(header["step"]), int(header["epoch"])
        store_steps: dict[str, int] = header["stores"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise CheckpointFormatError(f"{source}: corrupt header at byte {header_offset}") from e

    stores = {name: StoreState(adam_step=int(steps)) for name, steps in store_steps.items()}
    (count,) = reader.unpack("<I", "entry count")
    pending: dict[tuple[str, str], np.ndarray] = {}
    for _ in range(count):
        entry_offset = reader.offset
        name_len, kind, ndim = reader.unpack("<HBB", "entry header")
        full_name = reader.take(name_len, "entry name").decode(errors="replace")
        shape = reader.unpack(f"<{ndim}I", "entry shape")
        size = int(np.prod(shape)) if ndim else 1
        array = np.frombuffer(reader.take(4 * size, f"entry {full_name}"), dtype="<f4")
        array = array.astype(np.float32).reshape(shape)

        store_name, _, param_name = full_name.partition("/")
        if store_name not in stores or not param_name or kind not in EntryKind._value2member_map_:
            raise CheckpointFormatError(
                f"{source}: invalid entry {full_name} at byte {entry_offset}"
            )
        state = stores[store_name]
        match EntryKind(kind):
            case EntryKind.PARAM:
                state.params[param_name] = array
            case EntryKind.BUFFER:
                state.buffers[param_name] = array
            case EntryKind.MOMENT_M:
                pending[(store_name, param_name)] = array
            case EntryKind.MOMENT_V:
                m = pending.pop((store_name, param_name), None)
                if m is None:
                    raise CheckpointFormatError(
                        f"{source}: second moment without first for {full_name} "
                        f"at byte {entry_offset}"
                    )
                state.moments[param_name] = AdamState(m, array)
    if reader.offset != len(data):
        raise CheckpointFormatError(f"{source}: trailing bytes after offset {reader.offset}")
    if pending:
        raise CheckpointFormatError(f"{source}: unmatched moment entries {sorted(pending)}")

    return Checkpoint(
        stage=stage,
        stores=stores,
        step=step,
        epoch=epoch,
        rng_state=header.get("rng_state"),
        meta=header.get("meta", {}),
    )


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DataError(f"Cannot read checkpoint {path}: {e.strerror}") from e
    return decode_checkpoint(data, str(path))


# checkpoint file name -> stage tag it must carry
STAGE_OF_CHECKPOINT = {
    "seg": "seg",
    "vae": "vae",
    "err": "err",
    "err_novae": "err",
    "joint": "joint",
}


def checkpoint_file(directory: str | Path, name: str, last: bool = False) -> Path:
    return Path(directory) / (f"{name}.last.ckpt" if last else f"{name}.ckpt")


def load_stage_checkpoint(directory: str | Path, name: str, last: bool = False) -> Checkpoint:
    """Load `<name>.ckpt` from a run directory, checking that it holds the expected stage."""
    path = checkpoint_file(directory, name, last)
    stage = STAGE_OF_CHECKPOINT.get(name, name)
    if not path.is_file():
        raise ConfigError(f"Missing {name} checkpoint at {path}; run stage {stage} first")
    checkpoint = load_checkpoint(path)
    if checkpoint.stage != stage:
        raise CheckpointFormatError(
            f"{path}: stage tag {checkpoint.stage} does not match expected stage {stage}"
        )
    return checkpoint


def spec_meta(spec: NetworkSpec, err_depth: int) -> dict[str, Any]:
    return {
        "spec": {
            "resolution": spec.resolution,
            "base_width": spec.base_width,
            "width_scale": spec.width_scale,
            "num_classes": spec.num_classes,
        },
        "err_depth": err_depth,
    }


def spec_from_meta(meta: dict[str, Any]) -> tuple[NetworkSpec, int]:
    try:
        return NetworkSpec(**meta["spec"]), int(meta.get("err_depth", 3))
    except (KeyError, TypeError) as e:
        raise CheckpointFormatError("Checkpoint metadata has no usable network spec") from e
