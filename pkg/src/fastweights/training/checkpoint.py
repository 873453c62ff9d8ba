"""Self-describing binary checkpoints.

Layout: magic b"FWL1", u32 format version, u32 model-identifier length and
its UTF-8 bytes, then named blocks until end of file. Each block is
u32 name length, name bytes, u32 rank, u32 dims, then raw little-endian
float64 values. Blocks are written sorted by name so save -> load -> save
is byte-identical.

The model identifier is a JSON string describing the network, so a loaded
checkpoint can rebuild the model it came from. The RNG state and step
counter ride along as reserved "meta." blocks (128-bit PCG64 words are
split into sixteen 16-bit chunks, which doubles hold exactly).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np


class CheckpointError(ValueError):
    pass


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


class CheckpointModelError(CheckpointError):
    pass


MAGIC = b"FWL1"
VERSION = 1


@dataclass
class Checkpoint:
    model_id: str
    blocks: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def step(self) -> int:
        return int(self.blocks.get("meta.step", np.zeros((1, 1)))[0, 0])


def rng_state_blocks(rng: np.random.Generator) -> dict[str, np.ndarray]:
    st = rng.bit_generator.state["state"]
    chunks = []
    for word in (st["state"], st["inc"]):
        chunks.extend((word >> (16 * i)) & 0xFFFF for i in range(8))
    return {"meta.rng_pcg64": np.array([[float(c) for c in chunks]])}


def restore_rng(blocks: dict[str, np.ndarray]) -> np.random.Generator:
    chunks = [int(c) for c in blocks["meta.rng_pcg64"].reshape(-1)]
    words = []
    for half in (chunks[:8], chunks[8:]):
        words.append(sum(c << (16 * i) for i, c in enumerate(half)))
    gen = np.random.Generator(np.random.PCG64(0))
    state = gen.bit_generator.state
    state["state"] = {"state": words[0], "inc": words[1]}
    gen.bit_generator.state = state
    return gen


def checkpoint_save(path: str, ckpt: Checkpoint) -> None:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    mid = ckpt.model_id.encode("utf-8")
    parts.append(struct.pack("<I", len(mid)))
    parts.append(mid)
    for name in sorted(ckpt.blocks):
        arr = np.ascontiguousarray(np.atleast_2d(np.asarray(ckpt.blocks[name], dtype=np.float64)))
        nb = name.encode("utf-8")
        parts.append(struct.pack("<I", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f8").tobytes())
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(b"".join(parts))
    os.replace(tmp, path)


def _take(buf: bytes, offset: int, n: int, what: str) -> tuple[bytes, int]:
    if offset + n > len(buf):
        raise CheckpointCorruptError(f"truncated checkpoint while reading {what}")
    return buf[offset : offset + n], offset + n


def checkpoint_load(path: str, expect_model: str | None = None) -> Checkpoint:
    with open(path, "rb") as f:
        buf = f.read()
    raw, off = _take(buf, 0, 4, "magic")
    if raw != MAGIC:
        raise CheckpointMagicError(f"{path}: not a checkpoint file (magic {raw!r})")
    raw, off = _take(buf, off, 4, "version")
    version = struct.unpack("<I", raw)[0]
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {VERSION}")
    raw, off = _take(buf, off, 4, "model id length")
    raw, off = _take(buf, off, struct.unpack("<I", raw)[0], "model id")
    model_id = raw.decode("utf-8")
    if expect_model is not None and model_id != expect_model:
        raise CheckpointModelError(
            f"{path}: checkpoint is for model {model_id!r}, expected {expect_model!r}"
        )
    blocks: dict[str, np.ndarray] = {}
    while off < len(buf):
        raw, off = _take(buf, off, 4, "block name length")
        raw, off = _take(buf, off, struct.unpack("<I", raw)[0], "block name")
        name = raw.decode("utf-8")
        raw, off = _take(buf, off, 4, f"rank of {name}")
        rank = struct.unpack("<I", raw)[0]
        raw, off = _take(buf, off, 4 * rank, f"dims of {name}")
        dims = struct.unpack(f"<{rank}I", raw)
        count = int(np.prod(dims)) if rank else 1
        raw, off = _take(buf, off, 8 * count, f"values of {name}")
        blocks[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).astype(np.float64)
    return Checkpoint(model_id=model_id, blocks=blocks)


def split_blocks(ckpt: Checkpoint) -> tuple[dict, dict, dict]:
    """Partition loaded blocks into (params, optimizer state, meta)."""
    params, opt, meta = {}, {}, {}
    for k, v in ckpt.blocks.items():
        if k.startswith("opt."):
            opt[k] = v
        elif k.startswith("meta."):
            meta[k] = v
        else:
            params[k] = v
    return params, opt, meta
