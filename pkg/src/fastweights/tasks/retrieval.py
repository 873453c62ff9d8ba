"""Key-value associative retrieval sequences.

A sample interleaves K distinct letter keys with digit values, then appends
the separator "??" and one of the keys as the query; the target is that
key's digit. Example: "c9k8j3f1??c" -> 9. Keys are drawn without
replacement, values with replacement.
"""

from __future__ import annotations

import json
import os
import string

import numpy as np

from ..autodiff import ContractError

_CHARS = string.ascii_lowercase + string.digits + "?"
TOKEN_TO_ID = {c: i for i, c in enumerate(_CHARS)}
ID_TO_TOKEN = {i: c for c, i in TOKEN_TO_ID.items()}
VOCAB_SIZE = len(_CHARS)  # 37
NUM_CLASSES = 10


class EncodeError(ValueError):
    pass


def encode_sequence(s: str) -> list[int]:
    ids = []
    for pos, ch in enumerate(s):
        if ch not in TOKEN_TO_ID:
            raise EncodeError(f"unknown character {ch!r} at position {pos}")
        ids.append(TOKEN_TO_ID[ch])
    return ids


def decode_sequence(ids) -> str:
    return "".join(ID_TO_TOKEN[int(i)] for i in ids)


def sequence_length(pairs: int) -> int:
    return 2 * pairs + 3  # K keys + K digits + "??" + query


def sample_string(rng: np.random.Generator, pairs: int) -> tuple[str, int]:
    """One (sequence, target digit) pair; keys distinct, values may repeat."""
    if not 1 <= pairs <= 26:
        raise ContractError(f"pairs must be in [1, 26], got {pairs}")
    keys = rng.choice(26, size=pairs, replace=False)
    values = rng.integers(0, 10, size=pairs)
    query = int(rng.integers(0, pairs))
    body = "".join(
        string.ascii_lowercase[k] + str(v) for k, v in zip(keys, values)
    )
    return body + "??" + string.ascii_lowercase[keys[query]], int(values[query])


def gen_retrieval(
    pairs: int,
    n_train: int,
    n_valid: int,
    n_test: int,
    seed: int,
    out_dir: str,
) -> dict:
    """Write train/valid/test files plus a manifest; deterministic in seed.

    Each line is "<sequence>\\t<digit>\\n". The three splits use independent
    child streams spawned from the seed, so changing one count does not
    perturb the other splits.
    """
    if not 1 <= pairs <= 26:
        raise ContractError(f"pairs must be in [1, 26], got {pairs}")
    os.makedirs(out_dir, exist_ok=True)
    children = np.random.SeedSequence(seed).spawn(3)
    counts = {"train": n_train, "valid": n_valid, "test": n_test}
    paths = {}
    for (split, n), child in zip(counts.items(), children):
        rng = np.random.Generator(np.random.PCG64(child))
        path = os.path.join(out_dir, f"{split}.txt")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for _ in range(n):
                s, target = sample_string(rng, pairs)
                f.write(f"{s}\t{target}\n")
        paths[split] = path
    manifest = {
        "task": "retrieval",
        "pairs": pairs,
        "seed": seed,
        "counts": counts,
        "files": {k: os.path.basename(v) for k, v in paths.items()},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    return manifest


def load_dataset(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Read a split file into (tokens [n, 2K+3] int64, targets [n] int64)."""
    tokens, targets = [], []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                seq, digit = line.split("\t")
            except ValueError:
                raise EncodeError(f"{path}:{lineno}: malformed line") from None
            tokens.append(encode_sequence(seq))
            targets.append(int(digit))
    toks = np.asarray(tokens, dtype=np.int64)
    return toks, np.asarray(targets, dtype=np.int64)


def sample_batch(rng: np.random.Generator, pairs: int, batch: int):
    """Directly sample an encoded batch without touching the filesystem."""
    tokens, targets = [], []
    for _ in range(batch):
        s, t = sample_string(rng, pairs)
        tokens.append(encode_sequence(s))
        targets.append(t)
    return np.asarray(tokens, dtype=np.int64), np.asarray(targets, dtype=np.int64)
