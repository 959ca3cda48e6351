"""Deterministic random-stream derivation.

Every stochastic stage of a run pulls its generator from `substream`, keyed by
the master seed plus a path of small integers (stage tag, replication index,
imputation copy, ...). Streams are independent across distinct paths and
reproduce bit-identically for a given (seed, path), no matter in which order
or on how many workers the stages execute.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

# stage tags used in stream paths
GENERATE = 1
MASK = 2
IMPUTE = 3
ADJUST = 4
ANALYZE = 5
DIAGNOSE = 6
REPLICATE = 7


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the PCG64 generator for `path` under master `seed`."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


def row_uniform(seed: int, path: tuple, fields: tuple) -> float:
    """Uniform in [0, 1) keyed by row content rather than row position.

    Imputation draws keyed this way depend only on the row's own values, so
    reordering rows reorders the draws with them. `path` is the stream path
    (stage tag, copy index); `fields` must be a tuple of ints and floats
    identifying the row, ending in an occurrence counter that disambiguates
    rows with identical content.
    """
    h = hashlib.sha256()
    h.update(struct.pack("<Q", int(seed) & 0xFFFFFFFFFFFFFFFF))
    for p in path:
        h.update(struct.pack("<q", int(p)))
    for f in fields:
        if isinstance(f, float):
            h.update(b"f" + struct.pack("<d", f))
        else:
            h.update(b"i" + struct.pack("<q", int(f)))
    word = int.from_bytes(h.digest()[:8], "little")
    return word / 2.0**64


def child_seed(seed: int, *path: int) -> int:
    """Derive an integer seed for a nested stage (e.g. one simulation rep)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(2, np.uint64)[0])
