"""
Counter-based random streams.

Every draw is a pure function of (master seed, replica, label, channel, step,
draw index), hashed with the SplitMix64 finalizer. Coupled runs and restarted
runs therefore see identical noise for identical particles, independently of
population order or of how many particles exist.
"""

from enum import IntEnum
from typing import Iterable

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
UNIT = 2.0 ** -53


class Channel(IntEnum):
    """Independent noise channels per particle and step."""
    MOTION = 1
    EVENT = 2
    OFFSPRING = 3
    INIT = 4
    BOOTSTRAP = 5
    RESTART = 6


def splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + GOLDEN
        z = (z ^ (z >> np.uint64(30))) * MIX1
        z = (z ^ (z >> np.uint64(27))) * MIX2
    return z ^ (z >> np.uint64(31))


def _u64(value) -> np.ndarray:
    return np.asarray(value).astype(np.uint64)


def seed_key(seed: int) -> np.uint64:
    """Root key of a master seed."""
    return splitmix64(np.array([int(seed) & MASK64], dtype=np.uint64))[0]


ROOT_LABEL_HASH = splitmix64(np.array([0], dtype=np.uint64))[0]


def child_hash(parent_hash: np.ndarray, child_index: np.ndarray) -> np.ndarray:
    """Hash of label k.i from the hash of k."""
    return splitmix64(np.asarray(parent_hash, dtype=np.uint64) ^ _u64(child_index))


def label_hash(path: Iterable[int]) -> np.uint64:
    """Hash of a label path; the root has ROOT_LABEL_HASH."""
    h = np.array([ROOT_LABEL_HASH], dtype=np.uint64)
    for i in path:
        h = child_hash(h, np.array([i], dtype=np.int64))
    return h[0]


def stream_keys(
    seed: int,
    replica: np.ndarray,
    label_hashes: np.ndarray,
    channel: Channel,
    step: int
) -> np.ndarray:
    """Per-particle stream keys for one channel at one absolute step."""
    k = splitmix64(seed_key(seed) ^ _u64(replica))
    k = splitmix64(k ^ np.asarray(label_hashes, dtype=np.uint64))
    tag = (int(channel) << 56) ^ (int(step) & ((1 << 56) - 1))
    return splitmix64(k ^ np.uint64(tag))


def uniforms(keys: np.ndarray, count: int) -> np.ndarray:
    """(N, count) uniforms on [0, 1) from per-particle keys."""
    keys = np.asarray(keys, dtype=np.uint64).reshape(-1, 1)
    counters = splitmix64(np.arange(1, count + 1, dtype=np.uint64)).reshape(1, -1)
    bits = splitmix64(keys ^ counters)
    return (bits >> np.uint64(11)).astype(np.float64) * UNIT


def normals(keys: np.ndarray, count: int) -> np.ndarray:
    """(N, count) standard normals by Box-Muller on counter uniforms."""
    pairs = (count + 1) // 2
    u = uniforms(keys, 2 * pairs)
    radius = np.sqrt(-2.0 * np.log1p(-u[:, :pairs]))
    angle = 2.0 * np.pi * u[:, pairs:]
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
    return z[:, :count]


def derived_seed(seed: int, *parts: int) -> int:
    """Deterministic 64-bit seed for a sub-task (restart, bootstrap, sampler)."""
    k = seed_key(seed)
    for part in parts:
        k = splitmix64(np.array([k ^ np.uint64(int(part) & MASK64)], dtype=np.uint64))[0]
    return int(k)


def philox_generator(seed: int, *parts: int) -> np.random.Generator:
    """numpy Philox generator keyed by a derived seed, for bulk draws outside the particle streams."""
    return np.random.Generator(np.random.Philox(key=derived_seed(seed, *parts)))


def pair_keys(replica: np.ndarray, label_hashes: np.ndarray) -> np.ndarray:
    """Single uint64 identity of (replica, label) used to match particles across snapshots."""
    return splitmix64(_u64(replica) ^ splitmix64(np.asarray(label_hashes, dtype=np.uint64)))
