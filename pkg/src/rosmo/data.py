"""Episodic offline datasets: container types, file format, and samplers.

File format "rosmo-ds-v1": a single JSON header line, then one binary block
per episode (uint32 T, T*obs_dim float32 observations, T uint8 actions,
T float32 rewards, all little-endian), then a trailing CRC32 of the episode
payload bytes.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envs import ENV_SPECS

DATASET_VERSION = "rosmo-ds-v1"


class DatasetFormatError(RuntimeError):
    pass


@dataclass
class Trajectory:
    """One recorded episode; rewards[t] is the reward after actions[t]."""

    observations: np.ndarray  # (T, obs_dim) float32
    actions: np.ndarray       # (T,) uint8
    rewards: np.ndarray       # (T,) float32

    def __post_init__(self):
        T = len(self.observations)
        if not (len(self.actions) == len(self.rewards) == T):
            raise ValueError(
                f"trajectory arrays disagree: {T} obs, {len(self.actions)} actions, "
                f"{len(self.rewards)} rewards")

    @property
    def length(self) -> int:
        return len(self.actions)

    @property
    def episode_return(self) -> float:
        return float(self.rewards.sum())


@dataclass
class Dataset:
    env_id: str
    epsilon: float
    seed: int
    trajectories: list[Trajectory] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def num_episodes(self) -> int:
        return len(self.trajectories)

    @property
    def num_transitions(self) -> int:
        return sum(t.length for t in self.trajectories)

    @property
    def average_return(self) -> float:
        return float(np.mean([t.episode_return for t in self.trajectories]))

    @property
    def obs_dim(self) -> int:
        return ENV_SPECS[self.env_id].observation_dim

    @property
    def action_count(self) -> int:
        return ENV_SPECS[self.env_id].action_count


def serialize_dataset(dataset: Dataset) -> bytes:
    header = {
        "version": DATASET_VERSION,
        "env_id": dataset.env_id,
        "obs_dim": dataset.obs_dim,
        "action_count": dataset.action_count,
        "epsilon": dataset.epsilon,
        "episodes": dataset.num_episodes,
        "transitions": dataset.num_transitions,
        "seed": dataset.seed,
    }
    payload = bytearray()
    for traj in dataset.trajectories:
        payload += struct.pack("<I", traj.length)
        payload += np.ascontiguousarray(traj.observations, dtype="<f4").tobytes()
        payload += np.ascontiguousarray(traj.actions, dtype=np.uint8).tobytes()
        payload += np.ascontiguousarray(traj.rewards, dtype="<f4").tobytes()
    return (json.dumps(header).encode("utf-8") + b"\n" + bytes(payload)
            + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def save_dataset(dataset: Dataset, path) -> None:
    Path(path).write_bytes(serialize_dataset(dataset))


def load_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    head, sep, body = raw.partition(b"\n")
    if not sep:
        raise DatasetFormatError(f"{path}: missing header line")
    try:
        header = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DatasetFormatError(f"{path}: unreadable header ({e})") from e
    version = header.get("version")
    if version != DATASET_VERSION:
        raise DatasetFormatError(
            f"{path}: version {version!r} not supported (expected {DATASET_VERSION!r})")
    if len(body) < 4:
        raise DatasetFormatError(f"{path}: truncated file (no checksum)")
    payload, crc_bytes = body[:-4], body[-4:]
    (expected_crc,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(payload) & 0xFFFFFFFF != expected_crc:
        raise DatasetFormatError(f"{path}: payload checksum mismatch")

    obs_dim = int(header["obs_dim"])
    trajectories = []
    off = 0
    for _ in range(int(header["episodes"])):
        if off + 4 > len(payload):
            raise DatasetFormatError(f"{path}: truncated episode header")
        (T,) = struct.unpack_from("<I", payload, off)
        off += 4
        need = T * obs_dim * 4 + T + T * 4
        if off + need > len(payload):
            raise DatasetFormatError(f"{path}: truncated episode payload")
        obs = np.frombuffer(payload, dtype="<f4", count=T * obs_dim, offset=off)
        off += T * obs_dim * 4
        actions = np.frombuffer(payload, dtype=np.uint8, count=T, offset=off)
        off += T
        rewards = np.frombuffer(payload, dtype="<f4", count=T, offset=off)
        off += T * 4
        trajectories.append(Trajectory(
            observations=obs.reshape(T, obs_dim).copy(),
            actions=actions.copy(),
            rewards=rewards.copy(),
        ))
    if off != len(payload):
        raise DatasetFormatError(f"{path}: {len(payload) - off} trailing payload bytes")
    return Dataset(
        env_id=header["env_id"],
        epsilon=float(header["epsilon"]),
        seed=int(header["seed"]),
        trajectories=trajectories,
        metadata={k: header[k] for k in header if k not in ("version",)},
    )


def dataset_fingerprint(dataset: Dataset) -> str:
    import hashlib
    return hashlib.sha256(serialize_dataset(dataset)).hexdigest()[:16]


def subsample(dataset: Dataset, fraction: float, seed: int = 0) -> Dataset:
    """Keep ceil(fraction * episodes) whole episodes, uniformly without
    replacement.  Selections are nested: a smaller fraction's episode set is
    a subset of a larger one's under the same seed, and fraction 1.0 returns
    the dataset unchanged.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    n = dataset.num_episodes
    keep = math.ceil(fraction * n)
    if keep == n:
        return dataset
    order = np.random.default_rng(seed).permutation(n)
    chosen = np.sort(order[:keep])
    return Dataset(
        env_id=dataset.env_id,
        epsilon=dataset.epsilon,
        seed=dataset.seed,
        trajectories=[dataset.trajectories[i] for i in chosen],
        metadata=dict(dataset.metadata, subsample_fraction=fraction, subsample_seed=seed),
    )


@dataclass
class Segment:
    """A contiguous slice feeding one unroll: K+n+1 observations, K+n
    actions and rewards, starting at time ``start`` within its episode."""

    start: int
    observations: np.ndarray  # (K+n+1, obs_dim)
    actions: np.ndarray       # (K+n,)
    rewards: np.ndarray       # (K+n,)


def eligible_indices(dataset: Dataset, K: int, n: int) -> np.ndarray:
    min_len = K + n + 1
    return np.array([i for i, t in enumerate(dataset.trajectories) if t.length >= min_len],
                    dtype=np.int64)


def sample_segment(dataset: Dataset, K: int, n: int, rng: np.random.Generator) -> Segment:
    """Uniform trajectory among eligible ones, then uniform start index."""
    if K < 1 or n < 1:
        raise ValueError(f"K and n must be >= 1, got K={K}, n={n}")
    eligible = eligible_indices(dataset, K, n)
    if len(eligible) == 0:
        raise ValueError(
            f"no trajectory long enough for K={K}, n={n} "
            f"(need length >= {K + n + 1})")
    traj = dataset.trajectories[int(eligible[rng.integers(0, len(eligible))])]
    t = int(rng.integers(0, traj.length - K - n))  # t in [0, T-K-n-1]
    span = K + n
    return Segment(
        start=t,
        observations=traj.observations[t:t + span + 1],
        actions=traj.actions[t:t + span],
        rewards=traj.rewards[t:t + span],
    )


def sample_segment_batch(dataset: Dataset, K: int, n: int, batch_size: int,
                         rng: np.random.Generator):
    """Stacked segments: (B, K+n+1, obs), (B, K+n) actions, (B, K+n) rewards."""
    segs = [sample_segment(dataset, K, n, rng) for _ in range(batch_size)]
    obs = np.stack([s.observations for s in segs]).astype(np.float32)
    actions = np.stack([s.actions for s in segs]).astype(np.int64)
    rewards = np.stack([s.rewards for s in segs]).astype(np.float32)
    return obs, actions, rewards
