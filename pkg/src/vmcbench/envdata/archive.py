"""On-disk demonstration archive.

Layout: a directory with a JSON manifest plus one binary blob per episode.
Each blob is the episode's frames as row-major uint8, followed by actions
then rewards as little-endian float32. Sizes are fully determined by the
manifest, so truncation and manifest tampering are detected byte-exactly.
"""

from __future__ import annotations

import json
import os

import numpy as np

from ..core.types import DemoDataset, EpisodeRecord
from ..errors import ArchiveFormatError, ArchiveSizeError, ArchiveTruncationError, ArchiveVersionError

FORMAT_NAME = "vmc-demo-archive"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"


def _blob_name(i: int) -> str:
    return f"ep_{i:05d}.bin"


def _blob_size(length: int, frame_shape: tuple[int, ...], action_dim: int) -> int:
    c, h, w = frame_shape
    return length * (c * h * w + 4 * action_dim + 4)


def save_demos(dataset: DemoDataset, path: str) -> None:
    """Write the dataset; the directory is created, existing files replaced."""
    os.makedirs(path, exist_ok=True)
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "task_id": dataset.task_id,
        "episode_count": dataset.num_episodes,
        "frame_shape": list(dataset.frame_shape),
        "action_dim": dataset.action_dim,
        "value_domain": "uint8",
        "episodes": [
            {"file": _blob_name(i), "length": ep.length, "success": bool(ep.success)}
            for i, ep in enumerate(dataset.episodes)
        ],
    }
    with open(os.path.join(path, MANIFEST_NAME), "w") as f:
        json.dump(manifest, f, indent=1)
    for i, ep in enumerate(dataset.episodes):
        with open(os.path.join(path, _blob_name(i)), "wb") as f:
            f.write(np.ascontiguousarray(ep.observations, dtype=np.uint8).tobytes())
            f.write(np.ascontiguousarray(ep.actions, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(ep.rewards, dtype="<f4").tobytes())


def load_demos(path: str) -> DemoDataset:
    """Read an archive back; every size is checked before parsing."""
    manifest_path = os.path.join(path, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise ArchiveFormatError(f"no {MANIFEST_NAME} under {path!r}")
    with open(manifest_path) as f:
        try:
            manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise ArchiveFormatError(f"manifest is not valid JSON: {e}") from e
    if manifest.get("format") != FORMAT_NAME:
        raise ArchiveFormatError(
            f"unexpected format tag {manifest.get('format')!r}"
        )
    version = manifest.get("version")
    if version != FORMAT_VERSION:
        raise ArchiveVersionError(
            f"archive version {version} unsupported (reader supports {FORMAT_VERSION})"
        )
    frame_shape = tuple(int(v) for v in manifest["frame_shape"])
    if len(frame_shape) != 3:
        raise ArchiveFormatError(f"frame_shape must have 3 entries, got {frame_shape}")
    action_dim = int(manifest["action_dim"])
    entries = manifest["episodes"]
    if len(entries) != int(manifest["episode_count"]):
        raise ArchiveSizeError(
            f"manifest lists {len(entries)} episodes but episode_count says "
            f"{manifest['episode_count']}"
        )
    c, h, w = frame_shape
    episodes = []
    for entry in entries:
        name = entry["file"]
        length = int(entry["length"])
        blob_path = os.path.join(path, name)
        if not os.path.exists(blob_path):
            raise ArchiveTruncationError(f"episode blob {name} is missing")
        expected = _blob_size(length, frame_shape, action_dim)
        actual = os.path.getsize(blob_path)
        if actual < expected:
            raise ArchiveTruncationError(
                f"episode blob {name} holds {actual} bytes, manifest requires {expected}"
            )
        if actual != expected:
            raise ArchiveSizeError(
                f"episode blob {name} holds {actual} bytes, manifest arithmetic "
                f"gives {expected}"
            )
        with open(blob_path, "rb") as f:
            raw = f.read()
        o_end = length * c * h * w
        a_end = o_end + length * action_dim * 4
        obs = np.frombuffer(raw, dtype=np.uint8, count=o_end).reshape(length, c, h, w)
        actions = np.frombuffer(raw[o_end:a_end], dtype="<f4").reshape(length, action_dim)
        rewards = np.frombuffer(raw[a_end:], dtype="<f4")
        episodes.append(EpisodeRecord(
            observations=obs.copy(),
            actions=actions.astype(np.float32),
            rewards=rewards.astype(np.float32),
            success=bool(entry["success"]),
        ))
    return DemoDataset(tuple(episodes), task_id=str(manifest["task_id"]))
