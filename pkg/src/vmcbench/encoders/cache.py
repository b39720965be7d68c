"""Frozen-representation feature cache.

Caching is exact, not approximate: cached rows are the very arrays a direct
forward pass produces, so downstream training is bitwise identical with or
without the cache. Only frozen backends may be cached; anything trainable
would invalidate rows as soon as a gradient step lands.

Note on exactness: BLAS matmul results for a given row are only guaranteed
bitwise stable when the batch decomposition is unchanged, so the cache
records the frame batch size it was built with and comparisons should reuse
it.

Set VMC_CACHE_DIR to persist caches across processes, keyed by the backend
fingerprint and a content digest of the demo set.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from ..core.types import DemoDataset
from ..errors import InvalidModeError
from ..imageops import bilinear_resize, to_unit_float
from .backend import RepresentationBackend

DEFAULT_FRAME_BATCH = 256


def dataset_digest(dataset: DemoDataset) -> str:
    h = hashlib.blake2b(digest_size=16)
    h.update(dataset.task_id.encode())
    for ep in dataset.episodes:
        h.update(ep.observations.tobytes())
    return h.hexdigest()


@dataclass
class FeatureCache:
    """Per-frame features for a demo set under one frozen backend."""

    backend_fingerprint: str
    data_digest: str
    frame_batch: int
    episode_lengths: tuple[int, ...]
    features: np.ndarray  # [total_frames, d]

    def __post_init__(self) -> None:
        self._offsets = np.concatenate([[0], np.cumsum(self.episode_lengths)])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def row(self, episode: int, t: int) -> int:
        return int(self._offsets[episode]) + t

    def rows(self, episodes: np.ndarray, ts: np.ndarray) -> np.ndarray:
        return self._offsets[episodes] + ts

    def matches(self, backend: RepresentationBackend, dataset: DemoDataset) -> bool:
        return (self.backend_fingerprint == backend.fingerprint()
                and self.data_digest == dataset_digest(dataset))


def _forward_frames(backend: RepresentationBackend, frames_u8: np.ndarray,
                    frame_batch: int) -> np.ndarray:
    out = np.empty((frames_u8.shape[0], backend.output_dim), dtype=np.float32)
    for lo in range(0, frames_u8.shape[0], frame_batch):
        chunk = to_unit_float(frames_u8[lo: lo + frame_batch])
        if backend.source == "external" and backend.input_hw is not None:
            chunk = bilinear_resize(chunk, backend.input_hw)
        out[lo: lo + chunk.shape[0]] = backend.forward(chunk, train=False)
    return out


def _cache_path(cache_dir: str, fingerprint: str, digest: str, frame_batch: int) -> str:
    key = hashlib.sha256(f"{fingerprint}/{digest}/{frame_batch}".encode()).hexdigest()[:32]
    return os.path.join(cache_dir, f"features_{key}.npz")


def build_feature_cache(
    backend: RepresentationBackend,
    dataset: DemoDataset,
    frame_batch: int = DEFAULT_FRAME_BATCH,
) -> FeatureCache:
    """Encode every demo frame once under a frozen backend.

    Raises InvalidModeError for non-frozen backends. When VMC_CACHE_DIR is
    set, a persisted cache with a matching key is loaded instead of
    recomputing, and fresh caches are written there.
    """
    if backend.mode != "frozen":
        raise InvalidModeError(
            f"feature caching requires a frozen backend, got mode {backend.mode!r}"
        )
    fp = backend.fingerprint()
    digest = dataset_digest(dataset)
    lengths = tuple(ep.length for ep in dataset.episodes)
    cache_dir = os.environ.get("VMC_CACHE_DIR")
    if cache_dir:
        path = _cache_path(cache_dir, fp, digest, frame_batch)
        if os.path.exists(path):
            with np.load(path) as z:
                return FeatureCache(fp, digest, frame_batch, lengths, z["features"])
    all_frames = np.concatenate([ep.observations for ep in dataset.episodes], axis=0)
    feats = _forward_frames(backend, all_frames, frame_batch)
    cache = FeatureCache(fp, digest, frame_batch, lengths, feats)
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        np.savez(_cache_path(cache_dir, fp, digest, frame_batch), features=feats)
    return cache
