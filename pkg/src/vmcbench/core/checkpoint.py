"""Nested-state serialization without pickle.

Trainer state is a nested structure of dicts, lists, arrays, and JSON
scalars. Arrays are split out into an npz payload addressed by their tree
path; the remaining skeleton travels as JSON, so files stay inspectable
and loadable across versions.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import ConfigurationError

_ARRAY_KEY = "__array__"


def pack_state(state: dict) -> tuple[dict[str, np.ndarray], dict]:
    """Split nested state into flat arrays plus a JSON-safe skeleton."""
    arrays: dict[str, np.ndarray] = {}

    def walk(node, path: str):
        if isinstance(node, np.ndarray):
            arrays[path] = node
            return {_ARRAY_KEY: path}
        if isinstance(node, dict):
            if _ARRAY_KEY in node:
                raise ConfigurationError(f"reserved key {_ARRAY_KEY} in state at {path}")
            return {str(k): walk(v, f"{path}/{k}") for k, v in node.items()}
        if isinstance(node, (list, tuple)):
            return [walk(v, f"{path}/{i}") for i, v in enumerate(node)]
        if isinstance(node, np.generic):
            return node.item()
        if node is None or isinstance(node, (bool, int, float, str)):
            return node
        raise ConfigurationError(
            f"state node at {path} is not serializable: {type(node).__name__}"
        )

    skeleton = walk(state, "s")
    return arrays, skeleton


def unpack_state(arrays: dict[str, np.ndarray], skeleton):
    if isinstance(skeleton, dict):
        if set(skeleton) == {_ARRAY_KEY}:
            return arrays[skeleton[_ARRAY_KEY]]
        return {k: unpack_state(arrays, v) for k, v in skeleton.items()}
    if isinstance(skeleton, list):
        return [unpack_state(arrays, v) for v in skeleton]
    return skeleton


def save_state(state: dict, path: str) -> None:
    arrays, skeleton = pack_state(state)
    meta = np.frombuffer(json.dumps(skeleton).encode(), dtype=np.uint8)
    np.savez(path, __meta__=meta, **arrays)


def load_state(path: str) -> dict:
    with np.load(path) as payload:
        skeleton = json.loads(bytes(payload["__meta__"].tobytes()).decode())
        arrays = {k: payload[k] for k in payload.files if k != "__meta__"}
    return unpack_state(arrays, skeleton)
