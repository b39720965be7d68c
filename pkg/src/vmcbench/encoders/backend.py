"""Representation backends: a uniform wrapper over scratch ConvNets, external
pre-trained networks, and a parameter-free identity baseline.

A backend owns a network, a mode (trainable, frozen, finetune), and a
fingerprint over its weights for cache keying. External backends load from a
weight container file and never train from scratch; scratch backends never
freeze. Frozen backends always run in eval mode, so neither parameters nor
normalization statistics can drift.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from ..core.rng import RNGPolicy
from ..core.types import ObservationBatch
from ..errors import ConfigurationError, InvalidModeError, ShapeError, UnsupportedTransitionError
from ..imageops import bilinear_resize, to_unit_float
from ..nn import BatchNorm2d, Conv2d, Flatten, Linear, ReLU, Sequential
from .fusion import flare_fuse
from .scratch import ScratchEncoderSpec, build_scratch_net, scratch_encoder_spec

MODES = ("trainable", "frozen", "finetune")
BACKEND_KINDS = ("scratch", "identity", "mock", "file")


class RepresentationBackend:
    """Common behavior for all feature extractors."""

    def __init__(self, name: str, source: str, mode: str, net: Sequential | None,
                 frame_channels: int, input_hw: tuple[int, int] | None, output_dim: int):
        self.name = name
        self.source = source
        self.mode = mode
        self.net = net
        self.frame_channels = frame_channels
        self.input_hw = input_hw
        self.output_dim = output_dim

    def params(self):
        return [] if self.net is None else self.net.params()

    def forward(self, frames: np.ndarray, train: bool = False) -> np.ndarray:
        """[M, C, H, W] unit-domain float32 -> [M, output_dim]."""
        if frames.ndim != 4 or frames.shape[1] != self.frame_channels:
            raise ShapeError(
                f"backend {self.name} expects [M, {self.frame_channels}, H, W], "
                f"got {frames.shape}"
            )
        if self.mode == "frozen":
            train = False
        if self.net is None:
            return frames.reshape(frames.shape[0], -1)
        return self.net.forward(frames, train=train)

    def backward(self, dfeats: np.ndarray) -> np.ndarray:
        if self.net is None:
            raise InvalidModeError(f"backend {self.name} has no trainable network")
        return self.net.backward(dfeats)

    def state_arrays(self):
        return [] if self.net is None else self.net.state_arrays()

    def fingerprint(self) -> str:
        """Digest over identity, mode, and every parameter and buffer byte."""
        h = hashlib.sha256()
        h.update(f"{self.name}/{self.mode}/{self.output_dim}".encode())
        for name, arr in self.state_arrays():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def __repr__(self) -> str:
        return (f"{type(self).__name__}({self.name}, mode={self.mode}, "
                f"out={self.output_dim})")


class ScratchBackend(RepresentationBackend):
    def __init__(self, spec: ScratchEncoderSpec, net: Sequential):
        c, h, w = spec.input_shape
        super().__init__(
            name=f"scratch_{spec.variant}", source="scratch", mode="trainable",
            net=net, frame_channels=c, input_hw=(h, w), output_dim=spec.output_dim,
        )
        self.spec = spec


class IdentityBackend(RepresentationBackend):
    def __init__(self, input_shape: tuple[int, int, int]):
        c, h, w = input_shape
        super().__init__(
            name="identity", source="scratch", mode="trainable", net=None,
            frame_channels=c, input_hw=(h, w), output_dim=c * h * w,
        )


class ExternalBackend(RepresentationBackend):
    """Pre-trained representation rebuilt from an architecture list + weights."""

    def __init__(self, name: str, arch: list, net: Sequential,
                 frame_channels: int, input_hw: tuple[int, int], output_dim: int):
        super().__init__(name, "external", "frozen", net, frame_channels,
                         input_hw, output_dim)
        self.arch = arch
        self.set_frozen_flags()

    def set_frozen_flags(self) -> None:
        frozen = self.mode == "frozen"
        for p in self.params():
            p.frozen = frozen
            if frozen:
                p.grad[...] = 0


def set_mode(backend: RepresentationBackend, mode: str) -> RepresentationBackend:
    """Switch a backend's training mode in place, enforcing legal transitions.

    Scratch backends are always trainable; external backends move between
    frozen and finetune only. The round trip frozen -> finetune -> frozen
    leaves parameters bitwise intact (nothing is copied or rescaled).
    """
    if mode not in MODES:
        raise InvalidModeError(f"unknown backend mode {mode!r}")
    if backend.source == "scratch":
        if mode != "trainable":
            raise UnsupportedTransitionError(
                f"scratch backend {backend.name} cannot switch to {mode!r}"
            )
        return backend
    if mode == "trainable":
        raise UnsupportedTransitionError(
            f"external backend {backend.name} cannot train from scratch"
        )
    backend.mode = mode
    backend.set_frozen_flags()
    return backend


def _net_from_arch(arch: list, rng: np.random.Generator, dtype=np.float32) -> Sequential:
    layers = []
    for entry in arch:
        kind = entry[0]
        if kind == "conv":
            _, cin, cout, k, s, p, bias = entry
            layers.append(Conv2d(cin, cout, k, s, p, rng, dtype=dtype, bias=bool(bias)))
        elif kind == "bn2":
            layers.append(BatchNorm2d(entry[1], dtype=dtype))
        elif kind == "linear":
            _, din, dout, bias = entry
            layers.append(Linear(din, dout, rng, dtype=dtype, bias=bool(bias)))
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "flatten":
            layers.append(Flatten())
        else:
            raise ConfigurationError(f"unknown arch entry {entry!r}")
    return Sequential(layers)


def make_mock_pretrained(
    native_resolution: int = 224,
    feature_dim: int = 2048,
    channels: int = 16,
    weight_seed: int = 1234,
) -> ExternalBackend:
    """Stand-in external representation: a fixed-seed random ConvNet.

    Deterministic given (resolution, dims, seed), so its fingerprint is
    stable across processes. Starts frozen.
    """
    r = native_resolution
    h1 = (r - 8) // 4 + 1
    h2 = (h1 - 4) // 2 + 1
    h3 = (h2 - 3) // 2 + 1
    if h3 < 1:
        raise ShapeError(f"mock backend needs native resolution >= 36, got {r}")
    flat = 2 * channels * h3 * h3
    arch = [
        ("conv", 3, channels, 8, 4, 0, True), ("relu",),
        ("conv", channels, 2 * channels, 4, 2, 0, True), ("relu",),
        ("conv", 2 * channels, 2 * channels, 3, 2, 0, True), ("relu",),
        ("flatten",),
        ("linear", flat, feature_dim, True),
    ]
    rng = RNGPolicy(weight_seed).generator("pretrained/mock")
    net = _net_from_arch(arch, rng)
    name = f"mock_r{r}_c{channels}_d{feature_dim}_s{weight_seed}"
    return ExternalBackend(name, arch, net, 3, (r, r), feature_dim)


def make_identity_backend(input_shape: tuple[int, int, int]) -> IdentityBackend:
    return IdentityBackend(tuple(input_shape))


def save_backend(backend: ExternalBackend, path: str) -> None:
    """Weight container: json header + named arrays in one npz."""
    if backend.source != "external":
        raise InvalidModeError("only external backends serialize to weight containers")
    header = {
        "name": backend.name,
        "arch": backend.arch,
        "frame_channels": backend.frame_channels,
        "input_hw": list(backend.input_hw),
        "output_dim": backend.output_dim,
    }
    arrays = {f"state/{name}": arr for name, arr in backend.state_arrays()}
    np.savez(path, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
             **arrays)


def load_backend_file(path: str) -> ExternalBackend:
    with np.load(path) as z:
        header = json.loads(bytes(z["header"]).decode())
        arch = [tuple(e) for e in header["arch"]]
        net = _net_from_arch(arch, np.random.default_rng(0))
        backend = ExternalBackend(
            header["name"], arch, net, int(header["frame_channels"]),
            tuple(header["input_hw"]), int(header["output_dim"]),
        )
        arrays = {name[len("state/"):]: z[name] for name in z.files if name.startswith("state/")}
        backend.net.load_state_dict(arrays)
    return backend


@dataclass(frozen=True)
class BackendSpec:
    """Declarative backend choice resolved by ``build_backend``."""

    kind: str = "scratch"
    variant: str = "bc"
    mode: str = "trainable"
    native_resolution: int = 224
    feature_dim: int = 2048
    channels: int = 16
    weight_seed: int = 1234
    weights_path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise ConfigurationError(f"unknown backend kind {self.kind!r}")
        if self.mode not in MODES:
            raise InvalidModeError(f"unknown backend mode {self.mode!r}")
        if self.kind in ("scratch", "identity") and self.mode != "trainable":
            raise ConfigurationError(f"{self.kind} backend is always trainable")
        if self.kind in ("mock", "file") and self.mode == "trainable":
            raise ConfigurationError("external backends support frozen or finetune only")
        if self.kind == "file" and not self.weights_path:
            raise ConfigurationError("file backend requires weights_path")


def build_backend(spec: BackendSpec, input_shape: tuple[int, int, int],
                  rng: np.random.Generator, dtype=np.float32) -> RepresentationBackend:
    """Construct the backend described by ``spec`` for per-frame inputs
    of ``input_shape``. External kinds ignore the spatial part of
    ``input_shape``; frames are resized to their native resolution."""
    if spec.kind == "scratch":
        from .scratch import build_scratch_encoder

        return build_scratch_encoder(spec.variant, input_shape, rng, dtype=dtype)
    if spec.kind == "identity":
        return make_identity_backend(input_shape)
    if spec.kind == "mock":
        backend = make_mock_pretrained(
            native_resolution=spec.native_resolution,
            feature_dim=spec.feature_dim,
            channels=spec.channels,
            weight_seed=spec.weight_seed,
        )
    else:
        backend = load_backend_file(spec.weights_path)
    return set_mode(backend, spec.mode)


def backend_forward(
    backend: RepresentationBackend,
    batch: ObservationBatch,
    fuse: bool = True,
    train: bool = False,
) -> np.ndarray:
    """Encode an observation batch to features [N, D].

    Frames are converted to the unit float domain, resized when an external
    backend declares a different native resolution, and encoded frame by
    frame. Stacked observations are fused with flare_fuse when ``fuse`` is
    set, otherwise concatenated.
    """
    frames = to_unit_float(batch.frames())
    if backend.source == "external" and backend.input_hw is not None:
        frames = bilinear_resize(frames, backend.input_hw)
    feats = backend.forward(frames, train=train)
    n, t = batch.batch_size, batch.stack_depth
    if t == 1:
        return feats
    per_frame = feats.reshape(n, t, backend.output_dim)
    if fuse:
        return flare_fuse(per_frame)
    return per_frame.reshape(n, t * backend.output_dim)
