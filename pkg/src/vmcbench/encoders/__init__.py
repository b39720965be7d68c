"""Visual encoders: scratch ConvNets, external representations, fusion, caching."""

from .scratch import ENCODER_VARIANTS, ScratchEncoderSpec, build_scratch_encoder
from .fusion import flare_backward, flare_fuse, fused_dim
from .heads import PolicyHead, build_policy_head
from .backend import (
    BACKEND_KINDS,
    MODES,
    BackendSpec,
    RepresentationBackend,
    backend_forward,
    build_backend,
    load_backend_file,
    make_identity_backend,
    make_mock_pretrained,
    save_backend,
    set_mode,
)
from .cache import FeatureCache, build_feature_cache

__all__ = [
    "BACKEND_KINDS",
    "BackendSpec",
    "ENCODER_VARIANTS",
    "FeatureCache",
    "MODES",
    "PolicyHead",
    "RepresentationBackend",
    "ScratchEncoderSpec",
    "backend_forward",
    "build_backend",
    "build_feature_cache",
    "build_policy_head",
    "build_scratch_encoder",
    "flare_backward",
    "flare_fuse",
    "fused_dim",
    "load_backend_file",
    "make_identity_backend",
    "make_mock_pretrained",
    "save_backend",
    "set_mode",
]
