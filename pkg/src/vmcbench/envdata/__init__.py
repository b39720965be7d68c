"""Synthetic environments, scripted demonstrations, perturbation wrappers,
and the on-disk demonstration archive."""

from .env import Environment, LayerDecomposition, SyntheticReachEnv, compose_layers, make_env
from .expert import generate_demos, scripted_expert
from .wrappers import wrap_random_colors, wrap_video_background
from .archive import load_demos, save_demos

__all__ = [
    "Environment",
    "LayerDecomposition",
    "SyntheticReachEnv",
    "compose_layers",
    "generate_demos",
    "load_demos",
    "make_env",
    "save_demos",
    "scripted_expert",
    "wrap_random_colors",
    "wrap_video_background",
]
