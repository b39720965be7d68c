"""Image-space data augmentation applied consistently across frame stacks."""

from .specs import AugmentationSpec, DistractorSource, JitterParams
from .ops import apply_stack_consistent, color_jitter, random_overlay, random_shift

__all__ = [
    "AugmentationSpec",
    "DistractorSource",
    "JitterParams",
    "apply_stack_consistent",
    "color_jitter",
    "random_overlay",
    "random_shift",
]
