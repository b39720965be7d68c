"""vmcbench: a desk-scale benchmark for visuo-motor policy learning.

Provides scratch ConvNet encoders with image augmentation, an adapter for
frozen/finetunable pre-trained visual backends, behavior-cloning and
actor-critic RL trainers, a synthetic reach environment with robustness
wrappers, and an experiment orchestrator with wall-time profiling.
"""

__version__ = "0.1.0"
