"""Behavior cloning on demonstrations."""

from .bc import (
    BCConfig,
    BCPolicy,
    BCResult,
    BCTrainer,
    data_efficiency_sweep,
    finetune_pretrained,
    load_policy,
    save_policy,
    train_bc,
)

__all__ = [
    "BCConfig",
    "BCPolicy",
    "BCResult",
    "BCTrainer",
    "data_efficiency_sweep",
    "finetune_pretrained",
    "load_policy",
    "save_policy",
    "train_bc",
]
