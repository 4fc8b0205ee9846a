"""Python interface to the semantic-augmentation training core."""

from ._core import (
    ce_loss,
    isda_loss,
    mc_isda_loss,
    synthetic_summary,
    train,
)

__all__ = [
    "ce_loss",
    "isda_loss",
    "mc_isda_loss",
    "synthetic_summary",
    "train",
]
