"""Small shared helpers for seeding, batching, and training failures."""

from __future__ import annotations

import random

import numpy as np
import torch


class TrainingError(RuntimeError):
    """Raised when a training run diverges or violates a frozen-parameter contract."""


def set_global_seed(seed: int) -> None:
    """Seed python, numpy, and torch RNGs from one integer."""
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def pad_batch(id_seqs: list[list[int]], pad_id: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Right-pad integer sequences into a [B, L] tensor.

    Returns (ids, padding_mask) where padding_mask is True at padded positions,
    the convention torch attention layers expect for key_padding_mask.
    """
    if not id_seqs:
        raise ValueError("cannot pad an empty batch")
    max_len = max(len(s) for s in id_seqs)
    ids = torch.full((len(id_seqs), max_len), pad_id, dtype=torch.long)
    mask = torch.ones(len(id_seqs), max_len, dtype=torch.bool)
    for i, seq in enumerate(id_seqs):
        ids[i, : len(seq)] = torch.tensor(seq, dtype=torch.long)
        mask[i, : len(seq)] = False
    return ids, mask


def chunked(items: list, size: int):
    """Yield consecutive slices of at most `size` elements."""
    for start in range(0, len(items), size):
        yield items[start : start + size]
