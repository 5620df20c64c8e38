from __future__ import annotations

import hashlib
from typing import Sequence

import torch

from ..corpus import PAD_ID


def derive_seed(seed: int, *names: str) -> int:
    """Stable per-stage seed so skipping or resuming stages never shifts randomness."""
    key = ":".join([str(seed), *names]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:4], "little")


def seeded(seed: int) -> torch.Generator:
    torch.manual_seed(seed)
    return torch.Generator().manual_seed(seed)


def batches(n: int, batch_size: int, generator: torch.Generator | None = None) -> list[list[int]]:
    order = torch.randperm(n, generator=generator).tolist() if generator is not None else list(range(n))
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def pad_batch(seqs: Sequence[Sequence[int]], pad: int = PAD_ID):
    """Return ``(ids, lengths, pad_mask)``; ``pad_mask`` is True at padding."""
    lengths = torch.tensor([len(s) for s in seqs], dtype=torch.long)
    L = int(lengths.max())
    ids = torch.full((len(seqs), L), pad, dtype=torch.long)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = torch.tensor(list(s), dtype=torch.long)
    pad_mask = torch.arange(L)[None, :] >= lengths[:, None]
    return ids, lengths, pad_mask
