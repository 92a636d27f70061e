"""Segment-aware word encoder driven by intentional pauses and punctuation."""
from __future__ import annotations

from typing import Sequence

import numpy as np
import torch
from torch import nn

from .config import ModelConfig
from .corpus import is_intentional
from .layers import FFTStack, apply_mask, sinusoid_table


class SegmentMap(tuple):
    """Ordered ``[start, end)`` word ranges partitioning ``[0, W)``."""

    def __new__(cls, segments: Sequence[tuple[int, int]], n_words: int | None = None):
        segs = tuple((int(s), int(e)) for s, e in segments)
        pos = 0
        for s, e in segs:
            if s != pos or e <= s:
                raise ValueError(f"segments {segs} do not partition the word sequence")
            pos = e
        if n_words is not None and pos != n_words:
            raise ValueError(f"segments cover {pos} words, expected {n_words}")
        return super().__new__(cls, segs)

    @property
    def n_words(self) -> int:
        return self[-1][1] if self else 0

    def segment_ids(self) -> list[int]:
        return [k for k, (s, e) in enumerate(self) for _ in range(s, e)]

    def offsets(self) -> list[int]:
        return [w - s for s, e in self for w in range(s, e)]


def segment_words(classes: Sequence[int], punct_flags: Sequence[bool] | None = None) -> SegmentMap:
    """Close a segment after every word with an intentional pause or final punctuation."""
    n = len(classes)
    if punct_flags is None:
        punct_flags = [False] * n
    if len(punct_flags) != n:
        raise ValueError(f"{n} pause classes but {len(punct_flags)} punctuation flags")
    segments, start = [], 0
    for w in range(n):
        if w == n - 1 or is_intentional(int(classes[w])) or punct_flags[w]:
            segments.append((start, w + 1))
            start = w + 1
    return SegmentMap(segments, n)


def segment_average_pool(fused, seg: SegmentMap):
    """Replace each word row with the mean of its segment (``(W, D)`` array or tensor).

    The mean is taken relative to the segment's first row, which makes
    pooling exactly idempotent.
    """
    is_tensor = isinstance(fused, torch.Tensor)
    x = fused if is_tensor else torch.as_tensor(np.asarray(fused))
    ids = torch.tensor(seg.segment_ids(), dtype=torch.long)
    out = segment_pool_batched(x[None], ids[None], torch.ones(1, len(ids), dtype=torch.bool))[0]
    return out if is_tensor else out.numpy()


def segment_pool_batched(x: torch.Tensor, seg_ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    B, W, D = x.shape
    n_seg = int(seg_ids.max()) + 1 if seg_ids.numel() else 1
    onehot = torch.nn.functional.one_hot(seg_ids, n_seg).to(x.dtype) * mask.unsqueeze(-1).to(x.dtype)
    # first word index of every segment
    first = torch.where(onehot.bool(), torch.arange(W)[None, :, None], W).amin(dim=1).clamp(max=W - 1)
    ref = torch.gather(x, 1, first.unsqueeze(-1).expand(B, n_seg, D))
    ref_per_word = onehot @ ref
    delta = apply_mask(x - ref_per_word, mask)
    counts = onehot.sum(dim=1).clamp(min=1.0)
    means = (onehot.transpose(1, 2) @ delta) / counts.unsqueeze(-1)
    return apply_mask(ref_per_word + onehot @ means, mask)


def segment_position_embedding(seg: SegmentMap, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of each word's offset inside its own segment, ``(W, dim)``."""
    if dim % 2:
        raise ValueError(f"position embedding dimension must be even, got {dim}")
    return sinusoid_table(torch.tensor(seg.offsets(), dtype=torch.long), dim)


def batch_segments(
    classes: torch.Tensor, punct: torch.Tensor, mask: torch.Tensor
) -> tuple[list[SegmentMap], torch.Tensor, torch.Tensor]:
    """Segment every utterance of a batch; returns maps, segment ids ``(B, W)`` and in-segment offsets ``(B, W)``."""
    B, W = classes.shape
    lengths = mask.sum(dim=1).tolist()
    cls_list, punct_list = classes.tolist(), punct.tolist()
    maps, ids, offs = [], torch.zeros(B, W, dtype=torch.long), torch.zeros(B, W, dtype=torch.long)
    for b in range(B):
        n = int(lengths[b])
        seg = segment_words(cls_list[b][:n], punct_list[b][:n])
        maps.append(seg)
        ids[b, :n] = torch.tensor(seg.segment_ids(), dtype=torch.long)
        offs[b, :n] = torch.tensor(seg.offsets(), dtype=torch.long)
    return maps, ids, offs


class PauseWordEncoder(nn.Module):
    """FFT blocks over fused word rows + segment means + in-segment position embeddings."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.encoder = FFTStack(
            cfg.d_model, cfg.n_blocks, cfg.n_heads, cfg.ffn_mult, cfg.ffn_kernel, cfg.rel_window, cfg.dropout
        )

    def forward(self, fused, seg_pooled, pos_emb, mask):
        if not (fused.shape == seg_pooled.shape == pos_emb.shape):
            raise ValueError(
                f"component shapes differ: {tuple(fused.shape)}, {tuple(seg_pooled.shape)}, {tuple(pos_emb.shape)}"
            )
        return self.encoder(fused + seg_pooled + pos_emb, mask)

    def encode(self, fused, seg_ids, offsets, mask):
        pooled = segment_pool_batched(fused, seg_ids, mask)
        pos = apply_mask(sinusoid_table(offsets, fused.shape[-1]).to(fused.dtype), mask)
        return self(fused, pooled, pos, mask)
