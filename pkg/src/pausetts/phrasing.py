"""Speaker-dependent syntactic encoder, pause predictor and pause embedding fusion."""
from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from .config import ModelConfig
from .layers import ConvReLUNorm, FFTStack, MaskedBiLSTM, apply_mask

N_PAUSE_CLASSES = 4


class InvalidLabelError(ValueError):
    pass


class PhrasingEncoder(nn.Module):
    """Word context + speaker -> syntactic representation.

    Pipeline: projection to ``d_model``, additive speaker row, pre-net
    (2-layer BiLSTM then conv stack), then relative-position FFT blocks.
    """

    def __init__(self, ctx_dim: int, cfg: ModelConfig):
        super().__init__()
        d = cfg.d_model
        self.ctx_dim = ctx_dim
        self.in_proj = nn.Linear(ctx_dim, d)
        self.speaker_emb = nn.Embedding(cfg.n_speakers, d)
        self.prenet_rnn = MaskedBiLSTM(d, d, n_layers=2)
        self.prenet_conv = ConvReLUNorm(d, cfg.prenet_conv_layers, cfg.prenet_kernel, cfg.dropout)
        self.encoder = FFTStack(
            d, cfg.n_blocks, cfg.n_heads, cfg.ffn_mult, cfg.ffn_kernel, cfg.rel_window, cfg.dropout
        )

    def forward(self, word_ctx: torch.Tensor, speaker: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        if word_ctx.shape[-1] != self.ctx_dim:
            raise ValueError(f"context dim {word_ctx.shape[-1]} != configured {self.ctx_dim}")
        if speaker.min() < 0 or speaker.max() >= self.speaker_emb.num_embeddings:
            raise ValueError(f"speaker id outside [0,{self.speaker_emb.num_embeddings})")
        x = self.in_proj(word_ctx) + self.speaker_emb(speaker)[:, None, :]
        x = apply_mask(x, mask)
        x = self.prenet_rnn(x, mask)
        x = self.prenet_conv(x, mask)
        return self.encoder(x, mask)


class PausePredictor(nn.Module):
    """Two BiLSTM layers, a conv stack and a linear head over four pause classes."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.d_model
        self.rnn = MaskedBiLSTM(d, d, n_layers=2)
        self.conv = ConvReLUNorm(d, 2, cfg.predictor_kernel, cfg.dropout)
        self.proj = nn.Linear(d, N_PAUSE_CLASSES)

    def forward(self, syn: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        h = self.conv(self.rnn(syn, mask), mask)
        return apply_mask(self.proj(h), mask)


def predicted_classes(logits: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Argmax classes; padded positions are reported as class 0."""
    return torch.where(mask, logits.argmax(dim=-1), torch.zeros_like(mask, dtype=torch.long))


def pause_loss(logits: torch.Tensor, targets: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
    """Mean softmax cross-entropy over unmasked words."""
    if mask is None:
        mask = torch.ones(targets.shape, dtype=torch.bool, device=targets.device)
    valid = targets[mask]
    if valid.numel() and (valid.min() < 0 or valid.max() >= N_PAUSE_CLASSES):
        raise InvalidLabelError(f"pause labels must lie in 0..{N_PAUSE_CLASSES - 1}")
    if not mask.any():
        return logits.sum() * 0.0
    return F.cross_entropy(logits[mask], valid)


def apply_pause_embedding(
    syn: torch.Tensor, classes: torch.Tensor, table: torch.Tensor, mask: torch.Tensor | None = None
) -> torch.Tensor:
    """``fused[w] = syn[w] + table[classes[w]]``; padded rows stay zero."""
    fused = syn + table[classes.clamp(0, N_PAUSE_CLASSES - 1)]
    return fused if mask is None else apply_mask(fused, mask)
