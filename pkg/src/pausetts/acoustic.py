"""Phoneme encoder, word-to-phoneme fusion, variance adaptor and mel decoder."""
from __future__ import annotations

from typing import Sequence

import torch
from torch import nn

from .config import ModelConfig
from .layers import ConvReLUNorm, FFTStack, apply_mask, lengths_to_mask


class ContractError(RuntimeError):
    pass


class PhonemeEncoder(nn.Module):
    def __init__(self, vocab_size: int, cfg: ModelConfig):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, cfg.d_model, padding_idx=0)
        self.encoder = FFTStack(
            cfg.d_model, cfg.n_blocks, cfg.n_heads, cfg.ffn_mult, cfg.ffn_kernel, cfg.rel_window, cfg.dropout
        )

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        if ids.numel() and (ids.min() < 0 or ids.max() >= self.embedding.num_embeddings):
            raise ValueError(f"phoneme id outside vocabulary of size {self.embedding.num_embeddings}")
        return self.encoder(self.embedding(ids), mask)


def spans_to_index(spans: Sequence[tuple[int, int]], n_phonemes: int) -> list[int]:
    """Owning word for every phoneme; spans must partition ``[0, n_phonemes)`` in order."""
    index, pos = [], 0
    for w, (s, e) in enumerate(spans):
        if s != pos or e < s:
            raise ValueError(f"word span {w} = [{s},{e}) leaves a gap or overlap at phoneme {pos}")
        index.extend([w] * (e - s))
        pos = e
    if pos != n_phonemes:
        raise ValueError(f"word spans cover {pos} phonemes, sequence has {n_phonemes}")
    return index


def fuse_word_to_phoneme(word_out: torch.Tensor, spans, ph_out: torch.Tensor) -> torch.Tensor:
    """Add each word vector to every phoneme row of its span (unbatched ``(W, D)``/``(P, D)``)."""
    index = torch.tensor(spans_to_index(spans, ph_out.shape[0]), dtype=torch.long)
    return ph_out + word_out[index]


def fuse_batched(word_out: torch.Tensor, ph2word: torch.Tensor, ph_out: torch.Tensor, ph_mask) -> torch.Tensor:
    gathered = torch.gather(word_out, 1, ph2word.unsqueeze(-1).expand(-1, -1, word_out.shape[-1]))
    return apply_mask(ph_out + gathered, ph_mask)


def length_regulate(x: torch.Tensor, durations: torch.Tensor, max_len: int | None = None):
    """Repeat phoneme row ``p`` ``durations[p]`` times; returns ``(frames, frame_mask)``."""
    durations = durations.long().clamp(min=0)
    cum = durations.cumsum(dim=1)
    lengths = cum[:, -1] if cum.shape[1] else torch.zeros(x.shape[0], dtype=torch.long)
    T = int(lengths.max()) if max_len is None else max_len
    T = max(T, 1)
    frames = torch.arange(T).expand(x.shape[0], T).contiguous()
    idx = torch.searchsorted(cum, frames, right=True).clamp(max=x.shape[1] - 1)
    out = torch.gather(x, 1, idx.unsqueeze(-1).expand(-1, -1, x.shape[-1]))
    mask = lengths_to_mask(lengths, T)
    return apply_mask(out, mask), mask


def durations_from_log(log_dur: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Invert ``log(d + 1)``: round half up, at least one frame per real phoneme."""
    d = torch.floor(torch.exp(log_dur) - 1.0 + 0.5).clamp(min=1)
    return torch.where(mask, d, torch.zeros_like(d)).long()


class VariancePredictor(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.convs = ConvReLUNorm(cfg.d_model, 2, cfg.predictor_kernel, cfg.dropout)
        self.proj = nn.Linear(cfg.d_model, 1)

    def forward(self, x, mask):
        return self.proj(self.convs(x, mask)).squeeze(-1) * mask.to(x.dtype)


class VarianceAdaptor(nn.Module):
    """Duration, pitch and energy predictors with quantized pitch/energy embeddings."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.duration = VariancePredictor(cfg)
        self.pitch = VariancePredictor(cfg)
        self.energy = VariancePredictor(cfg)
        self.pitch_embedding = nn.Embedding(cfg.n_bins, cfg.d_model)
        self.energy_embedding = nn.Embedding(cfg.n_bins, cfg.d_model)
        self.register_buffer("pitch_bins", torch.linspace(0.0, 1.0, cfg.n_bins - 1))
        self.register_buffer("energy_bins", torch.linspace(0.0, 1.0, cfg.n_bins - 1))

    def set_ranges(self, pitch_range: tuple[float, float], energy_range: tuple[float, float]) -> None:
        """Equal-width bins over each range; only interior edges are stored, so the
        range extremes sit inside the first/last bin instead of on an edge."""
        n = self.pitch_bins.numel() + 1
        self.pitch_bins.copy_(torch.linspace(*pitch_range, n + 1)[1:-1])
        self.energy_bins.copy_(torch.linspace(*energy_range, n + 1)[1:-1])

    def forward(self, x, mask, targets: dict | None = None, max_frames: int | None = None):
        if targets is None and self.training:
            raise ContractError("variance adaptor needs ground-truth targets in training mode")
        log_dur = self.duration(x, mask)
        pitch = self.pitch(x, mask)
        p_in = pitch if targets is None else targets["pitch"]
        x = x + self.pitch_embedding(torch.bucketize(p_in.detach().contiguous(), self.pitch_bins))
        energy = self.energy(x, mask)
        e_in = energy if targets is None else targets["energy"]
        x = x + self.energy_embedding(torch.bucketize(e_in.detach().contiguous(), self.energy_bins))
        x = apply_mask(x, mask)
        used = durations_from_log(log_dur, mask) if targets is None else targets["durations"]
        frames, frame_mask = length_regulate(x, used, max_frames)
        preds = {"log_duration": log_dur, "pitch": pitch, "energy": energy, "durations": used}
        return frames, frame_mask, preds


class MelDecoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.decoder = FFTStack(
            cfg.d_model, cfg.n_blocks, cfg.n_heads, cfg.ffn_mult, cfg.ffn_kernel, cfg.rel_window, cfg.dropout
        )
        self.proj = nn.Linear(cfg.d_model, cfg.n_mels)

    def forward(self, frames, mask):
        return apply_mask(self.proj(self.decoder(frames, mask)), mask)
