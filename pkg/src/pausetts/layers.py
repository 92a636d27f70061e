"""Shared network blocks. Tensors are ``(batch, time, channels)``; masks are ``(batch, time)`` bools, True = valid."""
from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

NEG_INF = -1e9


def lengths_to_mask(lengths: torch.Tensor, max_len: int | None = None) -> torch.Tensor:
    max_len = int(lengths.max()) if max_len is None else max_len
    return torch.arange(max_len, device=lengths.device)[None, :] < lengths[:, None]


def apply_mask(x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    return x * mask.unsqueeze(-1).to(x.dtype)


def sinusoid_table(positions: torch.Tensor, dim: int) -> torch.Tensor:
    """``PE[p, 2i] = sin(p / 10000^(2i/dim))``, ``PE[p, 2i+1] = cos(...)`` for arbitrary integer positions."""
    if dim % 2:
        raise ValueError(f"sinusoidal embedding needs an even dimension, got {dim}")
    pos = positions.to(torch.float64).unsqueeze(-1)
    freq = torch.pow(10000.0, -torch.arange(0, dim, 2, dtype=torch.float64) / dim)
    angles = pos * freq
    table = torch.stack([angles.sin(), angles.cos()], dim=-1).flatten(-2)
    return table


class RelativeSelfAttention(nn.Module):
    """Multi-head self-attention with clipped relative-position key/value embeddings."""

    def __init__(self, d_model: int, n_heads: int, window: int = 4, dropout: float = 0.0):
        super().__init__()
        assert d_model % n_heads == 0
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.window = window
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.out = nn.Linear(d_model, d_model)
        self.rel_k = nn.Parameter(torch.randn(2 * window + 1, self.head_dim) * self.head_dim**-0.5)
        self.rel_v = nn.Parameter(torch.randn(2 * window + 1, self.head_dim) * self.head_dim**-0.5)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        B, L, D = x.shape
        q, k, v = self.qkv(x).view(B, L, 3, self.n_heads, self.head_dim).permute(2, 0, 3, 1, 4)
        q = q * self.head_dim**-0.5
        idx = torch.arange(L, device=x.device)
        rel = (idx[None, :] - idx[:, None]).clamp(-self.window, self.window) + self.window
        rel = rel.expand(B, self.n_heads, L, L)
        # logits against each clipped offset, then gathered to absolute (i, j) positions
        scores = q @ k.transpose(-1, -2) + (q @ self.rel_k.t()).gather(-1, rel)
        scores = scores.masked_fill(~mask[:, None, None, :], NEG_INF)
        attn = self.dropout(torch.softmax(scores, dim=-1))
        rel_weights = attn.new_zeros(B, self.n_heads, L, self.rel_v.shape[0]).scatter_add(-1, rel, attn)
        ctx = attn @ v + rel_weights @ self.rel_v
        return self.out(ctx.transpose(1, 2).reshape(B, L, D))


class ConvFeedForward(nn.Module):
    def __init__(self, d_model: int, d_inner: int, kernel: int, dropout: float):
        super().__init__()
        self.conv1 = nn.Conv1d(d_model, d_inner, kernel, padding=kernel // 2)
        self.conv2 = nn.Conv1d(d_inner, d_model, kernel, padding=kernel // 2)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, mask):
        m = mask.unsqueeze(1).to(x.dtype)
        h = self.conv1(x.transpose(1, 2) * m)
        h = self.dropout(F.relu(h))
        h = self.conv2(h * m)
        return (h * m).transpose(1, 2)


class FFTBlock(nn.Module):
    """Post-norm feed-forward Transformer block: relative attention, then conv FFN."""

    def __init__(self, d_model, n_heads, ffn_mult=4, kernel=3, window=4, dropout=0.1):
        super().__init__()
        self.attn = RelativeSelfAttention(d_model, n_heads, window, dropout)
        self.norm1 = nn.LayerNorm(d_model)
        self.ffn = ConvFeedForward(d_model, ffn_mult * d_model, kernel, dropout)
        self.norm2 = nn.LayerNorm(d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, mask):
        x = self.norm1(x + self.dropout(self.attn(x, mask)))
        x = apply_mask(x, mask)
        x = self.norm2(x + self.dropout(self.ffn(x, mask)))
        return apply_mask(x, mask)


class FFTStack(nn.Module):
    def __init__(self, d_model, n_blocks, n_heads, ffn_mult=4, kernel=3, window=4, dropout=0.1):
        super().__init__()
        self.blocks = nn.ModuleList(
            FFTBlock(d_model, n_heads, ffn_mult, kernel, window, dropout) for _ in range(n_blocks)
        )

    def forward(self, x, mask):
        x = apply_mask(x, mask)
        for block in self.blocks:
            x = block(x, mask)
        return x


class ConvReLUNorm(nn.Module):
    """Stack of Conv1d -> ReLU -> LayerNorm -> Dropout layers, masked between layers."""

    def __init__(self, channels, n_layers, kernel, dropout, in_channels=None):
        super().__init__()
        self.convs = nn.ModuleList()
        self.norms = nn.ModuleList()
        for i in range(n_layers):
            cin = in_channels if (i == 0 and in_channels) else channels
            self.convs.append(nn.Conv1d(cin, channels, kernel, padding=kernel // 2))
            self.norms.append(nn.LayerNorm(channels))
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, mask):
        m = mask.unsqueeze(-1).to(x.dtype)
        for conv, norm in zip(self.convs, self.norms):
            x = conv((x * m).transpose(1, 2)).transpose(1, 2)
            x = self.dropout(norm(F.relu(x)))
        return x * m


class MaskedBiLSTM(nn.Module):
    """Bidirectional LSTM over packed sequences so padding never leaks into the reverse pass."""

    def __init__(self, d_in, d_model, n_layers=2):
        super().__init__()
        assert d_model % 2 == 0
        self.lstm = nn.LSTM(d_in, d_model // 2, num_layers=n_layers, batch_first=True, bidirectional=True)

    def forward(self, x, mask):
        lengths = mask.sum(dim=1).clamp(min=1).cpu()
        packed = pack_padded_sequence(x, lengths, batch_first=True, enforce_sorted=False)
        out, _ = self.lstm(packed)
        out, _ = pad_packed_sequence(out, batch_first=True, total_length=x.shape[1])
        return apply_mask(out, mask)
