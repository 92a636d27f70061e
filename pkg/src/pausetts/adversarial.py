"""Multi-length window discriminator and least-squares GAN objective."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import torch
from torch import nn
from torch.nn import functional as F


@dataclass(frozen=True)
class WindowSpec:
    lengths: tuple[int, ...] = (32, 64, 96)
    rng_seed: int = 0

    def __post_init__(self):
        lengths = tuple(int(L) for L in self.lengths)
        if any(L <= 0 for L in lengths) or list(lengths) != sorted(set(lengths)):
            raise ValueError(f"window lengths must be positive, sorted and distinct: {lengths}")
        object.__setattr__(self, "lengths", lengths)


@dataclass
class Window:
    length: int
    start: int
    utterance: int = 0
    real: torch.Tensor | None = field(default=None, repr=False)
    fake: torch.Tensor | None = field(default=None, repr=False)


def window_starts(n_frames: int, spec: WindowSpec, rng: torch.Generator) -> list[tuple[int, int]]:
    """``(length, start)`` for every length that fits, start uniform in ``[0, T - L]``."""
    out = []
    for L in spec.lengths:
        if L > n_frames:
            continue
        s = int(torch.randint(0, n_frames - L + 1, (1,), generator=rng))
        out.append((L, s))
    return out


def slice_windows(mel: torch.Tensor, spec: WindowSpec, rng: torch.Generator, fake: torch.Tensor | None = None):
    """Slice ``(T, n_mels)`` mel(s) into one window per fitting length.

    When ``fake`` is given it is cut at the same offsets as ``mel``.
    """
    T = mel.shape[0]
    if T < 1:
        raise ValueError("cannot slice an empty mel")
    windows = []
    for L, s in window_starts(T, spec, rng):
        windows.append(Window(L, s, real=mel[s : s + L], fake=None if fake is None else fake[s : s + L]))
    return windows


class WindowDiscriminator(nn.Module):
    """Strided Conv1d + BatchNorm stack with global average pooling and a linear score."""

    def __init__(self, n_mels: int, hidden: int = 64, n_layers: int = 3):
        super().__init__()
        layers, cin = [], n_mels
        for _ in range(n_layers):
            layers += [nn.Conv1d(cin, hidden, 3, stride=2, padding=1), nn.BatchNorm1d(hidden), nn.LeakyReLU(0.2)]
            cin = hidden
        self.body = nn.Sequential(*layers)
        self.head = nn.Linear(hidden, 1)

    def forward(self, windows: torch.Tensor) -> torch.Tensor:
        """``(N, L, n_mels)`` -> ``(N,)`` scores."""
        h = self.body(windows.transpose(1, 2))
        return self.head(h.mean(dim=-1)).squeeze(-1)


class MultiLengthDiscriminator(nn.Module):
    """One window discriminator per configured length."""

    def __init__(self, n_mels: int, lengths: Sequence[int], hidden: int = 64, n_layers: int = 3):
        super().__init__()
        self.lengths = [int(L) for L in lengths]
        self.discs = nn.ModuleDict({str(L): WindowDiscriminator(n_mels, hidden, n_layers) for L in self.lengths})

    def discriminate(self, window: torch.Tensor, length: int | None = None) -> torch.Tensor:
        """Score a single ``(L, n_mels)`` window (or a stacked ``(N, L, n_mels)`` batch)."""
        L = window.shape[-2] if length is None else length
        key = str(L) if str(L) in self.discs else str(min(self.lengths, key=lambda x: abs(x - L)))
        single = window.dim() == 2
        scores = self.discs[key](window[None] if single else window)
        return scores[0] if single else scores

    def place_windows(self, mel_mask: torch.Tensor, spec: WindowSpec, rng: torch.Generator):
        """Draw ``(utterance, length, start)`` placements shared by the real/fake pair."""
        placements = []
        for b, T in enumerate(mel_mask.sum(dim=1).tolist()):
            placements += [(b, L, s) for L, s in window_starts(int(T), spec, rng)]
        return placements

    def score_pairs(self, mel_real, mel_fake, placements):
        """Score paired windows grouped by length; returns flat ``(real, fake)`` score tensors."""
        groups: dict[int, list[tuple[int, int]]] = {}
        for b, L, s in placements:
            groups.setdefault(L, []).append((b, s))
        real, fake = [], []
        for L in sorted(groups):
            r = torch.stack([mel_real[b, s : s + L] for b, s in groups[L]])
            f = torch.stack([mel_fake[b, s : s + L] for b, s in groups[L]])
            # real and fake share one forward so batch-norm statistics are shared
            scores = self.discs[str(L)](torch.cat([r, f]))
            real.append(scores[: len(r)])
            fake.append(scores[len(r) :])
        if not real:
            empty = mel_real.new_zeros(0)
            return empty, empty
        return torch.cat(real), torch.cat(fake)


def gan_losses(real_scores, fake_scores) -> tuple[torch.Tensor, torch.Tensor]:
    """LSGAN: ``d = mean((r-1)^2)/2 + mean(f^2)/2``, ``g = mean((f-1)^2)/2``."""
    r = torch.as_tensor(real_scores, dtype=torch.float64 if not isinstance(real_scores, torch.Tensor) else None)
    f = torch.as_tensor(fake_scores, dtype=torch.float64 if not isinstance(fake_scores, torch.Tensor) else None)
    if r.numel() == 0 or f.numel() == 0:
        raise ValueError("gan_losses needs at least one real and one fake score")
    d_loss = 0.5 * F.mse_loss(r, torch.ones_like(r)) + 0.5 * f.pow(2).mean()
    g_loss = 0.5 * F.mse_loss(f, torch.ones_like(f))
    return d_loss, g_loss
