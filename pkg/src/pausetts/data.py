"""Turning utterance records into padded training batches."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np
import torch

from .config import DataConfig
from .context import fallback_word_context, load_context, word_average_pool
from .corpus import UtteranceRecord, phoneme_level_targets

PAD, UNK = "<pad>", "<unk>"


class Vocab:
    def __init__(self, symbols: Sequence[str]):
        self.symbols = [PAD, UNK] + [s for s in symbols if s not in (PAD, UNK)]
        self.index = {s: i for i, s in enumerate(self.symbols)}

    @classmethod
    def from_records(cls, records: Sequence[UtteranceRecord], extra: Sequence[str] = ()) -> "Vocab":
        return cls(sorted({p for r in records for p in r.phonemes} | set(extra)))

    def encode(self, phonemes: Sequence[str]) -> list[int]:
        return [self.index.get(p, 1) for p in phonemes]

    def __len__(self):
        return len(self.symbols)


@dataclass
class Example:
    """One utterance as arrays; acoustic fields are ``None`` for text-only input."""

    id: str
    speaker: int
    word_ctx: np.ndarray
    punct: list[bool]
    phonemes: list[int]
    ph2word: list[int]
    pause_labels: list[int] | None = None
    durations: np.ndarray | None = None
    pitch: np.ndarray | None = None
    energy: np.ndarray | None = None
    mel: np.ndarray | None = None


def word_context_for(record_words: Sequence[str], context_path, spans_path, cfg: DataConfig) -> np.ndarray:
    if context_path is None:
        return fallback_word_context(list(record_words), cfg.context_dim, cfg.context_seed)
    bundle = load_context(context_path, cfg.context_layer, spans=spans_path)
    ctx = word_average_pool(bundle)
    if ctx.shape[0] != len(record_words):
        raise ValueError(f"{context_path}: {ctx.shape[0]} word vectors for {len(record_words)} words")
    if ctx.shape[1] != cfg.context_dim:
        raise ValueError(f"{context_path}: context dim {ctx.shape[1]} != data.context_dim {cfg.context_dim}")
    return ctx


def ph2word_from_spans(spans) -> list[int]:
    return [w for w, (s, e) in enumerate(spans) for _ in range(s, e)]


def example_from_record(record: UtteranceRecord, vocab: Vocab, cfg: DataConfig) -> Example:
    pitch, energy = phoneme_level_targets(record.features)
    return Example(
        id=record.id,
        speaker=record.speaker_id,
        word_ctx=word_context_for([w.text for w in record.words], record.context_path, record.spans_path, cfg),
        punct=record.punct_flags,
        phonemes=vocab.encode(record.phonemes),
        ph2word=ph2word_from_spans(record.word_to_phoneme_spans),
        pause_labels=list(record.pause_labels),
        durations=record.features.phoneme_durations.copy(),
        pitch=pitch,
        energy=energy,
        mel=record.features.mel,
    )


@dataclass
class Batch:
    ids: list[str]
    speaker: torch.Tensor
    word_ctx: torch.Tensor
    word_mask: torch.Tensor
    punct: torch.Tensor
    phonemes: torch.Tensor
    ph_mask: torch.Tensor
    ph2word: torch.Tensor
    pause_labels: torch.Tensor | None = None
    durations: torch.Tensor | None = None
    pitch: torch.Tensor | None = None
    energy: torch.Tensor | None = None
    mel: torch.Tensor | None = None
    mel_mask: torch.Tensor | None = None

    @property
    def has_targets(self) -> bool:
        return self.mel is not None

    def to(self, dtype: torch.dtype) -> "Batch":
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, torch.Tensor) and v.is_floating_point():
                v = v.to(dtype)
            out[f.name] = v
        return Batch(**out)

    def variance_targets(self) -> dict:
        return {"durations": self.durations, "pitch": self.pitch, "energy": self.energy}


def _pad(seqs, dtype, fill=0):
    n = max((len(s) for s in seqs), default=0)
    first = np.asarray(seqs[0]) if seqs else np.zeros(0)
    out = np.full((len(seqs), max(n, 1)) + first.shape[1:], fill, dtype=dtype)
    for i, s in enumerate(seqs):
        if len(s):
            out[i, : len(s)] = np.asarray(s)
    return torch.from_numpy(out)


def collate(examples: Sequence[Example]) -> Batch:
    wl = torch.tensor([len(e.punct) for e in examples])
    pl = torch.tensor([len(e.phonemes) for e in examples])
    batch = Batch(
        ids=[e.id for e in examples],
        speaker=torch.tensor([e.speaker for e in examples], dtype=torch.long),
        word_ctx=_pad([e.word_ctx for e in examples], np.float32),
        word_mask=torch.arange(max(int(wl.max()), 1))[None] < wl[:, None],
        punct=_pad([e.punct for e in examples], np.bool_, False),
        phonemes=_pad([e.phonemes for e in examples], np.int64),
        ph_mask=torch.arange(max(int(pl.max()), 1))[None] < pl[:, None],
        ph2word=_pad([e.ph2word for e in examples], np.int64),
    )
    if all(e.mel is not None for e in examples):
        tl = torch.tensor([e.mel.shape[0] for e in examples])
        batch.pause_labels = _pad([e.pause_labels for e in examples], np.int64)
        batch.durations = _pad([e.durations for e in examples], np.int64)
        batch.pitch = _pad([e.pitch for e in examples], np.float32)
        batch.energy = _pad([e.energy for e in examples], np.float32)
        batch.mel = _pad([e.mel for e in examples], np.float32)
        batch.mel_mask = torch.arange(max(int(tl.max()), 1))[None] < tl[:, None]
    return batch


def variance_ranges(examples: Sequence[Example]) -> tuple[tuple[float, float], tuple[float, float]]:
    """Min/max of phoneme-level pitch (voiced only) and energy over a training set."""
    pitch = np.concatenate([e.pitch for e in examples])
    energy = np.concatenate([e.energy for e in examples])
    voiced = pitch[pitch > 0]
    p_range = (float(voiced.min()), float(voiced.max())) if voiced.size else (0.0, 1.0)
    e_range = (float(energy.min()), float(energy.max())) if energy.size else (0.0, 1.0)
    if p_range[1] <= p_range[0]:
        p_range = (p_range[0], p_range[0] + 1.0)
    if e_range[1] <= e_range[0]:
        e_range = (e_range[0], e_range[0] + 1.0)
    return p_range, e_range


def batch_order(n_items: int, batch_size: int, seed: int, step: int) -> list[int]:
    """Indices of the batch used at ``step``: a seeded shuffle per epoch, so resuming is exact."""
    per_epoch = max(1, -(-n_items // batch_size))
    epoch, k = divmod(step, per_epoch)
    perm = np.random.default_rng([seed, epoch]).permutation(n_items)
    return perm[k * batch_size : (k + 1) * batch_size].tolist()
