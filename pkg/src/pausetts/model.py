"""The full text-to-mel generator and its inference path."""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .acoustic import MelDecoder, PhonemeEncoder, VarianceAdaptor, fuse_batched
from .config import ModelConfig
from .data import Batch
from .layers import apply_mask
from .pause_word import PauseWordEncoder, SegmentMap, batch_segments
from .phrasing import N_PAUSE_CLASSES, PausePredictor, PhrasingEncoder, predicted_classes


class PhrasingModule(nn.Module):
    """Checkpoint section ``phrasing``; with the encoder ablated only a context projection remains."""

    def __init__(self, ctx_dim: int, cfg: ModelConfig):
        super().__init__()
        self.enabled = cfg.use_ps_encoder
        if self.enabled:
            self.encoder = PhrasingEncoder(ctx_dim, cfg)
            self.predictor = PausePredictor(cfg)
            self.pause_embedding = nn.Embedding(N_PAUSE_CLASSES, cfg.d_model)
        else:
            self.ctx_proj = nn.Linear(ctx_dim, cfg.d_model)


@dataclass
class GeneratorOutput:
    mel: torch.Tensor
    mel_mask: torch.Tensor
    log_duration: torch.Tensor
    pitch: torch.Tensor
    energy: torch.Tensor
    durations: torch.Tensor
    pause_logits: torch.Tensor | None
    pause_classes: torch.Tensor
    segments: list[SegmentMap]


class AcousticModel(nn.Module):
    SECTIONS = ("phrasing", "pause_word", "phoneme_enc", "variance", "decoder")

    def __init__(self, vocab_size: int, ctx_dim: int, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.phrasing = PhrasingModule(ctx_dim, cfg)
        self.pause_word = PauseWordEncoder(cfg) if cfg.use_pw_encoder else nn.Module()
        self.phoneme_enc = PhonemeEncoder(vocab_size, cfg)
        self.variance = VarianceAdaptor(cfg)
        self.decoder = MelDecoder(cfg)

    def word_states(self, batch: Batch, pause_override: torch.Tensor | None = None, teacher_force: bool = True):
        """Word-level prosody states plus the pause classes and segments that produced them."""
        mask = batch.word_mask
        logits = None
        if self.phrasing.enabled:
            syn = self.phrasing.encoder(batch.word_ctx, batch.speaker, mask)
            logits = self.phrasing.predictor(syn, mask)
            if pause_override is not None:
                classes = pause_override
            elif teacher_force and batch.pause_labels is not None:
                classes = batch.pause_labels
            else:
                classes = predicted_classes(logits, mask)
            fused = apply_mask(syn + self.phrasing.pause_embedding(classes.clamp(0, 3)), mask)
        else:
            fused = apply_mask(self.phrasing.ctx_proj(batch.word_ctx), mask)
            # no pause predictor: segmentation falls back to punctuation unless overridden
            classes = pause_override if pause_override is not None else torch.zeros_like(mask, dtype=torch.long)
        classes = torch.where(mask, classes, torch.zeros_like(classes))
        segments, seg_ids, offsets = batch_segments(classes, batch.punct, mask)
        if self.cfg.use_pw_encoder:
            word_out = self.pause_word.encode(fused, seg_ids, offsets, mask)
        else:
            word_out = fused
        return word_out, logits, classes, segments

    def forward(self, batch: Batch, pause_override=None, teacher_force: bool | None = None) -> GeneratorOutput:
        """Teacher-forced when the batch carries targets (and ``teacher_force`` is not False)."""
        if teacher_force is None:
            teacher_force = batch.has_targets
        word_out, logits, classes, segments = self.word_states(batch, pause_override, teacher_force)
        ph = self.phoneme_enc(batch.phonemes, batch.ph_mask)
        x = fuse_batched(word_out, batch.ph2word, ph, batch.ph_mask)
        targets = batch.variance_targets() if teacher_force else None
        max_frames = batch.mel.shape[1] if teacher_force else None
        frames, frame_mask, preds = self.variance(x, batch.ph_mask, targets, max_frames)
        mel = self.decoder(frames, frame_mask)
        return GeneratorOutput(
            mel=mel,
            mel_mask=frame_mask,
            log_duration=preds["log_duration"],
            pitch=preds["pitch"],
            energy=preds["energy"],
            durations=preds["durations"],
            pause_logits=logits,
            pause_classes=classes,
            segments=segments,
        )

    @torch.no_grad()
    def synthesize(self, batch: Batch, pause_override: torch.Tensor | None = None) -> GeneratorOutput:
        was_training = self.training
        self.eval()
        try:
            return self.forward(batch, pause_override, teacher_force=False)
        finally:
            self.train(was_training)
