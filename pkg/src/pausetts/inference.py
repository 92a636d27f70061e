"""Synthesis from text bundles or manifests, and manifest-vs-manifest evaluation."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .config import Config
from .corpus import UtteranceRecord, load_manifest, word_times_from_durations
from .data import Example, Vocab, collate, example_from_record, word_context_for
from .metrics import ddur, mcd_from_cepstra, mel_cepstrum, pause_metrics, rmse_f0
from .model import AcousticModel
from .tensorfile import atomic_write_bytes, write_pst


class SynthesisError(ValueError):
    pass


def load_text_bundle(path) -> dict:
    """Text bundle JSON: ``{"words": [{"w", "phones", "punct"?}], "context"?, "spans"?, "speaker"?}``."""
    path = Path(path)
    try:
        bundle = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SynthesisError(f"cannot read text bundle {path}: {exc}") from exc
    if not isinstance(bundle, dict) or not bundle.get("words"):
        raise SynthesisError(f"{path}: bundle needs a non-empty 'words' list")
    for key in ("context", "spans"):
        if bundle.get(key):
            bundle[key] = path.parent / bundle[key]
    return bundle


def bundle_example(bundle: dict, speaker: int, vocab: Vocab, cfg: Config) -> Example:
    from .corpus import ends_with_punctuation

    words = bundle["words"]
    texts, phones, punct = [], [], []
    for w in words:
        ph = list(w.get("phones") or [])
        if not ph or ph[-1] != cfg.data.boundary_token:
            ph.append(cfg.data.boundary_token)
        texts.append(w["w"])
        phones.append(ph)
        punct.append(bool(w.get("punct", ends_with_punctuation(w["w"], cfg.data.punctuation))))
    unknown = sorted({p for ph in phones for p in ph if p not in vocab.index})
    if unknown:
        raise SynthesisError(f"phonemes not in the model vocabulary: {' '.join(unknown)}")
    ctx = word_context_for(texts, bundle.get("context"), bundle.get("spans"), cfg.data)
    return Example(
        id=str(bundle.get("id", "bundle")),
        speaker=speaker,
        word_ctx=ctx,
        punct=punct,
        phonemes=vocab.encode([p for ph in phones for p in ph]),
        ph2word=[w for w, ph in enumerate(phones) for _ in ph],
    )


def check_speaker(speaker: int, model: AcousticModel) -> None:
    n = model.cfg.n_speakers
    if not 0 <= speaker < n:
        raise SynthesisError(f"unknown speaker {speaker}; valid speaker ids are 0..{n - 1}")


def synthesize_example(
    model: AcousticModel, example: Example, pause_override: Sequence[int] | None = None, seed: int = 0
) -> dict:
    """Run the inference path on one utterance; returns mel, pause classes, durations, segments, pitch."""
    check_speaker(example.speaker, model)
    n_words = len(example.punct)
    override = None
    if pause_override is not None:
        if len(pause_override) != n_words:
            raise SynthesisError(f"pause override has {len(pause_override)} entries for {n_words} words")
        if any(int(c) not in (0, 1, 2, 3) for c in pause_override):
            raise SynthesisError("pause override entries must be classes 0..3")
        override = torch.tensor([list(map(int, pause_override))], dtype=torch.long)
    torch.manual_seed(seed)
    dtype = next(model.parameters()).dtype
    text_only = Example(**{**example.__dict__, "pause_labels": None, "durations": None, "pitch": None,
                           "energy": None, "mel": None})
    out = model.synthesize(collate([text_only]).to(dtype), override)
    T = int(out.mel_mask[0].sum())
    P = len(example.phonemes)
    return {
        "mel": out.mel[0, :T].float().numpy(),
        "pause_classes": out.pause_classes[0, :n_words].tolist(),
        "durations": out.durations[0, :P].tolist(),
        "segments": [list(s) for s in out.segments[0]],
        "pitch": out.pitch[0, :P].float().numpy(),
        "energy": out.energy[0, :P].float().numpy(),
    }


def frame_track(values: np.ndarray, durations: Sequence[int]) -> np.ndarray:
    return np.repeat(np.asarray(values, dtype=np.float32), np.asarray(durations, dtype=np.int64))


def predicted_f0(pitch: np.ndarray, durations: Sequence[int], voiced_floor: float) -> np.ndarray:
    """Frame F0 from phoneme log-F0 predictions; phonemes below ``voiced_floor`` are unvoiced."""
    f0 = np.where(pitch > voiced_floor, np.exp(pitch), 0.0)
    return frame_track(f0, durations)


def write_synthesis(result: dict, out_path) -> tuple[Path, Path]:
    out_path = Path(out_path)
    write_pst(out_path, result["mel"])
    side = out_path.with_suffix(".json")
    payload = {k: result[k] for k in ("pause_classes", "durations", "segments")}
    atomic_write_bytes(side, (json.dumps(payload) + "\n").encode())
    return out_path, side


def synthesize_manifest(model: AcousticModel, vocab: Vocab, cfg: Config, manifest, out_dir, seed: int = 0) -> Path:
    """Synthesize every record of ``manifest`` and write a hypothesis manifest under ``out_dir``."""
    fe = cfg.data.features
    records = load_manifest(manifest, fe.sample_rate, fe.hop_length, cfg.model.n_speakers, cfg.data.punctuation)
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    voiced_floor = 0.5 * float(model.variance.pitch_bins[0])
    lines = []
    for rec in records:
        ex = example_from_record(rec, vocab, cfg.data)
        res = synthesize_example(model, ex, seed=seed)
        durs = res["durations"]
        stem = out_dir / "features" / rec.id
        write_pst(stem.with_suffix(".pst"), res["mel"])
        write_pst(stem.with_name(rec.id + ".f0.pst"), predicted_f0(res["pitch"], durs, voiced_floor))
        write_pst(stem.with_name(rec.id + ".energy.pst"), frame_track(res["energy"], durs))
        frame_s = rec.features.hop_length / rec.features.sample_rate
        times = word_times_from_durations([w.phonemes for w in rec.words], durs, frame_s, cfg.data.boundary_token)
        pos, words = 0, []
        for w, (s, e) in zip(rec.words, times):
            n = len(w.phonemes)
            words.append({"w": w.text, "punct": w.is_punctuation_final, "phones": list(w.phonemes),
                          "durs": durs[pos : pos + n], "start": s, "end": e})
            pos += n
        lines.append({
            "id": rec.id,
            "speaker": rec.speaker_id,
            "text": rec.text,
            "words": words,
            "features": f"features/{rec.id}.pst",
            "utt_end": sum(durs) * frame_s,
            "sample_rate": rec.features.sample_rate,
            "hop_length": rec.features.hop_length,
            "pause_labels": res["pause_classes"],
            "segments": res["segments"],
        })
    path = out_dir / "manifest.jsonl"
    atomic_write_bytes(path, "".join(json.dumps(x) + "\n" for x in lines).encode())
    return path


def evaluate_records(refs: Sequence[UtteranceRecord], hyps: Sequence[UtteranceRecord]) -> dict:
    """Report MCD, F0 RMSE, DDUR and pause metrics over utterances present in both sets."""
    hyp_by_id = {h.id: h for h in hyps}
    common = [r for r in refs if r.id in hyp_by_id]
    if not common:
        raise ValueError("reference and hypothesis manifests share no utterance ids")
    per, mcds, f0s, ref_d, hyp_d, gold, pred = [], [], [], [], [], [], []
    for r in common:
        h = hyp_by_id[r.id]
        if len(r.words) != len(h.words):
            raise ValueError(f"utterance {r.id}: {len(r.words)} reference words vs {len(h.words)} hypothesis words")
        m, path = mcd_from_cepstra(mel_cepstrum(r.features.mel), mel_cepstrum(h.features.mel))
        f = rmse_f0(r.features.f0_hz, h.features.f0_hz, path)
        mcds.append(m)
        if f is not None:
            f0s.append(f)
        ref_d.append(r.features.duration_s)
        hyp_d.append(h.features.duration_s)
        gold.append(list(r.pause_labels))
        pred.append(list(h.pause_labels))
        per.append({
            "id": r.id,
            "mcd": m,
            "rmse_f0": f,
            "ref_duration": r.features.duration_s,
            "hyp_duration": h.features.duration_s,
            "pause_accuracy": pause_metrics([pred[-1]], [gold[-1]])["accuracy"],
        })
    pm = pause_metrics(pred, gold)
    ref_ids = {r.id for r in refs}
    return {
        "mcd": float(np.mean(mcds)),
        "rmse_f0": float(np.mean(f0s)) if f0s else None,
        "ddur": ddur(ref_d, hyp_d),
        "pause_accuracy": pm["accuracy"],
        "pause_macro_f1": pm["macro_f1"],
        "pause_confusion": pm["confusion"],
        "n_utterances": len(common),
        "unmatched_ids": sorted(ref_ids ^ set(hyp_by_id)),
        "not_computed": {"MOS": "subjective listening test", "PER": "requires external ASR",
                         "WER": "requires external ASR"},
        "per_utterance": per,
    }


def evaluate_manifests(ref_manifest, hyp_manifest, cfg: Config) -> dict:
    fe = cfg.data.features
    kw = dict(sample_rate=fe.sample_rate, hop_length=fe.hop_length, punctuation=cfg.data.punctuation)
    return evaluate_records(load_manifest(ref_manifest, **kw), load_manifest(hyp_manifest, **kw))
