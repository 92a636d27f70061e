"""Small rule-generated corpora for smoke tests and overfitting experiments.

Pause labels follow a fixed rule over (word, speaker), so a model's pause
accuracy can be checked against the rule itself.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import Config
from .tensorfile import atomic_write_bytes, write_pst

PHONES = ("AA", "AE", "B", "D", "EH", "F", "IY", "K", "M", "N", "OW", "S", "T", "UW")
VOICED = {"AA", "AE", "EH", "IY", "OW", "UW", "M", "N", "B", "D"}
LEXICON = {
    "the": ("D", "AA"),
    "cat": ("K", "AE", "T"),
    "sat": ("S", "AE", "T"),
    "on": ("AA", "N"),
    "mat": ("M", "AE", "T"),
    "boat": ("B", "OW", "T"),
    "feet": ("F", "IY", "T"),
    "need": ("N", "IY", "D"),
    "moon": ("M", "UW", "N"),
    "sun": ("S", "AA", "N"),
    "bed": ("B", "EH", "D"),
    "know": ("N", "OW"),
    "team": ("T", "IY", "M"),
    "dune": ("D", "UW", "N"),
    "keep": ("K", "IY", "B"),
    "fast": ("F", "AE", "S", "T"),
}
WORDS = tuple(LEXICON)
SPEAKER_F0 = (120.0, 210.0, 165.0, 95.0)
# silence (ms) realised for each pause class; all strictly inside their bins
PAUSE_MS = (20.0, 180.0, 450.0, 760.0)


def pause_rule(word: str, speaker: int, punct: bool) -> int:
    """Pause class that the synthetic corpus assigns after ``word`` for ``speaker``."""
    if punct:
        return 3 if (WORDS.index(word.rstrip(",.")) + speaker) % 2 else 2
    return (WORDS.index(word) * 3 + speaker) % 4


def phone_frames(phone: str, position: int) -> int:
    return 2 + (PHONES.index(phone) + position) % 3


def tiny_config(**overrides) -> Config:
    """Desk-scale configuration used by the overfitting experiment."""
    cfg = Config.from_dict(
        {
            "model": {"d_model": 32, "n_heads": 2, "n_blocks": 2, "dropout": 0.0, "n_speakers": 2, "n_bins": 16},
            "train": {
                "lr": 1e-3,
                "batch_size": 8,
                "max_steps": 2000,
                "checkpoint_every": 500,
                "seed": 1234,
                "w_dur": 1.0,
                "w_pitch": 1.0,
                "w_energy": 1.0,
            },
            "adv": {"warmup_steps": 200, "window_lengths": [16, 32, 48], "hidden": 32, "weight": 0.05},
            "data": {"context_dim": 16, "features": {"hop_length": 480}},
        }
    )
    return cfg.updated(overrides) if overrides else cfg


def _phone_profiles(n_mels: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    bins = np.arange(n_mels) / max(n_mels - 1, 1)
    profiles = {}
    for k, ph in enumerate(PHONES):
        centre = (k + 0.5) / len(PHONES)
        width = 0.05 + 0.1 * rng.random()
        low = 0.6 * np.exp(-0.5 * (bins / 0.15) ** 2) if ph in VOICED else 0.0
        profiles[ph] = np.clip(0.15 + 0.6 * np.exp(-0.5 * ((bins - centre) / width) ** 2) + low, 0.0, 1.0)
    return profiles


def make_sentences(n_utts: int, n_speakers: int, seed: int = 0) -> list[tuple[int, list[str]]]:
    rng = np.random.default_rng(seed)
    out = []
    for u in range(n_utts):
        n_words = int(rng.integers(4, 8))
        words = [WORDS[i] for i in rng.integers(0, len(WORDS), n_words)]
        if n_words > 4:
            k = int(rng.integers(1, n_words - 2))
            words[k] = words[k] + ","
        words[-1] = words[-1].rstrip(",") + "."
        out.append((u % n_speakers, words))
    return out


def make_synthetic_corpus(out_dir, cfg: Config | None = None, n_utts: int = 8, seed: int = 0) -> Path:
    """Write mel/f0/energy tensors and ``manifest.jsonl`` directly (no audio) and return the manifest path."""
    cfg = cfg or tiny_config()
    fe = cfg.data.features
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    frame_s = fe.hop_length / fe.sample_rate
    rng = np.random.default_rng(seed + 1)
    profiles = _phone_profiles(fe.n_mels, rng)
    silence = np.full(fe.n_mels, 0.05)
    lines = []
    for u, (speaker, words) in enumerate(make_sentences(n_utts, cfg.model.n_speakers, seed)):
        uid = f"syn{u:03d}"
        mel_rows, f0, entries, t = [], [], [], 0
        for i, word in enumerate(words):
            base = word.rstrip(",.")
            punct = word != base
            phones = LEXICON[base]
            durs = []
            start = t
            for j, ph in enumerate(phones):
                d = phone_frames(ph, j)
                env = 0.85 + 0.15 * np.sin(np.pi * (np.arange(d) + 0.5) / d)
                mel_rows.append(profiles[ph][None, :] * env[:, None])
                voiced = ph in VOICED
                f0.extend([SPEAKER_F0[speaker % 4] * (1.0 + 0.05 * j)] * d if voiced else [0.0] * d)
                durs.append(d)
                t += d
            end = t
            label = pause_rule(base, speaker, punct)
            gap = int(round(PAUSE_MS[label] / 1000.0 / frame_s))
            mel_rows.append(np.repeat(silence[None, :], gap, axis=0))
            f0.extend([0.0] * gap)
            t += gap
            entries.append(
                {
                    "w": word,
                    "punct": punct,
                    "phones": list(phones) + [cfg.data.boundary_token],
                    "durs": durs + [gap],
                    "start": round(start * frame_s, 6),
                    "end": round(end * frame_s, 6),
                }
            )
        mel = np.concatenate(mel_rows).astype(np.float32)
        energy = mel.mean(axis=1)
        stem = out_dir / "features" / uid
        write_pst(stem.with_suffix(".pst"), mel)
        write_pst(stem.with_name(uid + ".f0.pst"), np.asarray(f0, np.float32))
        write_pst(stem.with_name(uid + ".energy.pst"), energy)
        lines.append(
            {
                "id": uid,
                "speaker": speaker,
                "text": " ".join(words),
                "words": entries,
                "features": f"features/{uid}.pst",
                "utt_end": round(t * frame_s, 6),
                "sample_rate": fe.sample_rate,
                "hop_length": fe.hop_length,
            }
        )
    manifest = out_dir / "manifest.jsonl"
    atomic_write_bytes(manifest, "".join(json.dumps(x) + "\n" for x in lines).encode())
    return manifest


def make_raw_corpus(out_dir, n_utts: int = 3, n_speakers: int = 2, seed: int = 0, sample_rate: int = 24000) -> Path:
    """Audio + alignment fixture in the layout ``prepare`` consumes: ``<id>.wav`` and ``<id>.json``."""
    from scipy.io import wavfile

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    speakers = [f"spk{k}" for k in range(n_speakers)]
    for u, (speaker, words) in enumerate(make_sentences(n_utts, n_speakers, seed)):
        uid = f"utt{u:03d}"
        t, chunks, align_words = 0.05, [np.zeros(int(0.05 * sample_rate))], []
        for word in words:
            base = word.rstrip(",.")
            phones = []
            w_start = t
            for j, ph in enumerate(LEXICON[base]):
                dur = 0.04 * phone_frames(ph, j)
                n = int(round(dur * sample_rate))
                tt = np.arange(n) / sample_rate
                if ph in VOICED:
                    f = SPEAKER_F0[speaker % 4] * (1.0 + 0.05 * j)
                    sig = 0.3 * np.sin(2 * np.pi * f * tt) + 0.1 * np.sin(4 * np.pi * f * tt)
                else:
                    sig = 0.05 * np.random.default_rng(seed + u * 100 + j).standard_normal(n)
                chunks.append(sig)
                phones.append({"p": ph, "start": round(t, 6), "end": round(t + n / sample_rate, 6)})
                t += n / sample_rate
            align_words.append({"w": word, "start": round(w_start, 6), "end": round(t, 6), "phones": phones})
            gap = PAUSE_MS[pause_rule(base, speaker, word != base)] / 1000.0
            n = int(round(gap * sample_rate))
            chunks.append(np.zeros(n))
            t += n / sample_rate
        audio = np.concatenate(chunks)
        wavfile.write(out_dir / f"{uid}.wav", sample_rate, (audio * 32767).astype(np.int16))
        (out_dir / f"{uid}.json").write_text(
            json.dumps({"speaker": speakers[speaker], "text": " ".join(words), "words": align_words}, indent=1)
        )
    return out_dir


__all__ = ["make_raw_corpus", "make_synthetic_corpus", "pause_rule", "tiny_config"]
