"""Build a training manifest from audio files and forced-alignment JSON exports.

Expected layout of the raw corpus directory::

    <id>.wav       mono (or multi-channel, averaged) PCM audio
    <id>.json      {"speaker": name, "text": ..., "words": [{"w", "start", "end",
                    "phones": [{"p", "start", "end"}, ...]}, ...]}
    <id>.ctx.pst   optional context export, with <id>.ctx.spans.json
"""
from __future__ import annotations

import json
import logging
import shutil
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .config import Config
from .corpus import (
    InvalidAlignmentError,
    WordToken,
    compute_pause_labels,
    ends_with_punctuation,
    is_punctuation_only,
)
from .features import extract_acoustic_features, time_to_frame
from .tensorfile import atomic_write_bytes, write_pst

log = logging.getLogger(__name__)


class PrepareError(RuntimeError):
    pass


@dataclass
class PrepareResult:
    manifest: Path
    n_utterances: int
    histogram: dict[str, Counter] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)


def read_wav(path: Path, sample_rate: int) -> np.ndarray:
    sr, data = wavfile.read(path)
    x = data.astype(np.float64)
    if np.issubdtype(data.dtype, np.integer):
        x /= float(np.iinfo(data.dtype).max)
    if x.ndim == 2:
        x = x.mean(axis=1)
    if sr != sample_rate:
        g = np.gcd(sr, sample_rate)
        x = resample_poly(x, sample_rate // g, sr // g)
    return x


def merge_punctuation_tokens(words: list[dict], punctuation: str) -> list[dict]:
    """Fold punctuation-only tokens into the preceding word's text."""
    merged = []
    for w in words:
        if is_punctuation_only(w["w"], punctuation) and merged:
            merged[-1] = dict(merged[-1], w=merged[-1]["w"] + w["w"].strip())
        else:
            merged.append(dict(w))
    return merged


def prepare_utterance(uid: str, wav: Path, align: dict, speaker: int, cfg: Config, feat_dir: Path) -> dict:
    fe = cfg.data.features
    audio = read_wav(wav, fe.sample_rate)
    feats = extract_acoustic_features(audio, fe)
    T = feats.n_frames
    words = merge_punctuation_tokens(align["words"], cfg.data.punctuation)
    if not words:
        raise InvalidAlignmentError("alignment has no words")

    def frame(t):
        return time_to_frame(t, fe.sample_rate, fe.hop_length, T)

    entries = []
    for i, w in enumerate(words):
        phones = w.get("phones") or []
        if not phones:
            raise InvalidAlignmentError(f"word {w['w']!r} has no phones")
        # the first phone starts where the previous word's trailing silence ends
        bounds = [0 if i == 0 else frame(w["start"])] + [frame(p["start"]) for p in phones[1:]]
        bounds.append(frame(w["end"]))
        nxt = frame(words[i + 1]["start"]) if i + 1 < len(words) else T
        bounds.append(nxt)
        durs = np.diff(bounds)
        if np.any(durs < 0):
            raise InvalidAlignmentError(f"word {w['w']!r}: phone times are not monotone")
        entries.append(
            {
                "w": w["w"],
                "punct": ends_with_punctuation(w["w"], cfg.data.punctuation),
                "phones": [p["p"] for p in phones] + [cfg.data.boundary_token],
                "durs": [int(d) for d in durs],
                "start": float(w["start"]),
                "end": float(w["end"]),
            }
        )
    utt_end = len(audio) / fe.sample_rate
    tokens = [WordToken(e["w"], e["punct"], tuple(e["phones"]), e["start"], e["end"]) for e in entries]
    labels = compute_pause_labels(tokens, utt_end)

    write_pst(feat_dir / f"{uid}.pst", feats.mel)
    write_pst(feat_dir / f"{uid}.f0.pst", feats.f0_hz)
    write_pst(feat_dir / f"{uid}.energy.pst", feats.energy)
    line = {
        "id": uid,
        "speaker": speaker,
        "text": align.get("text", " ".join(e["w"] for e in entries)),
        "words": entries,
        "features": f"features/{uid}.pst",
        "utt_end": utt_end,
        "sample_rate": fe.sample_rate,
        "hop_length": fe.hop_length,
        "pause_labels": labels,
    }
    ctx = wav.with_name(f"{uid}.ctx.pst")
    if ctx.exists():
        spans = wav.with_name(f"{uid}.ctx.spans.json")
        shutil.copyfile(ctx, feat_dir / ctx.name)
        shutil.copyfile(spans, feat_dir / spans.name)
        line["context"] = f"features/{ctx.name}"
        line["spans"] = f"features/{spans.name}"
    return line


def prepare_corpus(raw_dir, out_dir, cfg: Config) -> PrepareResult:
    raw_dir, out_dir = Path(raw_dir), Path(out_dir)
    if not raw_dir.is_dir():
        raise PrepareError(f"{raw_dir} is not a directory")
    items = sorted(p for p in raw_dir.glob("*.json") if not p.name.endswith(".spans.json"))
    items = [p for p in items if p.with_suffix(".wav").exists()]
    if not items:
        raise PrepareError(f"no <id>.wav + <id>.json pairs found in {raw_dir}")
    aligns = {}
    for p in items:
        try:
            aligns[p.stem] = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            aligns[p.stem] = exc
    names = sorted({str(a.get("speaker", "default")) for a in aligns.values() if isinstance(a, dict)})
    speaker_index = {n: k for k, n in enumerate(names)}
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)

    lines, failures, hist = [], {}, {}
    for p in items:
        uid, align = p.stem, aligns[p.stem]
        try:
            if isinstance(align, Exception):
                raise align
            name = str(align.get("speaker", "default"))
            line = prepare_utterance(uid, p.with_suffix(".wav"), align, speaker_index[name], cfg, feat_dir)
        except Exception as exc:  # reported per file, run continues
            failures[uid] = f"{type(exc).__name__}: {exc}"
            log.error("utterance %s: %s", uid, failures[uid])
            continue
        lines.append(line)
        hist.setdefault(name, Counter()).update(line["pause_labels"])
    manifest = out_dir / "manifest.jsonl"
    atomic_write_bytes(manifest, "".join(json.dumps(x) + "\n" for x in lines).encode())
    atomic_write_bytes(out_dir / "speakers.json", (json.dumps(names, indent=1) + "\n").encode())
    return PrepareResult(manifest, len(lines), hist, failures)


def format_histogram(hist: dict[str, Counter]) -> str:
    rows = ["speaker      none  short  medium  long"]
    for name in sorted(hist):
        c = hist[name]
        rows.append(f"{name:<10} {c[0]:>6} {c[1]:>6} {c[2]:>7} {c[3]:>5}")
    return "\n".join(rows)
