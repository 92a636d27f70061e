"""Corpus ingestion: word tokens, pause labels, manifests and acoustic targets."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Sequence

import numpy as np

from .tensorfile import TensorFileError, read_pst

DEFAULT_PUNCTUATION = ".,;:?!—\"')"

# lower-inclusive edges, in milliseconds
PAUSE_EDGES_MS = (100.0, 300.0, 700.0)


class InvalidInputError(ValueError):
    pass


class InvalidAlignmentError(ValueError):
    pass


class ManifestError(ValueError):
    pass


class PauseClass(IntEnum):
    NONE = 0
    SHORT = 1
    MEDIUM = 2
    LONG = 3

    @property
    def intentional(self) -> bool:
        return self >= PauseClass.MEDIUM


def is_intentional(label: int) -> bool:
    return label in (PauseClass.MEDIUM, PauseClass.LONG)


def classify_pause(duration_ms: float) -> PauseClass:
    """Map a silence duration to its pause class.

    Bins are ``[0,100) -> 0``, ``[100,300) -> 1``, ``[300,700) -> 2`` and
    ``[700, inf) -> 3``.
    """
    d = float(duration_ms)
    if not math.isfinite(d) or d < 0:
        raise InvalidInputError(f"pause duration must be finite and >= 0, got {duration_ms!r}")
    label = 0
    for edge in PAUSE_EDGES_MS:
        if d >= edge:
            label += 1
    return PauseClass(label)


def ends_with_punctuation(text: str, punctuation: str = DEFAULT_PUNCTUATION) -> bool:
    text = text.rstrip()
    return bool(text) and text[-1] in punctuation


def is_punctuation_only(text: str, punctuation: str = DEFAULT_PUNCTUATION) -> bool:
    stripped = text.strip()
    return bool(stripped) and all(ch in punctuation for ch in stripped)


@dataclass(frozen=True)
class WordToken:
    text: str
    is_punctuation_final: bool
    phonemes: tuple[str, ...]
    start_s: float
    end_s: float

    def __post_init__(self):
        if not (math.isfinite(self.start_s) and math.isfinite(self.end_s)):
            raise InvalidAlignmentError(f"word {self.text!r}: non-finite times")
        if self.end_s < self.start_s:
            raise InvalidAlignmentError(
                f"word {self.text!r}: end {self.end_s} precedes start {self.start_s}"
            )
        if not self.phonemes and not is_punctuation_only(self.text):
            raise InvalidAlignmentError(f"word {self.text!r} has no phonemes")


def compute_pause_labels(words: Sequence[WordToken], utterance_end_s: float) -> list[int]:
    """One label per word: the silence after word ``i``; the last slot uses trailing silence."""
    if not words:
        raise InvalidInputError("cannot label an empty word sequence")
    labels = []
    for i, word in enumerate(words):
        nxt = words[i + 1].start_s if i + 1 < len(words) else utterance_end_s
        gap = nxt - word.end_s
        if gap < -1e-9:
            where = f"words {i} and {i + 1}" if i + 1 < len(words) else f"word {i} and utterance end"
            raise InvalidAlignmentError(f"overlap of {-gap:.4f}s between {where}")
        # rounding absorbs float noise from subtracting second-valued timestamps
        labels.append(int(classify_pause(round(max(gap, 0.0) * 1000.0, 6))))
    return labels


@dataclass(frozen=True)
class AcousticFeatures:
    mel: np.ndarray
    f0_hz: np.ndarray
    energy: np.ndarray
    phoneme_durations: np.ndarray
    sample_rate: int = 24000
    hop_length: int = 256

    @property
    def n_frames(self) -> int:
        return int(self.mel.shape[0])

    @property
    def duration_s(self) -> float:
        return self.n_frames * self.hop_length / self.sample_rate

    def validate(self, n_phonemes: int | None = None) -> None:
        T = self.n_frames
        if self.mel.ndim != 2:
            raise InvalidInputError(f"mel must be 2-D, got shape {self.mel.shape}")
        if self.f0_hz.shape != (T,) or self.energy.shape != (T,):
            raise InvalidInputError(
                f"f0/energy frame counts {self.f0_hz.shape}/{self.energy.shape} do not match mel ({T})"
            )
        for name in ("mel", "f0_hz", "energy"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidInputError(f"{name} contains non-finite values")
        if np.any(self.f0_hz < 0):
            raise InvalidInputError("f0 must be >= 0")
        if np.any(self.phoneme_durations < 0):
            raise InvalidInputError("phoneme durations must be >= 0")
        if n_phonemes is not None and len(self.phoneme_durations) != n_phonemes:
            raise InvalidInputError(
                f"{len(self.phoneme_durations)} durations for {n_phonemes} phonemes"
            )
        total = int(self.phoneme_durations.sum())
        if total != T:
            raise InvalidInputError(f"sum of phoneme durations {total} != mel frames {T}")


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    speaker_id: int
    words: tuple[WordToken, ...]
    pause_labels: tuple[int, ...]
    features: AcousticFeatures
    word_to_phoneme_spans: tuple[tuple[int, int], ...]
    text: str = ""
    utt_end_s: float = 0.0
    context_path: Path | None = None
    spans_path: Path | None = None
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def phonemes(self) -> list[str]:
        return [p for w in self.words for p in w.phonemes]

    @property
    def punct_flags(self) -> list[bool]:
        return [w.is_punctuation_final for w in self.words]


def phoneme_spans(words: Sequence[WordToken]) -> tuple[tuple[int, int], ...]:
    spans, pos = [], 0
    for w in words:
        spans.append((pos, pos + len(w.phonemes)))
        pos += len(w.phonemes)
    return tuple(spans)


def check_span_partition(spans: Sequence[tuple[int, int]], total: int) -> None:
    """Spans must be in order, contiguous and cover ``[0, total)``; empty spans are allowed."""
    pos = 0
    for k, (s, e) in enumerate(spans):
        if s != pos or e < s:
            raise InvalidInputError(f"span {k} = [{s},{e}) breaks the partition at {pos}")
        pos = e
    if pos != total:
        raise InvalidInputError(f"spans cover [0,{pos}) but sequence length is {total}")


def feature_paths(mel_path: Path) -> dict[str, Path]:
    """Sibling files for a mel ``x.pst``: ``x.f0.pst`` and ``x.energy.pst``."""
    stem = mel_path.with_suffix("")
    return {
        "mel": mel_path,
        "f0": stem.with_name(stem.name + ".f0.pst"),
        "energy": stem.with_name(stem.name + ".energy.pst"),
    }


def _require(entry: dict, key: str, uid: str, types):
    if key not in entry:
        raise ManifestError(f"utterance {uid}: missing key {key!r}")
    value = entry[key]
    if isinstance(value, bool) or not isinstance(value, types):
        raise ManifestError(f"utterance {uid}: key {key!r} has wrong type {type(value).__name__}")
    return value


def parse_record(
    entry: dict,
    base_dir: Path,
    sample_rate: int = 24000,
    hop_length: int = 256,
    n_speakers: int | None = None,
    punctuation: str = DEFAULT_PUNCTUATION,
) -> UtteranceRecord:
    uid = str(entry.get("id", "<missing id>"))
    try:
        return _parse_record(entry, uid, base_dir, sample_rate, hop_length, n_speakers, punctuation)
    except ManifestError:
        raise
    except (InvalidInputError, InvalidAlignmentError, TensorFileError, TypeError, ValueError) as exc:
        raise ManifestError(f"utterance {uid}: {exc}") from exc


def _parse_record(entry, uid, base_dir, sample_rate, hop_length, n_speakers, punctuation):
    if not isinstance(entry, dict):
        raise ManifestError("manifest line is not a JSON object")
    _require(entry, "id", uid, str)
    speaker = _require(entry, "speaker", uid, int)
    if speaker < 0 or (n_speakers is not None and speaker >= n_speakers):
        raise ManifestError(f"utterance {uid}: speaker {speaker} outside [0,{n_speakers})")
    raw_words = _require(entry, "words", uid, list)
    if not raw_words:
        raise ManifestError(f"utterance {uid}: empty word list")
    words, durations = [], []
    for k, w in enumerate(raw_words):
        if not isinstance(w, dict):
            raise ManifestError(f"utterance {uid}: word {k} is not an object")
        text = _require(w, "w", uid, str)
        phones = tuple(_require(w, "phones", uid, list))
        punct = w.get("punct")
        if punct is None:
            punct = ends_with_punctuation(text, punctuation)
        words.append(
            WordToken(
                text=text,
                is_punctuation_final=bool(punct),
                phonemes=phones,
                start_s=float(_require(w, "start", uid, (int, float))),
                end_s=float(_require(w, "end", uid, (int, float))),
            )
        )
        durs = w.get("durs")
        if durs is None:
            raise ManifestError(f"utterance {uid}: word {k} has no 'durs' (frames per phone)")
        if len(durs) != len(phones):
            raise ManifestError(f"utterance {uid}: word {k} has {len(phones)} phones but {len(durs)} durs")
        durations.extend(int(d) for d in durs)
    for a, b in zip(words, words[1:]):
        if b.start_s < a.start_s:
            raise ManifestError(f"utterance {uid}: words not sorted by start time")
    utt_end = float(entry.get("utt_end", words[-1].end_s))
    if "pause_labels" in entry:
        labels = [int(x) for x in entry["pause_labels"]]
        if len(labels) != len(words) or any(x not in (0, 1, 2, 3) for x in labels):
            raise ManifestError(f"utterance {uid}: pause_labels must be one class in 0..3 per word")
    else:
        labels = compute_pause_labels(words, utt_end)

    mel_path = base_dir / _require(entry, "features", uid, str)
    paths = feature_paths(mel_path)
    mel = read_pst(paths["mel"])
    f0 = read_pst(paths["f0"]).reshape(-1)
    energy = read_pst(paths["energy"]).reshape(-1)
    feats = AcousticFeatures(
        mel=mel,
        f0_hz=f0,
        energy=energy,
        phoneme_durations=np.asarray(durations, dtype=np.int64),
        sample_rate=int(entry.get("sample_rate", sample_rate)),
        hop_length=int(entry.get("hop_length", hop_length)),
    )
    spans = phoneme_spans(words)
    feats.validate(n_phonemes=spans[-1][1])
    check_span_partition(spans, spans[-1][1])

    ctx = entry.get("context")
    sp = entry.get("spans")
    return UtteranceRecord(
        id=uid,
        speaker_id=speaker,
        words=tuple(words),
        pause_labels=tuple(labels),
        features=feats,
        word_to_phoneme_spans=spans,
        text=str(entry.get("text", " ".join(w.text for w in words))),
        utt_end_s=utt_end,
        context_path=base_dir / ctx if ctx else None,
        spans_path=base_dir / sp if sp else None,
    )


def load_manifest(
    path,
    sample_rate: int = 24000,
    hop_length: int = 256,
    n_speakers: int | None = None,
    punctuation: str = DEFAULT_PUNCTUATION,
) -> list[UtteranceRecord]:
    """Load and validate a JSON Lines manifest; relative paths resolve against its directory."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc.strerror}") from exc
    records, seen = [], set()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        rec = parse_record(entry, path.parent, sample_rate, hop_length, n_speakers, punctuation)
        if rec.id in seen:
            raise ManifestError(f"utterance {rec.id}: duplicate id")
        seen.add(rec.id)
        records.append(rec)
    return records


def phoneme_level_targets(feats: AcousticFeatures) -> tuple[np.ndarray, np.ndarray]:
    """Per-phoneme pitch (mean log-F0 over voiced frames, 0 if none) and mean energy."""
    durs = feats.phoneme_durations
    bounds = np.concatenate([[0], np.cumsum(durs)])
    pitch = np.zeros(len(durs), dtype=np.float32)
    energy = np.zeros(len(durs), dtype=np.float32)
    for k in range(len(durs)):
        s, e = bounds[k], bounds[k + 1]
        if e <= s:
            continue
        f0 = feats.f0_hz[s:e]
        voiced = f0[f0 > 0]
        if voiced.size:
            pitch[k] = float(np.log(voiced).mean())
        energy[k] = float(feats.energy[s:e].mean())
    return pitch, energy


def word_times_from_durations(
    words_phones: Sequence[Sequence[str]],
    durations: Sequence[int],
    frame_s: float,
    boundary_token: str | None = "sp",
) -> list[tuple[float, float]]:
    """Word (start, end) seconds implied by phoneme durations.

    Frames of trailing boundary tokens count as the silence after the word.
    """
    times, pos, frame = [], 0, 0
    for phones in words_phones:
        start = frame
        end = frame
        for ph in phones:
            frame += int(durations[pos])
            pos += 1
            if ph != boundary_token:
                end = frame
        times.append((start * frame_s, end * frame_s))
    return times
