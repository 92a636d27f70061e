import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import classify_table
from pausetts.corpus import (
    InvalidAlignmentError,
    InvalidInputError,
    ManifestError,
    PauseClass,
    WordToken,
    classify_pause,
    compute_pause_labels,
    load_manifest,
    phoneme_level_targets,
)
from pausetts.tensorfile import write_pst


def word(start, end, text="w", phones=("AA",)):
    return WordToken(text, False, tuple(phones), start, end)


def words_with_gaps(gaps, trailing=0.0, speech=0.2):
    out, t = [], 0.0
    for g in list(gaps) + [None]:
        out.append(word(t, t + speech))
        t += speech
        if g is not None:
            t += g
    return out, t + trailing


@pytest.mark.parametrize("ms, expected", [(50, 0), (0, 0), (450, 2), (700, 3), (299.999, 1)])
def test_classify_examples(ms, expected):
    assert classify_pause(ms) == expected


def test_classify_edges_epsilon_probes():
    eps = 1e-6
    for edge, cls in [(100, 1), (300, 2), (700, 3)]:
        assert classify_pause(edge - eps) == cls - 1
        assert classify_pause(edge) == cls
        assert classify_pause(edge + eps) == cls


def test_classify_sweep_matches_table():
    for k in range(4001):
        ms = k * 0.5
        assert classify_pause(ms) == classify_table(ms), ms


@pytest.mark.parametrize("bad", [-1.0, -1e-9, math.nan, math.inf])
def test_classify_rejects_invalid(bad):
    with pytest.raises(InvalidInputError):
        classify_pause(bad)


@given(st.floats(0, 1e5), st.floats(0, 1e5))
def test_classify_monotone(a, b):
    lo, hi = sorted((a, b))
    assert classify_pause(lo) <= classify_pause(hi)


def test_intentional_split():
    assert not PauseClass(0).intentional and not PauseClass(1).intentional
    assert PauseClass(2).intentional and PauseClass(3).intentional


def test_pause_labels_examples():
    ws, end = words_with_gaps([0.05, 0.45])
    assert compute_pause_labels(ws, end) == [0, 2, 0]
    ws, end = words_with_gaps([])
    assert compute_pause_labels(ws, end) == [0]
    ws, end = words_with_gaps([0.1, 0.3, 0.7])
    assert compute_pause_labels(ws, end) == [1, 2, 3, 0]


def test_pause_labels_trailing_silence_labels_last_word():
    ws, end = words_with_gaps([0.0], trailing=0.8)
    assert compute_pause_labels(ws, end) == [0, 3]


def test_pause_labels_reject_overlap():
    with pytest.raises(InvalidAlignmentError):
        compute_pause_labels([word(0.0, 0.5), word(0.4, 0.8)], 1.0)
    with pytest.raises(InvalidInputError):
        compute_pause_labels([], 1.0)


@settings(max_examples=60)
@given(
    st.lists(st.floats(0.0, 1.5), min_size=2, max_size=8),
    st.integers(0, 7),
    st.floats(0.0, 1.0),
)
def test_pause_labels_are_local(gaps, j, delta):
    ws, end = words_with_gaps(gaps)
    j = j % len(ws)
    base = compute_pause_labels(ws, end)
    assert len(base) == len(ws)
    # shorten word j from the right, keeping the sequence valid
    w = ws[j]
    new_end = w.start_s + (w.end_s - w.start_s) * (1 - delta)
    changed = list(ws)
    changed[j] = word(w.start_s, new_end)
    labels = compute_pause_labels(changed, end)
    for i in range(len(ws)):
        if i not in (j - 1, j):
            assert labels[i] == base[i]


def test_word_token_invariants():
    with pytest.raises(InvalidAlignmentError):
        WordToken("a", False, ("AA",), 1.0, 0.5)
    with pytest.raises(InvalidAlignmentError):
        WordToken("abc", False, (), 0.0, 0.5)
    WordToken(",", True, (), 0.5, 0.5)  # punctuation-only token may lack phonemes


def write_fixture(tmp_path, durs=(2, 3, 1), frames=6):
    feat = tmp_path / "features"
    mel = np.random.default_rng(0).random((frames, 4)).astype(np.float32)
    write_pst(feat / "u1.pst", mel)
    write_pst(feat / "u1.f0.pst", np.array([0, 100, 110, 0, 120, 0][:frames], np.float32))
    write_pst(feat / "u1.energy.pst", np.ones(frames, np.float32))
    line = {
        "id": "u1",
        "speaker": 0,
        "text": "hi there.",
        "words": [
            {"w": "hi", "punct": False, "phones": ["HH", "AY"], "durs": list(durs[:2]), "start": 0.0, "end": 0.2},
            {"w": "there.", "punct": True, "phones": ["DH"], "durs": list(durs[2:]), "start": 0.6, "end": 0.7},
        ],
        "features": "features/u1.pst",
        "utt_end": 0.7,
    }
    path = tmp_path / "m.jsonl"
    path.write_text(json.dumps(line) + "\n")
    return path


def test_load_manifest_empty(tmp_path):
    (tmp_path / "m.jsonl").write_text("")
    assert load_manifest(tmp_path / "m.jsonl") == []


def test_load_manifest_consistent_fixture(tmp_path):
    recs = load_manifest(write_fixture(tmp_path))
    assert len(recs) == 1
    r = recs[0]
    assert int(r.features.phoneme_durations.sum()) == r.features.n_frames == 6
    assert r.word_to_phoneme_spans == ((0, 2), (2, 3))
    assert r.pause_labels == (2, 0)
    assert r.punct_flags == [False, True]


def test_load_manifest_duration_mismatch_names_id(tmp_path):
    with pytest.raises(ManifestError, match="u1"):
        load_manifest(write_fixture(tmp_path, durs=(2, 3, 2)))


def test_load_manifest_schema_errors(tmp_path):
    path = write_fixture(tmp_path)
    line = json.loads(path.read_text())
    del line["speaker"]
    path.write_text(json.dumps(line))
    with pytest.raises(ManifestError, match="u1.*speaker"):
        load_manifest(path)
    with pytest.raises(ManifestError, match="cannot read"):
        load_manifest(tmp_path / "nope.jsonl")


def test_load_manifest_speaker_bound(tmp_path):
    with pytest.raises(ManifestError, match="speaker"):
        load_manifest(write_fixture(tmp_path), n_speakers=0)


def test_phoneme_level_targets(tmp_path):
    r = load_manifest(write_fixture(tmp_path))[0]
    pitch, energy = phoneme_level_targets(r.features)
    np.testing.assert_allclose(pitch, [np.log(100), np.mean(np.log([110, 120])), 0.0], rtol=1e-6)
    np.testing.assert_allclose(energy, [1, 1, 1])


def test_synthetic_manifest_records_are_valid(synthetic_manifest, tiny_cfg):
    fe = tiny_cfg.data.features
    for r in load_manifest(synthetic_manifest, fe.sample_rate, fe.hop_length, tiny_cfg.model.n_speakers):
        assert int(r.features.phoneme_durations.sum()) == r.features.n_frames
        pos = 0
        for s, e in r.word_to_phoneme_spans:
            assert s == pos
            pos = e
        assert pos == len(r.phonemes)
