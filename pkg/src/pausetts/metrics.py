"""Objective evaluation: DTW, mel-cepstral distortion, F0 RMSE, duration gap and pause metrics."""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy.fft import dct

MCD_CONST = 10.0 / math.log(10.0) * math.sqrt(2.0)
N_CEPSTRA = 13


def euclidean_cost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def dtw_align(a, b, local_distance: Callable[[np.ndarray, np.ndarray], np.ndarray] = euclidean_cost):
    """Monotone alignment with steps (1,0), (0,1), (1,1) minimising summed local cost.

    Returns ``(path, total_cost)``; ties prefer the diagonal step.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("DTW needs non-empty sequences")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"feature dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    cost = local_distance(a, b)
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        row_prev, row = acc[i - 1], acc[i]
        c = cost[i - 1]
        # vertical/diagonal candidates are known before the row-wise horizontal scan
        vd = np.minimum(row_prev[1:], row_prev[:-1])
        for j in range(1, m + 1):
            best = vd[j - 1]
            if row[j - 1] < best:
                best = row[j - 1]
            row[j] = c[j - 1] + best
    path = [(n - 1, m - 1)]
    i, j = n, m
    while (i, j) != (1, 1):
        candidates = ((acc[i - 1, j - 1], i - 1, j - 1), (acc[i - 1, j], i - 1, j), (acc[i, j - 1], i, j - 1))
        _, i, j = min(candidates, key=lambda t: t[0])
        path.append((i - 1, j - 1))
    path.reverse()
    return path, float(acc[n, m])


def mel_cepstrum(mel: np.ndarray, n_cepstra: int = N_CEPSTRA) -> np.ndarray:
    """Orthonormal DCT-II of each mel frame; coefficients ``c0..c{n_cepstra}``."""
    return dct(np.asarray(mel, dtype=np.float64), type=2, norm="ortho", axis=-1)[:, : n_cepstra + 1]


def mcd_from_cepstra(ref_c: np.ndarray, hyp_c: np.ndarray) -> tuple[float, list]:
    ref, hyp = ref_c[:, 1:], hyp_c[:, 1:]
    path, _ = dtw_align(ref, hyp)
    i, j = np.array(path).T
    d = np.sqrt(np.sum((ref[i] - hyp[j]) ** 2, axis=1))
    return float(MCD_CONST * d.mean()), path


def mcd(ref_mel, hyp_mel, n_cepstra: int = N_CEPSTRA) -> float:
    """Mean DTW-aligned mel-cepstral distortion in dB, c0 excluded."""
    ref_mel, hyp_mel = np.asarray(ref_mel), np.asarray(hyp_mel)
    if ref_mel.shape[1] != hyp_mel.shape[1]:
        raise ValueError(f"mel bin counts differ: {ref_mel.shape[1]} vs {hyp_mel.shape[1]}")
    return mcd_from_cepstra(mel_cepstrum(ref_mel, n_cepstra), mel_cepstrum(hyp_mel, n_cepstra))[0]


def rmse_f0(ref_f0, hyp_f0, path) -> float | None:
    """RMSE (Hz) over path pairs voiced in both tracks; ``None`` when no such pair exists."""
    ref_f0, hyp_f0 = np.asarray(ref_f0, dtype=np.float64), np.asarray(hyp_f0, dtype=np.float64)
    if len(path) == 0:
        return None
    i, j = np.array(path).T
    r, h = ref_f0[i], hyp_f0[j]
    both = (r > 0) & (h > 0)
    if not both.any():
        return None
    return float(np.sqrt(np.mean((r[both] - h[both]) ** 2)))


def ddur(ref_durations: Sequence[float], hyp_durations: Sequence[float]) -> float:
    """Mean absolute difference of utterance durations (seconds)."""
    if len(ref_durations) == 0:
        raise ValueError("DDUR needs at least one utterance")
    if len(ref_durations) != len(hyp_durations):
        raise ValueError("reference and hypothesis corpora differ in size")
    return float(np.mean(np.abs(np.asarray(ref_durations, float) - np.asarray(hyp_durations, float))))


def pause_metrics(pred: Sequence[Sequence[int]], gold: Sequence[Sequence[int]], n_classes: int = 4) -> dict:
    """Micro accuracy, macro F1 over the classes that occur and a ``gold x pred`` confusion matrix."""
    if len(pred) != len(gold):
        raise ValueError(f"{len(pred)} predicted vs {len(gold)} gold sequences")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    for k, (p, g) in enumerate(zip(pred, gold)):
        if len(p) != len(g):
            raise ValueError(f"sequence {k}: {len(p)} predictions vs {len(g)} labels")
        np.add.at(conf, (np.asarray(g, dtype=int), np.asarray(p, dtype=int)), 1)
    total = conf.sum()
    accuracy = float(np.trace(conf) / total) if total else 0.0
    f1s = []
    for c in range(n_classes):
        tp = conf[c, c]
        fp = conf[:, c].sum() - tp
        fn = conf[c, :].sum() - tp
        if tp + fp + fn:  # classes absent from both gold and prediction are skipped
            f1s.append(2.0 * tp / (2.0 * tp + fp + fn))
    macro = float(np.mean(f1s)) if f1s else 0.0
    return {"accuracy": accuracy, "macro_f1": macro, "confusion": conf.tolist()}
