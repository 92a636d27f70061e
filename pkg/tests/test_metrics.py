import math

import numpy as np
import pytest
from scipy.fft import idct

from oracles import ddur_loop, dtw_brute_cost, mcd_loop, path_cost, pause_metrics_loop, rmse_f0_loop
from pausetts.metrics import ddur, dtw_align, mcd, mel_cepstrum, pause_metrics, rmse_f0


def test_identical_sequences_diagonal_zero():
    a = np.random.default_rng(0).normal(size=(6, 3))
    path, cost = dtw_align(a, a)
    assert path == [(i, i) for i in range(6)]
    assert cost == 0.0


def test_degenerate_single_frame():
    path, _ = dtw_align([[0.0]], [[0.0], [0.0], [0.0]])
    assert path == [(0, 0), (0, 1), (0, 2)]


@pytest.mark.parametrize("seed", range(20))
def test_dtw_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(5, 2)), rng.normal(size=(7, 2))
    path, cost = dtw_align(a, b)
    assert cost == pytest.approx(dtw_brute_cost(a, b), abs=1e-12)
    assert cost == pytest.approx(path_cost(a, b, path), abs=1e-12)
    assert path[0] == (0, 0) and path[-1] == (4, 6)
    for (i0, j0), (i1, j1) in zip(path, path[1:]):
        assert (i1 - i0, j1 - j0) in {(1, 0), (0, 1), (1, 1)}


@pytest.mark.parametrize("seed", range(30))
def test_dtw_not_worse_than_padded_diagonal(seed):
    rng = np.random.default_rng(100 + seed)
    n, m = rng.integers(1, 12, size=2)
    a, b = rng.normal(size=(n, 3)), rng.normal(size=(m, 3))
    k = min(n, m)
    naive = [(i, i) for i in range(k)] + [(i, k - 1) for i in range(k, n)] + [(k - 1, j) for j in range(k, m)]
    assert dtw_align(a, b)[1] <= path_cost(a, b, naive) + 1e-12


def test_dtw_errors():
    with pytest.raises(ValueError):
        dtw_align(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        dtw_align(np.zeros((2, 2)), np.zeros((3, 3)))


def test_mcd_identical_zero():
    m = np.random.default_rng(0).normal(size=(10, 20))
    assert mcd(m, m) == 0.0


@pytest.mark.parametrize("delta", [0.1, -0.25, 1.0])
def test_mcd_c1_shift_closed_form(delta):
    rng = np.random.default_rng(1)
    cep = rng.normal(size=(12, 40))
    shifted = cep.copy()
    shifted[:, 1] += delta
    ref = idct(cep, type=2, norm="ortho", axis=-1)
    hyp = idct(shifted, type=2, norm="ortho", axis=-1)
    expected = 10.0 / math.log(10.0) * math.sqrt(2.0) * abs(delta)
    assert mcd(ref, hyp) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_mcd_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    ref, hyp = rng.normal(size=(8, 20)), rng.normal(size=(11, 20))
    path, _ = dtw_align(mel_cepstrum(ref)[:, 1:], mel_cepstrum(hyp)[:, 1:])
    assert mcd(ref, hyp) == pytest.approx(mcd_loop(ref, hyp, path), abs=1e-6)


def test_mcd_silent_frame_extension():
    rng = np.random.default_rng(7)
    ref = rng.normal(size=(6, 16))
    hyp = ref.copy()
    hyp[:, 3] += 0.5
    silent = np.full((4, 16), -5.0)
    base = mcd(ref, hyp)
    ext = mcd(np.vstack([ref, silent]), np.vstack([hyp, silent]))
    # the extension adds 4 zero-cost pairs to a 6-pair diagonal path
    assert ext == pytest.approx(base * 6 / 10, abs=1e-9)
    assert mcd(np.vstack([ref, silent]), np.vstack([ref, silent])) == 0.0


def test_mcd_dimension_mismatch():
    with pytest.raises(ValueError):
        mcd(np.zeros((3, 10)), np.zeros((3, 12)))


def test_rmse_f0_examples():
    diag = [(i, i) for i in range(5)]
    assert rmse_f0(np.full(5, 200.0), np.full(5, 200.0), diag) == 0.0
    assert rmse_f0(np.full(5, 200.0), np.full(5, 210.0), diag) == pytest.approx(10.0)
    assert rmse_f0(np.zeros(5), np.full(5, 210.0), diag) is None


def test_rmse_f0_mixed_voicing_oracle():
    rng = np.random.default_rng(3)
    ref = np.where(rng.random(30) < 0.6, rng.uniform(80, 300, 30), 0.0)
    hyp = np.where(rng.random(25) < 0.6, rng.uniform(80, 300, 25), 0.0)
    path, _ = dtw_align(ref[:, None], hyp[:, None])
    assert rmse_f0(ref, hyp, path) == pytest.approx(rmse_f0_loop(ref, hyp, path), abs=1e-9)


def test_ddur_examples():
    assert ddur([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert ddur([1.0, 2.0], [1.1, 1.8]) == pytest.approx(0.15)
    rng = np.random.default_rng(0)
    r, h = rng.uniform(1, 5, 40), rng.uniform(1, 5, 40)
    assert ddur(r, h) == pytest.approx(ddur_loop(r, h))
    with pytest.raises(ValueError):
        ddur([], [])


def test_pause_metrics_examples():
    gold = [[0, 1, 2, 3], [3, 2]]
    m = pause_metrics(gold, gold)
    assert m["accuracy"] == 1.0 and m["macro_f1"] == 1.0
    assert np.trace(m["confusion"]) == 6
    m = pause_metrics([[0] * 8], [[0, 1, 2, 3, 0, 1, 2, 3]])
    assert m["accuracy"] == 0.25
    with pytest.raises(ValueError):
        pause_metrics([[0, 1]], [[0]])


@pytest.mark.parametrize("seed", range(10))
def test_pause_metrics_oracle(seed):
    rng = np.random.default_rng(seed)
    gold = [rng.integers(0, 4, size=rng.integers(1, 10)).tolist() for _ in range(6)]
    pred = [rng.integers(0, 4, size=len(g)).tolist() for g in gold]
    m = pause_metrics(pred, gold)
    acc, f1 = pause_metrics_loop(pred, gold)
    assert m["accuracy"] == pytest.approx(acc)
    assert m["macro_f1"] == pytest.approx(f1)
    assert np.sum(m["confusion"]) == sum(len(g) for g in gold)
