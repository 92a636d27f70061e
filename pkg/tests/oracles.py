"""Independent brute-force reference implementations used by the tests.

Everything here is written with plain loops over Python lists so it shares
no code path with the vectorised implementations under test.
"""
from __future__ import annotations

import math


def classify_table(ms):
    table = [(0.0, 100.0, 0), (100.0, 300.0, 1), (300.0, 700.0, 2), (700.0, math.inf, 3)]
    hits = [c for lo, hi, c in table if lo <= ms < hi]
    assert len(hits) == 1
    return hits[0]


def mean_rows(rows):
    n, d = len(rows), len(rows[0])
    return [sum(r[k] for r in rows) / n for k in range(d)]


def word_pool(vectors, spans):
    return [mean_rows([vectors[i] for i in range(s, e)]) for s, e in spans]


def segment_scan(classes, punct):
    segs, start = [], 0
    n = len(classes)
    for w in range(n):
        boundary = classes[w] in (2, 3) or punct[w]
        if boundary or w == n - 1:
            segs.append((start, w + 1))
            start = w + 1
    return segs


def segment_pool(rows, segs):
    out = [None] * len(rows)
    for s, e in segs:
        m = mean_rows(rows[s:e])
        for w in range(s, e):
            out[w] = m
    return out


def fuse(word_rows, spans, ph_rows):
    out = []
    for p, row in enumerate(ph_rows):
        owner = [w for w, (s, e) in enumerate(spans) if s <= p < e]
        assert len(owner) == 1
        out.append([a + b for a, b in zip(row, word_rows[owner[0]])])
    return out


def expand(rows, durations):
    out = []
    for row, d in zip(rows, durations):
        for _ in range(d):
            out.append(list(row))
    return out


def lsgan(real, fake):
    d = sum((r - 1.0) ** 2 for r in real) / len(real) / 2 + sum(f**2 for f in fake) / len(fake) / 2
    g = sum((f - 1.0) ** 2 for f in fake) / len(fake) / 2
    return d, g


def softmax_nll(logits, targets):
    total = 0.0
    for row, t in zip(logits, targets):
        m = max(row)
        z = sum(math.exp(v - m) for v in row)
        total += -(row[t] - m - math.log(z))
    return total / len(targets)


def euclid(u, v):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(u, v)))


def dtw_brute_cost(a, b):
    """Minimum path cost by enumerating every monotone path (small inputs only)."""
    n, m = len(a), len(b)
    best = math.inf

    def walk(i, j, acc):
        nonlocal best
        acc += euclid(a[i], b[j])
        if acc >= best:
            return
        if i == n - 1 and j == m - 1:
            best = acc
            return
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, acc)
        if i + 1 < n:
            walk(i + 1, j, acc)
        if j + 1 < m:
            walk(i, j + 1, acc)

    walk(0, 0, 0.0)
    return best


def dtw_loop(a, b):
    """Plain O(n*m) dynamic programme with backtracking; returns ``(path, cost)``."""
    n, m = len(a), len(b)
    acc = [[math.inf] * (m + 1) for _ in range(n + 1)]
    acc[0][0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            acc[i][j] = euclid(a[i - 1], b[j - 1]) + min(acc[i - 1][j - 1], acc[i - 1][j], acc[i][j - 1])
    i, j, path = n, m, [(n - 1, m - 1)]
    while (i, j) != (1, 1):
        options = [(acc[i - 1][j - 1], i - 1, j - 1), (acc[i - 1][j], i - 1, j), (acc[i][j - 1], i, j - 1)]
        best = min(o[0] for o in options)
        _, i, j = next(o for o in options if o[0] == best)
        path.append((i - 1, j - 1))
    return path[::-1], acc[n][m]


def path_cost(a, b, path):
    return sum(euclid(a[i], b[j]) for i, j in path)


def dct2_ortho(row):
    n = len(row)
    out = []
    for k in range(n):
        s = sum(row[i] * math.cos(math.pi * k * (2 * i + 1) / (2 * n)) for i in range(n))
        scale = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
        out.append(s * scale)
    return out


def mcd_loop(ref_mel, hyp_mel, path, order=13):
    const = 10.0 / math.log(10.0) * math.sqrt(2.0)
    ref_c = [dct2_ortho(list(r)) for r in ref_mel]
    hyp_c = [dct2_ortho(list(r)) for r in hyp_mel]
    total = 0.0
    for i, j in path:
        total += const * math.sqrt(sum((ref_c[i][d] - hyp_c[j][d]) ** 2 for d in range(1, order + 1)))
    return total / len(path)


def rmse_f0_loop(ref, hyp, path):
    sq, n = 0.0, 0
    for i, j in path:
        if ref[i] > 0 and hyp[j] > 0:
            sq += (ref[i] - hyp[j]) ** 2
            n += 1
    return math.sqrt(sq / n) if n else None


def ddur_loop(refs, hyps):
    return sum(abs(r - h) for r, h in zip(refs, hyps)) / len(refs)


def pause_metrics_loop(pred, gold, n_classes=4):
    pairs = [(p, g) for ps, gs in zip(pred, gold) for p, g in zip(ps, gs)]
    acc = sum(1 for p, g in pairs if p == g) / len(pairs)
    f1s = []
    for c in range(n_classes):
        tp = sum(1 for p, g in pairs if p == c and g == c)
        fp = sum(1 for p, g in pairs if p == c and g != c)
        fn = sum(1 for p, g in pairs if p != c and g == c)
        if tp + fp + fn:
            prec = tp / (tp + fp) if tp + fp else 0.0
            rec = tp / (tp + fn) if tp + fn else 0.0
            f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return acc, sum(f1s) / len(f1s)


def finite_difference_check(loss_fn, named_params, n_checks, eps, rng, min_grad=1e-6):
    """Compare backprop with central differences on ``n_checks`` random scalar parameters.

    Returns the list of relative errors; parameters with ``|grad| < min_grad`` are skipped.
    """
    import torch

    for _, p in named_params:
        p.grad = None
    loss_fn().backward()
    candidates = [(name, p) for name, p in named_params if p.grad is not None]
    errors = []
    for _ in range(50 * n_checks):
        if len(errors) == n_checks:
            break
        name, p = candidates[int(rng.integers(len(candidates)))]
        i = int(rng.integers(p.numel()))
        g = p.grad.reshape(-1)[i].item()
        if abs(g) < min_grad:
            continue
        with torch.no_grad():
            flat = p.view(-1)
            orig = flat[i].item()
            flat[i] = orig + eps
            up = loss_fn().item()
            flat[i] = orig - eps
            down = loss_fn().item()
            flat[i] = orig
        num = (up - down) / (2 * eps)
        errors.append(abs(num - g) / max(abs(num), abs(g)))
    if len(errors) < n_checks:
        raise AssertionError(f"only {len(errors)} parameters with usable gradients")
    return errors
