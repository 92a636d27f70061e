"""Word-level context vectors from precomputed subword representations."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import InvalidInputError
from .tensorfile import read_pst


class ContextError(ValueError):
    pass


@dataclass(frozen=True)
class ContextBundle:
    """Subword vectors ``(S, D)`` with per-word ``[start, end)`` subword spans.

    ``layer_index`` is 1-based for layered exports; 0 marks a single-matrix file.
    """

    subword_vectors: np.ndarray
    word_spans: tuple[tuple[int, int], ...]
    layer_index: int = 9

    def __post_init__(self):
        vecs = self.subword_vectors
        if vecs.ndim != 2:
            raise InvalidInputError(f"subword vectors must be 2-D, got {vecs.shape}")
        if not np.all(np.isfinite(vecs)):
            raise InvalidInputError("context vectors contain non-finite values")
        pos = 0
        for k, (s, e) in enumerate(self.word_spans):
            if s != pos:
                raise InvalidInputError(f"word span {k} starts at {s}, expected {pos}")
            if e <= s:
                raise InvalidInputError(f"word span {k} = [{s},{e}) is empty")
            pos = e
        if pos != vecs.shape[0]:
            raise InvalidInputError(f"word spans cover {pos} subwords, matrix has {vecs.shape[0]}")


def word_average_pool(bundle: ContextBundle) -> np.ndarray:
    """Mean of each word's subword rows; returns ``(W, D)``."""
    vecs = np.asarray(bundle.subword_vectors, dtype=np.float64)
    out = np.empty((len(bundle.word_spans), vecs.shape[1]))
    for w, (s, e) in enumerate(bundle.word_spans):
        if e <= s:
            raise InvalidInputError(f"word {w} has an empty subword span")
        out[w] = vecs[s:e].mean(axis=0)
    return out.astype(bundle.subword_vectors.dtype, copy=False)


def load_spans(path) -> tuple[tuple[int, int], ...]:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ContextError(f"cannot read span sidecar {path}: {exc}") from exc
    return tuple((int(s), int(e)) for s, e in raw)


def load_context(path, layer_index: int = 9, spans=None) -> ContextBundle:
    """Read a ``.pst`` context export.

    Rank-3 files are ``[layers, S, D]`` with transformer layer ``k`` stored at
    index ``k - 1``. Rank-2 files hold a single ``[S, D]`` matrix and are
    returned whole. ``spans`` defaults to the sidecar ``<stem>.spans.json``.
    """
    path = Path(path)
    tensor = read_pst(path)
    if tensor.ndim == 3:
        n_layers = tensor.shape[0]
        if not 1 <= layer_index <= n_layers:
            raise ContextError(
                f"layer {layer_index} out of range; {path} has layers 1..{n_layers}"
            )
        matrix = tensor[layer_index - 1]
    elif tensor.ndim == 2:
        matrix = tensor
    else:
        raise ContextError(f"{path}: context tensor must be rank 2 or 3, got rank {tensor.ndim}")
    if spans is None:
        spans = load_spans(path.with_name(path.name.removesuffix(".pst") + ".spans.json"))
    elif isinstance(spans, (str, Path)):
        spans = load_spans(spans)
    return ContextBundle(np.ascontiguousarray(matrix), tuple(map(tuple, spans)), layer_index)


def fallback_embedding(word_text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic pseudo-context vector in ``[-1, 1]^dim`` keyed on ``(word_text, seed)``."""
    if dim <= 0:
        raise InvalidInputError("embedding dimension must be positive")
    key = hashlib.blake2b(f"{seed}\x00{word_text}".encode(), digest_size=16).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(key, "little")))
    return rng.uniform(-1.0, 1.0, size=dim).astype(np.float32)


def fallback_word_context(words: Sequence[str], dim: int, seed: int = 0) -> np.ndarray:
    return np.stack([fallback_embedding(w, dim, seed) for w in words]) if words else np.zeros((0, dim), np.float32)
