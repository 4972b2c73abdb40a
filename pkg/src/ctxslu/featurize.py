"""Pseudo-acoustic frames.

Each word owns a fixed unit-norm signature in R^192 (seeded from the word's
CRC32, so it does not depend on any vocabulary).  A word spans 2-4 frames,
each frame being the signature plus i.i.d. Gaussian noise.
"""

from __future__ import annotations

import zlib
from functools import lru_cache

import numpy as np

from .errors import ContractError

FRAME_DIM = 192


@lru_cache(maxsize=4096)
def signature(word: str, dim: int = FRAME_DIM) -> np.ndarray:
    rng = np.random.default_rng(zlib.crc32(word.encode("utf-8")))
    v = rng.normal(size=dim)
    v /= np.linalg.norm(v)
    v.setflags(write=False)
    return v


def featurize(
    tokens,
    noise_seed: int,
    sigma: float = 0.05,
    expansion: int | None = None,
    min_frames: int = 2,
    max_frames: int = 4,
    dim: int = FRAME_DIM,
) -> np.ndarray:
    """Frames [n, dim] for a transcript; ``expansion`` pins frames per token."""
    if len(tokens) == 0:
        raise ContractError("featurize needs at least one token")
    rng = np.random.default_rng(noise_seed)
    if expansion is None:
        counts = rng.integers(min_frames, max_frames + 1, size=len(tokens))
    else:
        counts = np.full(len(tokens), expansion)
    rows = np.repeat(np.stack([signature(w, dim) for w in tokens]), counts, axis=0)
    if sigma > 0:
        rows = rows + rng.normal(scale=sigma, size=rows.shape)
    return rows
