"""Counter-based random substreams.

Every draw is addressed by a tuple of integers (for the planner: seed,
control step, iteration, sample block).  The tuple is hashed into a Philox
key and the block index goes into the high word of the Philox counter, so a
block's numbers never depend on which worker produced them or in what order.
"""
from __future__ import annotations

import numpy as np


def philox_key(*words: int) -> np.ndarray:
    return np.random.SeedSequence([int(w) & 0xFFFFFFFFFFFFFFFF for w in words]).generate_state(2, np.uint64)


def substream(key: np.ndarray, index: int) -> np.random.Generator:
    """Generator for substream ``index`` under ``key``."""
    counter = np.array([0, 0, 0, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def stream(*words: int) -> np.random.Generator:
    """Generator addressed directly by ``words`` (last word = substream index)."""
    *head, last = words
    return substream(philox_key(*head), last)


def block_normals(key: np.ndarray, n: int, block_size: int, shape: tuple[int, ...],
                  blocks: range | None = None) -> np.ndarray:
    """Standard normals for samples ``0..n-1`` laid out as ``(n, *shape)``.

    Samples are grouped in fixed blocks of ``block_size``; block ``b`` is
    always drawn from substream ``b``.  Pass ``blocks`` to draw only a subset
    (the concatenation of all subsets equals the full draw).
    """
    n_blocks = -(-n // block_size)
    out = []
    for b in (blocks if blocks is not None else range(n_blocks)):
        m = min(block_size, n - b * block_size)
        out.append(substream(key, b).standard_normal((m, *shape)))
    if not out:
        return np.empty((0, *shape))
    return np.concatenate(out, axis=0)
