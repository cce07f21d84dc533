"""Addressable random streams.

Replicates are generated in fixed-size blocks.  Block ``b`` of stream ``s``
under seed ``seed`` always draws from ``Philox(SeedSequence(seed, spawn_key=(s, b)))``,
so the output does not depend on how many workers share the blocks.
"""

import secrets
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK_ROWS = 4096
SEED_MAX = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def fresh_seed() -> int:
    return secrets.randbits(64)


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the sub-stream addressed by ``key`` under ``seed``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def generate_rows(seed, stream, m_rows, n_normals, transform, workers=1):
    """Stack ``transform(Z_b)`` over blocks, Z_b standard normal of shape (rows_b, n_normals).

    ``transform`` must map each row independently.  Blocks are concatenated in
    index order, so the result is bitwise identical for any ``workers``.
    """
    m_rows = int(m_rows)
    if m_rows < 0:
        raise ValueError("m_rows must be nonnegative")
    starts = list(range(0, m_rows, BLOCK_ROWS))

    def one(b):
        rows = min(BLOCK_ROWS, m_rows - starts[b])
        z = substream(seed, stream, b).standard_normal((rows, n_normals))
        return transform(z)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, range(len(starts))))
    else:
        parts = [one(b) for b in range(len(starts))]
    if not parts:
        return None
    return np.concatenate(parts, axis=0)
