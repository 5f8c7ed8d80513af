"""Counter-based random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from a root seed and whose counter block is indexed by a stream
number, so stream ``k`` is the same sequence no matter how work is split
across processes.
"""

from __future__ import annotations

import numpy as np

# Paths are generated in fixed-size blocks, one stream per block. Changing
# this value changes every sampled path, so it is part of the reproducibility
# contract.
PATHS_PER_BLOCK = 256

# Purpose tags keep independent consumers of the same root seed apart.
PURPOSE_PATHS = 0
PURPOSE_BRIDGE = 1
PURPOSE_BOUNDARY = 2
PURPOSE_REFLECT = 3
PURPOSE_CLOUD = 4


def _key(seed: int, purpose: int) -> np.ndarray:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(purpose),))
    return ss.generate_state(2, dtype=np.uint64)


def stream(seed: int, index: int, purpose: int = PURPOSE_PATHS) -> np.random.Generator:
    """Generator for stream ``index`` under root ``seed``.

    The stream index occupies the high words of the 256-bit Philox counter,
    which leaves 2**128 draws per stream before streams could overlap.
    """
    if index < 0:
        raise ValueError(f"stream index must be non-negative, got {index}")
    counter = np.array([0, 0, int(index), int(purpose)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=_key(seed, purpose), counter=counter))


def block_normals(seed: int, n_items: int, shape: tuple[int, ...],
                  purpose: int = PURPOSE_PATHS, block: int = PATHS_PER_BLOCK,
                  first_item: int = 0) -> np.ndarray:
    """Standard normals of shape ``(n_items, *shape)``.

    Item ``i`` always receives the same numbers: it lives in block
    ``i // block`` at position ``i % block``, and whole blocks are drawn.
    """
    return _blocked(seed, n_items, shape, purpose, block, first_item, "normal")


def block_uniforms(seed: int, n_items: int, shape: tuple[int, ...],
                   purpose: int = PURPOSE_BRIDGE, block: int = PATHS_PER_BLOCK,
                   first_item: int = 0) -> np.ndarray:
    """Uniforms on (0, 1) with the same item-to-stream layout as :func:`block_normals`."""
    return _blocked(seed, n_items, shape, purpose, block, first_item, "uniform")


def _blocked(seed, n_items, shape, purpose, block, first_item, kind):
    out = np.empty((n_items, *shape))
    if n_items == 0:
        return out
    last = first_item + n_items
    for b in range(first_item // block, (last - 1) // block + 1):
        gen = stream(seed, b, purpose)
        if kind == "normal":
            chunk = gen.standard_normal((block, *shape))
        else:
            # open interval: logs of these values appear downstream
            chunk = 1.0 - gen.random((block, *shape))
        lo = max(first_item, b * block)
        hi = min(last, (b + 1) * block)
        out[lo - first_item:hi - first_item] = chunk[lo - b * block:hi - b * block]
    return out
