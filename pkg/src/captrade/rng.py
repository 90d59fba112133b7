"""Counter-based normal draws keyed by (seed, path, step, channel).

Each path owns a Philox stream whose key is derived from (seed, path); the
Philox counter then walks step-major, channel-minor.  A path's increments
therefore do not depend on which other paths are simulated, or in what order.
"""

from __future__ import annotations

import numpy as np


def path_generator(seed: int, path: int) -> np.random.Generator:
    key = np.random.SeedSequence([int(seed), int(path)]).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def path_normals(seed: int, path: int, steps: int, channels: int) -> np.ndarray:
    return path_generator(seed, path).standard_normal((steps, channels))


def block_normals(
    seed: int, paths: range, steps: int, channels: int, antithetic: bool = False
) -> np.ndarray:
    """Standard normals of shape (len(paths), steps, channels).

    With ``antithetic`` the pair (2k, 2k+1) shares stream k with opposite signs.
    """
    out = np.empty((len(paths), steps, channels))
    for row, p in enumerate(paths):
        if antithetic:
            out[row] = path_normals(seed, p // 2, steps, channels)
            if p % 2:
                np.negative(out[row], out=out[row])
        else:
            out[row] = path_normals(seed, p, steps, channels)
    return out
