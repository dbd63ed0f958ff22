"""Deterministic, addressable random streams.

Every stream is a Philox generator keyed by ``(seed, *key)`` through
:class:`numpy.random.SeedSequence`. Draws of shape ``(count, dim)`` fill
row by row, so the first ``k`` rows never depend on ``count``: an ensemble of
size N is always the beginning of the same infinite sequence of members.
"""

from __future__ import annotations

import numpy as np

# stream tags used by the experiment drivers
INITIAL = 0
PERTURBED_DATA = 1
TRUTH = 2
OBS_NOISE = 3


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream addressed by ``key`` under ``seed``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def replicate_seed(seed: int, replicate: int) -> int:
    return int(seed) + int(replicate)


def member_normals(seed: int, key: tuple[int, ...], count: int, dim: int) -> np.ndarray:
    """Standard normals for members ``0..count-1`` as columns, shape ``(dim, count)``.

    Row ``k`` of the underlying draw is member ``k``; increasing ``count``
    appends members without touching earlier ones.
    """
    return stream(seed, *key).standard_normal((count, dim)).T


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
