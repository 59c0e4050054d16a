"""Seeded random streams used everywhere in the package.

All randomness flows through the Philox-4x64-10 counter-based bit generator,
keyed directly by a 64-bit seed (plus an optional stream index), so draw
sequences are reproducible across platforms and processes.  Gaussian variates
are produced by the Box-Muller transform applied to consecutive uniform
pairs, rather than numpy's ziggurat, to keep the normal stream pinned to the
documented uniform stream.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator keyed by (seed, stream)."""
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def uniform(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniform [0, 1) doubles drawn in row-major order."""
    return rng.random(shape)


def gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normal draws via Box-Muller with deterministic pairing.

    Pair i consumes uniforms (2i, 2i+1) of the stream; the two resulting
    normals are laid out consecutively in the flattened output.  For an odd
    number of variates the trailing normal of the last pair is dropped.
    """
    shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    n = int(np.prod(shape, dtype=np.int64)) if shape else 1
    npairs = (n + 1) // 2
    u = rng.random((npairs, 2))
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))  # 1 - u in (0, 1], so log is finite
    theta = 2.0 * np.pi * u[:, 1]
    z = np.empty(2 * npairs)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    out = z[:n]
    return out.reshape(shape) if shape else float(out[0])
