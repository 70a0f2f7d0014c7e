"""Counter-based random streams for reproducible path generation.

Every sample path draws its Brownian increments from a Philox stream
addressed by (seed, iteration, sample index).  The stream layout is chosen
so that the same increments come out whether samples are generated one at a
time or as a contiguous block:

* the Philox key is (seed, iteration);
* sample ``n`` owns the counter blocks ``[n*B, (n+1)*B)`` where ``B`` is the
  number of 4-word Philox blocks needed for one path (``steps*dim`` values,
  padded up to a block boundary).

Normals are produced by inverting the standard normal CDF on uniforms built
from raw 64-bit words, one word per value, so consumption is position-exact
(ziggurat-style generators consume a variable number of words and would
break the block addressing).
"""

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

_WORDS_PER_BLOCK = 4
_INV_2_53 = 2.0**-53


def _blocks_per_path(num_values: int) -> int:
    return -(-num_values // _WORDS_PER_BLOCK)


def _key(seed: int, iteration: int) -> np.ndarray:
    return np.array(
        [np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(iteration & 0xFFFFFFFFFFFFFFFF)],
        dtype=np.uint64,
    )


def normal_block(
    seed: int,
    iteration: int,
    first_index: int,
    count: int,
    steps: int,
    dim: int,
    dt: float,
) -> np.ndarray:
    """Brownian increments for samples ``first_index .. first_index+count-1``.

    Returns an array of shape ``(count, steps, dim)`` whose entries are
    N(0, dt) draws.  Bit-identical to generating each sample separately.
    """
    values = steps * dim
    bpp = _blocks_per_path(values)
    bits = Philox(key=_key(seed, iteration), counter=first_index * bpp)
    raw = bits.random_raw(count * bpp * _WORDS_PER_BLOCK)
    raw = raw.reshape(count, bpp * _WORDS_PER_BLOCK)[:, :values]
    # uniforms strictly inside (0, 1): half-ulp offset keeps ndtri finite
    u = (raw >> np.uint64(11)).astype(np.float64) * _INV_2_53 + 0.5 * _INV_2_53
    z = ndtri(u)
    return (z * np.sqrt(dt)).reshape(count, steps, dim)


def sample_increments(
    seed: int, iteration: int, index: int, steps: int, dim: int, dt: float
) -> np.ndarray:
    """Increments (steps, dim) for one sample; replays exactly."""
    return normal_block(seed, iteration, index, 1, steps, dim, dt)[0]
