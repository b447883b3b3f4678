"""Counter-based Philox4x64-10 generator usable inside compiled kernels.

Every draw is a pure function of (counter, key), so a sample's random
numbers do not depend on which thread or batch produced it. The counter
words are laid out as (block, electron, sample, tag).
"""
import numpy as np

from ._accel import njit

ROUNDS = 10
_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = 0x9E3779B97F4A7C15
_W1 = 0xBB67AE8584CAA73B
_MASK64 = (1 << 64) - 1
_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53

TAG_PATH = 0
TAG_INIT = 1


def key_schedule(key) -> np.ndarray:
    """Round keys for a 128-bit key given as two ints, shape (ROUNDS, 2)."""
    k0, k1 = int(key[0]) & _MASK64, int(key[1]) & _MASK64
    out = np.empty((ROUNDS, 2), dtype=np.uint64)
    for r in range(ROUNDS):
        out[r, 0] = (k0 + r * _W0) & _MASK64
        out[r, 1] = (k1 + r * _W1) & _MASK64
    return out


def seed_keys(seed: int) -> np.ndarray:
    """Round keys derived from an integer seed via numpy's SeedSequence."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    state = np.random.SeedSequence(seed).generate_state(2, np.uint64)
    return key_schedule((int(state[0]), int(state[1])))


@njit
def _mulhilo(a, b):
    # 64x64 -> 128 via 32-bit halves; no intermediate overflows.
    a_lo = a & _M32
    a_hi = a >> _S32
    b_lo = b & _M32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    hl = a_hi * b_lo
    lh = a_lo * b_hi
    hh = a_hi * b_hi
    cross = (ll >> _S32) + (hl & _M32) + lh
    hi = hh + (hl >> _S32) + (cross >> _S32)
    lo = ((cross & _M32) << _S32) | (ll & _M32)
    return hi, lo


@njit
def philox4x64(c0, c1, c2, c3, keys):
    for r in range(ROUNDS):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ keys[r, 0], lo1, hi0 ^ c3 ^ keys[r, 1], lo0
    return c0, c1, c2, c3


@njit
def to_unit_open(x):
    """Map a 64-bit word to (0, 1]."""
    return (float(x >> _S11) + 1.0) * _TWO_M53


@njit
def to_unit(x):
    """Map a 64-bit word to [0, 1)."""
    return float(x >> _S11) * _TWO_M53


@njit
def fill_block(buf, block, stream, sample, tag, keys):
    r0, r1, r2, r3 = philox4x64(np.uint64(block), np.uint64(stream),
                                np.uint64(sample), np.uint64(tag), keys)
    buf[0] = r0
    buf[1] = r1
    buf[2] = r2
    buf[3] = r3


def raw_block(counter, keys) -> np.ndarray:
    """Four raw words for an explicit counter, for testing and inspection."""
    c = [np.uint64(int(v) & _MASK64) for v in counter]
    return np.array(philox4x64(c[0], c[1], c[2], c[3], keys), dtype=np.uint64)


class SubstreamRNG:
    """Python-side view of one (stream, sample, tag) substream.

    Used by the reference (non-kernel) code paths. Draw order matches the
    kernels: blocks are consumed four words at a time.
    """

    def __init__(self, keys: np.ndarray, stream: int, sample: int, tag: int = TAG_PATH):
        self.keys = keys
        self.stream = stream
        self.sample = sample
        self.tag = tag
        self._block = 0
        self._buf = np.zeros(4, dtype=np.uint64)
        self._pos = 4

    def _next_word(self):
        if self._pos == 4:
            fill_block(self._buf, self._block, self.stream, self.sample, self.tag, self.keys)
            self._block += 1
            self._pos = 0
        w = self._buf[self._pos]
        self._pos += 1
        return w

    def uniform(self) -> float:
        return to_unit(self._next_word())

    def uniform_open(self) -> float:
        return to_unit_open(self._next_word())
