"""Counter-based random streams.

Every random number is addressed by ``(seed, stream_id, block)``, where a
block is one Philox-4x64 output of four 64-bit words.  Nothing is kept in
global state: a stream is a small immutable value and advancing it returns
a new value.  Concurrent trials therefore reproduce bit-for-bit no matter
how they are scheduled.

Normals use Box-Muller on pairs of uniforms, so one block yields two
normals.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterDomainError

_MASK64 = (1 << 64) - 1
_WORDS_PER_BLOCK = 4


def _counter_words(counter: int) -> np.ndarray:
    return np.array([(counter >> (64 * k)) & _MASK64 for k in range(4)], dtype=np.uint64)


def _uniforms(seed: int, stream_id: int, block: int, n_blocks: int) -> np.ndarray:
    """``4 * n_blocks`` uniforms in [0, 1) starting at ``block``."""
    key = np.array([seed & _MASK64, stream_id & _MASK64], dtype=np.uint64)
    bitgen = np.random.Philox(key=key, counter=_counter_words(block))
    return np.random.Generator(bitgen).random(_WORDS_PER_BLOCK * n_blocks)


def _box_muller(u: np.ndarray) -> np.ndarray:
    u1 = u[0::2]
    u2 = u[1::2]
    # 1 - u lies in (0, 1], so the log is finite
    rad = np.sqrt(-2.0 * np.log1p(-u1))
    ang = 2.0 * np.pi * u2
    out = np.empty(u.size)
    out[0::2] = rad * np.cos(ang)
    out[1::2] = rad * np.sin(ang)
    return out


@dataclass(frozen=True)
class RngStream:
    """Position in a counter-based random stream.

    ``seed`` is the 64-bit master key, ``stream_id`` a 64-bit stream
    selector (typically a trial index) and ``counter`` the block position.
    Counters live in a 256-bit space; :meth:`substream` hands out disjoint
    2**128-block regions for distinct purposes within one stream.
    """

    seed: int
    stream_id: int = 0
    counter: int = 0

    def substream(self, purpose: int) -> "RngStream":
        return replace(self, counter=(int(purpose) + 1) << 128)

    def advance(self, n_blocks: int) -> "RngStream":
        return replace(self, counter=self.counter + int(n_blocks))

    def uniforms(self, size: int) -> tuple[np.ndarray, "RngStream"]:
        n_blocks = -(-int(size) // _WORDS_PER_BLOCK)
        u = _uniforms(self.seed, self.stream_id, self.counter, n_blocks)
        return u[:size], self.advance(n_blocks)

    def generator(self) -> np.random.Generator:
        """A numpy Generator positioned at this stream's counter.

        Handy for bulk work; the caller owns the returned generator.
        """
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=_counter_words(self.counter)))


def normal(stream: RngStream, size=None):
    """Standard normal draws and the advanced stream.

    ``size=None`` returns a Python float.
    """
    shape = () if size is None else size
    count = int(np.prod(shape, dtype=np.int64))
    u, nxt = stream.uniforms(2 * (-(-count // 2)))
    z = _box_muller(u)[:count]
    if size is None:
        return float(z[0]), nxt
    return z.reshape(shape), nxt


def normal_blocks(seed: int, stream_id: int, start: int, stop: int) -> np.ndarray:
    """Two normals per block for blocks ``start .. stop-1``; shape (stop-start, 2).

    Row ``k`` depends only on ``(seed, stream_id, start + k)``, so any
    chunking of a block range gives identical rows.
    """
    u = _uniforms(seed, stream_id, start, stop - start)
    # keep the first two uniforms of each block
    u = u.reshape(-1, 4)[:, :2].ravel()
    return _box_muller(u).reshape(-1, 2)


def mvn_zero_mean(stream: RngStream, sigma, size: int = 1):
    """Draws from N(0, sigma) via the Cholesky factor; returns (samples, stream).

    Samples have shape (size, l).
    """
    sigma = np.asarray(sigma, dtype=float)
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ParameterDomainError("covariance is not positive definite") from exc
    l = sigma.shape[0]
    z, nxt = normal(stream, (size, l))
    return z @ chol.T, nxt


def uniform_sphere(stream: RngStream, l: int, size: int | None = None):
    """Uniform draws on the unit sphere in R^l (normalized normals)."""
    if l < 1:
        raise ParameterDomainError("dimension must be at least 1")
    rows = 1 if size is None else size
    z, nxt = normal(stream, (rows, l))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    # a zero row has probability zero; guard anyway
    norms[norms == 0.0] = 1.0
    u = z / norms
    return (u[0] if size is None else u), nxt
