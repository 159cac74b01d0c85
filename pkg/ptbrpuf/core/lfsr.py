"""
Galois LFSR challenge generator

The register shifts right once per output bit. The emitted bit is the old
least significant bit; when it is 1 the tap mask is XORed into the shifted
state. Challenges are cut from the bit stream m bits at a time.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidParameterError

DEFAULT_WIDTH = 64
DEFAULT_TAPS = 0xD800000000000000


@njit(cache=True)
def _galois_bits(state, taps, count):
    one = np.uint64(1)
    bits = np.empty(count, dtype=np.uint8)
    for i in range(count):
        bit = state & one
        state = state >> one
        if bit:
            state = state ^ taps
        bits[i] = np.uint8(bit)
    return bits, state


@dataclass(frozen=True)
class LfsrSpec:
    """Provenance of a challenge stream: register width, tap mask and initial state"""
    width: int = DEFAULT_WIDTH
    taps: int = DEFAULT_TAPS
    seed: int = 1


class GaloisLfsr:
    def __init__(self, width: int, taps: int, state: int):
        if not 4 <= width <= 64:
            raise InvalidParameterError("width", f"register width must lie in 4..64, got {width}")
        mask = (1 << width) - 1
        if state & mask == 0:
            raise InvalidParameterError("state", "LFSR state must be nonzero")
        self.width = width
        self.taps = taps & mask
        self.state = state & mask

    @classmethod
    def from_spec(cls, spec: LfsrSpec) -> "GaloisLfsr":
        return cls(spec.width, spec.taps, spec.seed)

    def step(self) -> int:
        """Advances one bit and returns the emitted bit"""
        bit = self.state & 1
        self.state >>= 1
        if bit:
            self.state ^= self.taps
        return bit

    def bits(self, count: int) -> np.ndarray:
        bits, state = _galois_bits(np.uint64(self.state), np.uint64(self.taps), count)
        self.state = int(state)
        return bits

    def period(self, limit: int | None = None) -> int:
        """Steps until the state repeats; for checking small registers exhaustively"""
        limit = limit if limit is not None else 1 << self.width
        start, state = self.state, self.state
        for steps in range(1, limit + 1):
            bit = state & 1
            state >>= 1
            if bit:
                state ^= self.taps
            if state == start:
                return steps
        raise InvalidParameterError("limit", f"no period found within {limit} steps")


def lfsr_generate(lfsr: GaloisLfsr, count: int, m: int) -> np.ndarray:
    """
    Generates `count` distinct challenges of width m, shape (count, m).

    Repeated challenges are dropped and replaced by fresh ones from the stream,
    keeping first-occurrence order.
    """
    if count < 1:
        raise InvalidParameterError("count", f"must be >= 1, got {count}")
    if lfsr.width < 8:
        raise InvalidParameterError("width", f"challenge generation needs a register of at least 8 bits, got {lfsr.width}")
    if m < 1:
        raise InvalidParameterError("m", f"challenge width must be >= 1, got {m}")

    challenges = np.empty((0, m), dtype=np.uint8)
    seen = set()
    missing = count
    stalled, max_stalled = 0, 1 << min(lfsr.width, 16)
    while missing:
        batch = lfsr.bits(missing * m).reshape(missing, m)
        keep = []
        for row, challenge in enumerate(batch):
            key = challenge.tobytes()
            if key not in seen:
                seen.add(key)
                keep.append(row)
        stalled = 0 if keep else stalled + 1
        if stalled > max_stalled:
            raise InvalidParameterError("count", f"the LFSR stream holds fewer than {count} distinct challenges of width {m}")
        challenges = np.concatenate([challenges, batch[keep]])
        missing = count - challenges.shape[0]
    return challenges
