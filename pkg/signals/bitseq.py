#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Bit-level primitives of the backscatter frame format.

A frame is a 63-bit m-sequence used for synchronization followed by a
57-bit payload. This module generates the m-sequences with a Fibonacci
shift register, assembles frames and scores bit windows against a
reference by counting agreements.
"""

import functools
import logging
from dataclasses import dataclass

import numpy as np

from utils.errors import ConfigError, InvalidSeedError, LengthMismatchError

logger = logging.getLogger(__name__)

SYNC_LENGTH = 63
DATA_LENGTH = 57
FRAME_LENGTH = SYNC_LENGTH + DATA_LENGTH


class BitSequence:
    """
    Immutable ordered sequence of bits.

    Backed by a read-only uint8 numpy array. Accepts any iterable of 0/1
    values or a string of '0'/'1' characters.
    """

    __slots__ = ('_bits',)

    def __init__(self, bits=()):
        if isinstance(bits, BitSequence):
            array = bits._bits
        elif isinstance(bits, str):
            if set(bits) - {'0', '1'}:
                raise ValueError(f"bit string may only contain '0' and '1': {bits!r}")
            array = np.frombuffer(bits.encode('ascii'), dtype=np.uint8) - ord('0')
        else:
            array = np.asarray(bits)
            if array.ndim != 1:
                raise ValueError("bit sequence must be one-dimensional")
            if array.size and not np.isin(array, (0, 1)).all():
                raise ValueError("bit sequence may only contain 0 and 1")
        array = np.array(array, dtype=np.uint8)
        array.setflags(write=False)
        self._bits = array

    @property
    def array(self):
        """Read-only uint8 view of the bits."""
        return self._bits

    def __len__(self):
        return self._bits.size

    def __iter__(self):
        return iter(self._bits.tolist())

    def __getitem__(self, index):
        if isinstance(index, slice):
            return BitSequence(self._bits[index])
        return int(self._bits[index])

    def __add__(self, other):
        return BitSequence(np.concatenate([self._bits, BitSequence(other)._bits]))

    def __eq__(self, other):
        if not isinstance(other, BitSequence):
            return NotImplemented
        return np.array_equal(self._bits, other._bits)

    def __hash__(self):
        return hash(self._bits.tobytes())

    def __repr__(self):
        text = self.to_string()
        if len(text) > 40:
            text = text[:37] + '...'
        return f"BitSequence('{text}', length={len(self)})"

    def __getstate__(self):
        return self.to_string()

    def __setstate__(self, state):
        BitSequence.__init__(self, state)

    def to_string(self):
        return (self._bits + ord('0')).tobytes().decode('ascii')

    def bipolar(self):
        """Map bits to +1.0 (bit 1) and -1.0 (bit 0)."""
        return 2.0 * self._bits.astype(np.float64) - 1.0

    def complement(self):
        return BitSequence(1 - self._bits)

    def flipped(self, positions):
        """Copy of the sequence with the bits at `positions` inverted."""
        bits = self._bits.copy()
        bits[np.asarray(list(positions), dtype=np.intp)] ^= 1
        return BitSequence(bits)

    def rotated(self, shift):
        """Cyclic left rotation by `shift` positions."""
        return BitSequence(np.roll(self._bits, -shift))


def as_bit_array(bits):
    """Return a uint8 array for a BitSequence, string or array-like of bits."""
    if isinstance(bits, BitSequence):
        return bits.array
    if isinstance(bits, np.ndarray) and bits.dtype == np.uint8:
        return bits
    return BitSequence(bits).array


def _normalize_seed(seed):
    if isinstance(seed, str):
        return tuple(int(c) for c in seed)
    if isinstance(seed, (int, np.integer)) and not isinstance(seed, bool):
        raise ConfigError("seed must be given as a bit string or a sequence of bits")
    return tuple(int(b) for b in seed)


@dataclass(frozen=True)
class LfsrSpec:
    """
    Fibonacci shift register description.

    Stage 1 receives the feedback, stage `degree` is the output. The feedback
    is the XOR of the stages listed in `taps`; taps (6, 5) encode X^6+X^5+1.

    Attributes:
        degree (int): Number of register stages.
        taps (tuple): Stage indices in 1..degree feeding the XOR.
        seed (tuple): Initial stage contents, stage 1 first.
        maximal (bool): Require the sequence period to be 2**degree - 1.
    """
    degree: int = 6
    taps: tuple = (6, 5)
    seed: tuple = (1, 1, 1, 1, 1, 1)
    maximal: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'taps', tuple(sorted({int(t) for t in self.taps}, reverse=True)))
        object.__setattr__(self, 'seed', _normalize_seed(self.seed))
        if self.degree < 2:
            raise ConfigError(f"register degree must be at least 2, got {self.degree}")
        if not self.taps or any(not 1 <= t <= self.degree for t in self.taps):
            raise ConfigError(f"taps must lie in 1..{self.degree}: {self.taps}")
        if self.degree not in self.taps:
            raise ConfigError(f"taps must include the last stage {self.degree}")
        if len(self.seed) != self.degree or any(b not in (0, 1) for b in self.seed):
            raise ConfigError(f"seed must hold {self.degree} bits, got {self.seed}")

    @property
    def period(self):
        return 2 ** self.degree - 1

    def with_seed(self, seed):
        return LfsrSpec(self.degree, self.taps, seed, self.maximal)


def lfsr_step(spec, state):
    """
    Advance the register by one clock.

    Args:
        spec (LfsrSpec): Register description.
        state (tuple): Current stage contents.

    Returns:
        tuple: (output bit, next state)
    """
    feedback = 0
    for tap in spec.taps:
        feedback ^= state[tap - 1]
    return state[-1], (feedback,) + state[:-1]


def lfsr_state_after(spec, steps):
    """Register contents after `steps` clocks starting from `spec.seed`."""
    state = spec.seed
    for _ in range(steps):
        _, state = lfsr_step(spec, state)
    return state


def generate_m_sequence(spec, length=None):
    """
    Generate the output sequence of a shift register.

    Args:
        spec (LfsrSpec): Register description.
        length (int, optional): Number of bits. Defaults to one period.

    Returns:
        BitSequence: The generated bits.

    Raises:
        InvalidSeedError: If the seed is all zeros.
        ConfigError: If `spec.maximal` is set and the taps do not give a maximal period.
    """
    if not any(spec.seed):
        raise InvalidSeedError("shift register seed must not be all zeros")

    length = spec.period if length is None else int(length)
    if length < 0:
        raise ValueError("length must not be negative")

    state = spec.seed
    bits = np.empty(max(length, spec.period), dtype=np.uint8)
    for i in range(bits.size):
        bits[i], state = lfsr_step(spec, state)
        if spec.maximal and i < spec.period - 1 and state == spec.seed:
            raise ConfigError(
                f"taps {spec.taps} are not primitive: period {i + 1} < {spec.period}")
    return BitSequence(bits[:length])


@functools.lru_cache(maxsize=None)
def default_sync_sequence():
    """The 63-bit synchronization word: X^6+X^5+1 from an all-ones seed."""
    return generate_m_sequence(LfsrSpec())


@functools.lru_cache(maxsize=None)
def default_payload():
    """
    The default 57-bit payload.

    Taken from an m-sequence of a different primitive polynomial
    (X^6+X^4+X^3+X+1) so no cyclic shift of the sync word sits inside it.
    """
    spec = LfsrSpec(taps=(6, 5, 3, 2), seed='100000')
    return generate_m_sequence(spec)[:DATA_LENGTH]


def build_frame(data, sync=None):
    """
    Concatenate the sync word and a payload.

    Args:
        data: 57 payload bits.
        sync: Sync word, defaults to the 63-bit m-sequence.

    Returns:
        BitSequence: sync followed by data.

    Raises:
        LengthMismatchError: If the payload is not 57 bits long.
    """
    data = BitSequence(data)
    if len(data) != DATA_LENGTH:
        raise LengthMismatchError(f"payload must be {DATA_LENGTH} bits, got {len(data)}")
    sync = default_sync_sequence() if sync is None else BitSequence(sync)
    return sync + data


def _check_lengths(a, b):
    if a.size != b.size:
        raise LengthMismatchError(f"sequence lengths differ: {a.size} != {b.size}")


def agreement_correlation(window, reference):
    """
    Fraction of positions where `window` and `reference` agree.

    Raises:
        LengthMismatchError: If lengths differ or both are empty.
    """
    a, b = as_bit_array(window), as_bit_array(reference)
    _check_lengths(a, b)
    if a.size == 0:
        raise LengthMismatchError("cannot correlate empty sequences")
    return float(np.count_nonzero(a == b)) / a.size


def hamming_errors(a, b):
    """Number of positions where two equal-length bit sequences differ."""
    a, b = as_bit_array(a), as_bit_array(b)
    _check_lengths(a, b)
    return int(np.count_nonzero(a != b))


def sliding_agreements(stream, reference):
    """
    Agreement count of `reference` against every full window of `stream`.

    Returns:
        np.ndarray: int array of length len(stream) - len(reference) + 1
            (empty when the stream is shorter than the reference).
    """
    stream, reference = as_bit_array(stream), as_bit_array(reference)
    n = stream.size - reference.size + 1
    if n <= 0:
        return np.zeros(0, dtype=np.int64)
    pm_stream = 2.0 * stream - 1.0
    pm_reference = 2.0 * reference - 1.0
    score = np.correlate(pm_stream, pm_reference, mode='valid')
    return np.rint((reference.size + score) / 2.0).astype(np.int64)


def circular_autocorrelation(sequence):
    """Periodic autocorrelation of the +/-1 mapped sequence at every lag."""
    x = BitSequence(sequence).bipolar()
    spectrum = np.fft.fft(x)
    return np.rint(np.fft.ifft(spectrum * np.conj(spectrum)).real).astype(np.int64)


def frame_correlation_profile(frame, sync=None):
    """
    Agreement of the sync word with the head of every cyclic shift of a frame.

    Entry k scores frame.rotated(k)[:len(sync)] against the sync word, the
    view a receiver gets when it locks k bits late on a repeated frame.
    """
    frame = as_bit_array(frame)
    sync = as_bit_array(default_sync_sequence() if sync is None else sync)
    if frame.size < sync.size:
        raise LengthMismatchError("frame is shorter than the sync word")
    doubled = np.concatenate([frame, frame[:sync.size - 1]])
    return sliding_agreements(doubled, sync)[:frame.size] / sync.size


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    sync = default_sync_sequence()
    frame = build_frame(default_payload())
    print(f"sync:    {sync.to_string()}")
    print(f"payload: {default_payload().to_string()}")
    print(f"frame length: {len(frame)}")
    print(f"peak of frame profile: {frame_correlation_profile(frame).max():.3f}")
