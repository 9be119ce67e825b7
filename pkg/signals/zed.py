#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Zero-energy device (ZED) modulator.

The ZED toggles its antenna between two reflection states. Bit 0 is a
square wave at f0, bit 1 a square wave at f1, each held for one symbol
duration; the square wave restarts in the 'on' state at every symbol.
"""

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from signals.bitseq import BitSequence
from utils.errors import AliasingError, ConfigError, LengthMismatchError

logger = logging.getLogger(__name__)

_EPS = 1e-6


@dataclass(frozen=True)
class FskConfig:
    """
    Backscatter FSK parameters.

    Attributes:
        f0 (float): Toggle frequency for bit 0, Hz.
        f1 (float): Toggle frequency for bit 1, Hz.
        symbol_duration (float): Seconds per bit.
        reflection_states (tuple): (s_off, s_on) reflection coefficients, |s| <= 1.
        inter_frame_gap (float): Seconds of s_off between repeated frames.
        clock_skew_ppm (float): ZED clock error; positive values run slow.
    """
    f0: float = 125.0
    f1: float = 500.0
    symbol_duration: float = 0.04
    reflection_states: tuple = (0.0, 1.0)
    inter_frame_gap: float = 0.0
    clock_skew_ppm: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'reflection_states',
                           tuple(float(s) for s in self.reflection_states))
        if self.f0 <= 0 or self.f1 <= 0 or self.f0 == self.f1:
            raise ConfigError(f"FSK tones must be positive and distinct: {self.f0}, {self.f1}")
        if self.symbol_duration <= 0:
            raise ConfigError("symbol_duration must be positive")
        for f in (self.f0, self.f1):
            cycles = f * self.symbol_duration
            if abs(cycles - round(cycles)) > 1e-9:
                raise ConfigError(f"{f} Hz does not complete whole cycles in one symbol")
        if len(self.reflection_states) != 2:
            raise ConfigError("reflection_states must hold (s_off, s_on)")
        if any(abs(s) > 1 for s in self.reflection_states):
            raise ConfigError("reflection coefficients must have magnitude at most 1")
        if self.inter_frame_gap < 0:
            raise ConfigError("inter_frame_gap must not be negative")

    @classmethod
    def bipolar(cls, **kwargs):
        return cls(reflection_states=(-1.0, 1.0), **kwargs)

    @property
    def s_off(self):
        return self.reflection_states[0]

    @property
    def s_on(self):
        return self.reflection_states[1]

    @property
    def skew_factor(self):
        return 1.0 + self.clock_skew_ppm * 1e-6

    def frame_duration(self, n_bits):
        return n_bits * self.symbol_duration * self.skew_factor

    def frame_period(self, n_bits):
        return self.frame_duration(n_bits) + self.inter_frame_gap

    def check_time_base(self, time_base):
        """
        Raises:
            AliasingError: If `time_base` is below twice the higher tone.
        """
        highest = max(self.f0, self.f1)
        if time_base < 2 * highest:
            raise AliasingError(f"time base {time_base} Hz cannot carry a {highest} Hz tone")


@dataclass(frozen=True, eq=False)
class ReflectionWaveform:
    """
    Reflection coefficient sampled at `time_base`, sample 0 at time 0.

    Outside the sampled span the ZED rests in s_off.
    """
    states: np.ndarray
    time_base: float
    s_off: float = 0.0
    frame_starts: tuple = ()
    frame_duration: float = 0.0
    complete_frames: int = 0

    @property
    def duration(self):
        return self.states.size / self.time_base

    @property
    def partial_frames(self):
        return len(self.frame_starts) - self.complete_frames

    def _lookup(self, index):
        index = np.asarray(index, dtype=np.int64)
        inside = (index >= 0) & (index < self.states.size)
        out = np.full(index.shape, self.s_off, dtype=np.float64)
        out[inside] = self.states[index[inside]]
        return out

    def value_at(self, times):
        """Reflection coefficient at absolute times (seconds)."""
        times = np.asarray(times, dtype=np.float64)
        return self._lookup(np.floor(times * self.time_base + 1e-9))

    def value_at_samples(self, sample_index, sample_rate):
        """Reflection coefficient at integer sample indices of a faster clock."""
        sample_index = np.asarray(sample_index, dtype=np.int64)
        return self._lookup(np.floor(sample_index * self.time_base / sample_rate + 1e-9))

    def to_csv(self, path):
        """Write (time_s, reflection) rows."""
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['time_s', 'reflection'])
            for n, state in enumerate(self.states.tolist()):
                writer.writerow([format(n / self.time_base, '.10g'), format(state, '.10g')])


def _render(bits, cfg, time_base, n_samples, start_time=0.0):
    """
    Reflection state of every sample n in [0, n_samples) for frames repeated
    from `start_time` on.

    Works in units of samples so integral symbol lengths stay exact.
    """
    bits = BitSequence(bits).array
    skew = cfg.skew_factor
    symbol_samples = cfg.symbol_duration * skew * time_base
    frame_samples = bits.size * symbol_samples
    period_samples = frame_samples + cfg.inter_frame_gap * time_base

    u = np.arange(n_samples, dtype=np.float64) - start_time * time_base
    states = np.full(n_samples, cfg.s_off)
    active = u >= -_EPS
    u = np.maximum(u, 0.0)
    repetition = np.floor(u / period_samples + _EPS / period_samples)
    within = u - repetition * period_samples
    active &= within < frame_samples - _EPS

    symbol = np.minimum(np.floor((within + _EPS) / symbol_samples), bits.size - 1).astype(np.int64)
    offset = within - symbol * symbol_samples
    freq = np.where(bits[symbol] == 1, cfg.f1, cfg.f0) / skew
    half_cycles = np.floor(2.0 * offset * freq / time_base + _EPS)
    on = (half_cycles % 2) == 0
    states[active & on] = cfg.s_on
    return states


def modulate_frame(frame, cfg, time_base):
    """
    Reflection waveform of a single frame.

    Args:
        frame: Bits to send.
        cfg (FskConfig): Modulation parameters.
        time_base (float): Output sample rate, Hz.

    Returns:
        ReflectionWaveform: len(frame) * symbol_duration seconds of states.

    Raises:
        AliasingError: If time_base < 2 * max(f0, f1).
        LengthMismatchError: If the frame is empty.
    """
    frame = BitSequence(frame)
    cfg.check_time_base(time_base)
    if len(frame) == 0:
        raise LengthMismatchError("cannot modulate an empty frame")
    n_samples = int(round(cfg.frame_duration(len(frame)) * time_base))
    states = _render(frame, cfg, time_base, n_samples)
    return ReflectionWaveform(states, time_base, cfg.s_off, frame_starts=(0.0,),
                              frame_duration=cfg.frame_duration(len(frame)),
                              complete_frames=1)


def repeat_frames(frame, cfg, total_duration, time_base, start_time=0.0):
    """
    Repeat a frame, separated by the inter-frame gap, until `total_duration`.

    The ZED starts its first frame at `start_time`; a final frame cut by the
    end of the observation is kept as a partial frame.

    Returns:
        ReflectionWaveform: States covering [0, total_duration).
    """
    frame = BitSequence(frame)
    cfg.check_time_base(time_base)
    if len(frame) == 0:
        raise LengthMismatchError("cannot modulate an empty frame")
    if total_duration <= 0:
        raise ConfigError("total_duration must be positive")

    n_samples = int(math.ceil(total_duration * time_base - 1e-9))
    states = _render(frame, cfg, time_base, n_samples, start_time)

    duration = cfg.frame_duration(len(frame))
    period = cfg.frame_period(len(frame))
    starts, complete = [], 0
    start = start_time
    while start < total_duration - 1e-9:
        starts.append(start)
        if start + duration <= total_duration + 1e-9:
            complete += 1
        start = start_time + len(starts) * period

    logger.debug("ZED schedule: %d complete frames, %d partial", complete, len(starts) - complete)
    return ReflectionWaveform(states, time_base, cfg.s_off, frame_starts=tuple(starts),
                              frame_duration=duration, complete_frames=complete)


if __name__ == "__main__":
    from signals.bitseq import build_frame, default_payload

    frame = build_frame(default_payload())
    waveform = repeat_frames(frame, FskConfig(), 48.0, 2000.0)
    print(f"{waveform.states.size} samples, {waveform.complete_frames} complete frames")
    print(f"first symbol: {waveform.states[:80].astype(int).tolist()}")
