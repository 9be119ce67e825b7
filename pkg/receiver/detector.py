#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Non-coherent FSK detection on the channel estimate magnitude.

A symbol window of |h| is mean-removed and its DFT is evaluated at the
bins of the two ZED tones; the stronger bin decides the bit. Since the
symbol timing is unknown, hard decisions are produced for several window
offsets spread over one symbol.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from signals.bitseq import DATA_LENGTH, BitSequence, default_sync_sequence
from utils.errors import AliasingError, ConfigError, InsufficientDataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReceiverConfig:
    """
    Detection and synchronization settings.

    Attributes:
        sync (BitSequence): Synchronization word.
        threshold (float): Minimum agreement fraction to accept a sync window.
        symbol_samples (int): Estimates per ZED symbol (80 at 2000 Hz, 40 ms).
        bin_f0 (int): DFT bin of the bit-0 tone within one symbol window.
        bin_f1 (int): DFT bin of the bit-1 tone.
        offset_candidates (int): Window offsets evaluated per symbol.
        data_length (int): Payload bits following the sync word.
    """
    sync: BitSequence = field(default_factory=default_sync_sequence)
    threshold: float = 0.8
    symbol_samples: int = 80
    bin_f0: int = 5
    bin_f1: int = 20
    offset_candidates: int = 8
    data_length: int = DATA_LENGTH

    def __post_init__(self):
        object.__setattr__(self, 'sync', BitSequence(self.sync))
        if not 0 < self.threshold <= 1:
            raise ConfigError(f"threshold must lie in (0, 1], got {self.threshold}")
        if len(self.sync) == 0:
            raise ConfigError("sync word must not be empty")
        nyquist = self.symbol_samples / 2
        for b in (self.bin_f0, self.bin_f1):
            if not 0 < b < nyquist:
                raise AliasingError(f"tone bin {b} is outside (0, {nyquist})")
        if self.bin_f0 == self.bin_f1:
            raise ConfigError("tone bins must differ")
        if not 1 <= self.offset_candidates <= self.symbol_samples:
            raise ConfigError("offset_candidates must lie in 1..symbol_samples")

    @classmethod
    def from_fsk(cls, fsk, rate, **kwargs):
        """
        Derive window length and tone bins from the modulation and estimate rate.

        Raises:
            AliasingError: If the rate is below twice the higher tone.
            ConfigError: If a tone does not fall on a DFT bin of the symbol window.
        """
        fsk.check_time_base(rate)
        symbol_samples = int(round(fsk.symbol_duration * rate))
        if abs(symbol_samples - fsk.symbol_duration * rate) > 1e-6:
            raise ConfigError("symbol duration must span a whole number of estimates")
        bins = []
        for f in (fsk.f0, fsk.f1):
            exact = f * symbol_samples / rate
            if abs(exact - round(exact)) > 1e-6:
                raise ConfigError(f"{f} Hz does not fall on a DFT bin of the symbol window")
            bins.append(int(round(exact)))
        return cls(symbol_samples=symbol_samples, bin_f0=bins[0], bin_f1=bins[1], **kwargs)

    @property
    def sync_length(self):
        return len(self.sync)

    @property
    def frame_length(self):
        return self.sync_length + self.data_length

    @property
    def required_matches(self):
        """Smallest agreement count meeting the threshold."""
        return int(np.ceil(self.threshold * self.sync_length - 1e-9))

    @property
    def candidate_offsets(self):
        """Window start offset, in estimates, of every candidate."""
        return tuple(int(round(i * self.symbol_samples / self.offset_candidates))
                     for i in range(self.offset_candidates))


def _tone_basis(cfg):
    n = np.arange(cfg.symbol_samples)
    bins = np.array([cfg.bin_f0, cfg.bin_f1])
    return np.exp(-2j * np.pi * np.outer(n, bins) / cfg.symbol_samples)


def decide_windows(windows, cfg):
    """
    Decide a batch of magnitude windows.

    Args:
        windows (np.ndarray): (m, symbol_samples) real magnitudes.

    Returns:
        tuple: (bits uint8 array, confidences float array), each of length m.
            Ties go to bit 0; confidence is |E0 - E1| / (E0 + E1), 0 when both vanish.
    """
    centered = windows - windows.mean(axis=1, keepdims=True)
    energy = np.abs(centered @ _tone_basis(cfg)) ** 2
    e0, e1 = energy[:, 0], energy[:, 1]
    bits = (e1 > e0).astype(np.uint8)
    total = e0 + e1
    confidence = np.divide(np.abs(e0 - e1), total, out=np.zeros_like(total), where=total > 0)
    return bits, confidence


def detect_symbol(series, window_start, cfg):
    """
    Decide the bit of one symbol window.

    Returns:
        tuple: (bit, confidence)

    Raises:
        InsufficientDataError: If the window runs past either end of the series.
    """
    end = window_start + cfg.symbol_samples
    if window_start < 0 or end > len(series):
        raise InsufficientDataError(
            f"window [{window_start}, {end}) exceeds series of {len(series)} estimates")
    window = np.abs(series.estimates[window_start:end])[None, :]
    bits, confidence = decide_windows(window, cfg)
    return int(bits[0]), float(confidence[0])


def detect_stream(series, cfg, offset=0):
    """Hard decisions of consecutive windows starting `offset` estimates in."""
    magnitudes = np.abs(series.estimates[offset:])
    count = magnitudes.size // cfg.symbol_samples
    windows = magnitudes[:count * cfg.symbol_samples].reshape(count, cfg.symbol_samples)
    return decide_windows(windows, cfg)


def hard_decision_streams(series, cfg):
    """Bit stream of every offset candidate; bit j of candidate c starts at offset_c + j * N."""
    return [detect_stream(series, cfg, offset)[0] for offset in cfg.candidate_offsets]


class StreamingDetector:
    """
    Incremental hard decisions over a series that arrives in pieces.

    Produces exactly the bits hard_decision_streams would give on the
    concatenated series. Estimate indices count from the first slot pushed.
    """

    def __init__(self, cfg):
        self.cfg = cfg
        self._buffer = np.zeros(0)
        self._buffer_start = 0
        self._next_start = list(cfg.candidate_offsets)
        self.origin_slot = None

    def push(self, series):
        """
        Append estimates and decide every window that is now complete.

        Returns:
            list: New bits (uint8 arrays) per offset candidate.
        """
        if self.origin_slot is None:
            self.origin_slot = series.first_slot
        self._buffer = np.concatenate([self._buffer, series.magnitudes()])
        buffer_end = self._buffer_start + self._buffer.size
        n = self.cfg.symbol_samples

        new_bits = []
        for c, start in enumerate(self._next_start):
            count = max(0, (buffer_end - start) // n)
            local = start - self._buffer_start
            windows = self._buffer[local:local + count * n].reshape(count, n)
            bits, _ = decide_windows(windows, self.cfg)
            new_bits.append(bits)
            self._next_start[c] = start + count * n

        keep_from = min(self._next_start) - self._buffer_start
        if keep_from > 0:
            self._buffer = self._buffer[keep_from:]
            self._buffer_start += keep_from
        return new_bits
