#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Frame synchronization on hard-decision bit streams.

Every 63-bit window of every offset candidate is scored against the sync
word. Windows meeting the threshold become candidate detections placed on
a common time axis (offset_c + N * bit index, in estimates). Candidates are
resolved in time order: the earliest pending candidate opens a cluster of
everything less than one frame after it and the best correlation in the
cluster wins, the middle one in time among equal scores. Nothing within
one frame after an accepted detection is accepted again.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from signals.bitseq import BitSequence, hamming_errors, sliding_agreements
from utils.errors import LengthMismatchError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyncResult:
    """
    One detected frame.

    Attributes:
        frame_start (int): Index of the first sync bit in its candidate stream.
        correlation (float): Agreement fraction of the sync window.
        offset_candidate (int): Index of the candidate stream.
        data_bits (BitSequence): The bits following the sync word.
        position (int): Start of the frame on the common time axis, in estimates.
    """
    frame_start: int
    correlation: float
    offset_candidate: int
    data_bits: BitSequence
    position: int = 0

    def time(self, rate, origin=0.0):
        """Detection time in seconds."""
        return origin + self.position / rate


def compute_ber(result, truth):
    """
    Bit error rate of a detection's payload against the transmitted payload.

    Raises:
        LengthMismatchError: If the payload lengths differ.
    """
    truth = BitSequence(truth)
    if len(truth) != len(result.data_bits):
        raise LengthMismatchError(
            f"payload of {len(result.data_bits)} bits compared with {len(truth)} bits")
    return hamming_errors(result.data_bits, truth) / len(truth)


def false_alarm_probability(sync_length=63, max_errors=12):
    """Chance that a window of independent fair bits agrees in >= sync_length - max_errors places."""
    return float(stats.binom.cdf(max_errors, sync_length, 0.5))


class StreamSynchronizer:
    """
    Incremental synchronizer.

    Feeding a set of streams in one push and calling flush() gives the same
    result as any split of the same streams into several pushes.
    """

    def __init__(self, cfg):
        self.cfg = cfg
        self._offsets = cfg.candidate_offsets
        n = len(self._offsets)
        self._bits = [np.zeros(0, dtype=np.uint8) for _ in range(n)]
        self._base = [0] * n          # stream index of _bits[c][0]
        self._scanned = [0] * n       # next window start to score
        self._pending = []            # (position, candidate, start, matches, data)
        self._last_accepted = None
        self.results = []
        self.windows_examined = 0

    @property
    def _span(self):
        # separations that round to less than one frame length overlap
        return (self.cfg.frame_length - 0.5) * self.cfg.symbol_samples

    def _frontier(self):
        """Every candidate positioned before this has been scored."""
        n = self.cfg.symbol_samples
        return min(offset + n * scanned for offset, scanned in zip(self._offsets, self._scanned))

    def push(self, streams):
        """
        Append new bits for every candidate stream.

        Returns:
            list: SyncResults that became final with this push.
        """
        if len(streams) != len(self._offsets):
            raise LengthMismatchError(
                f"expected {len(self._offsets)} candidate streams, got {len(streams)}")
        cfg = self.cfg
        for c, new_bits in enumerate(streams):
            bits = np.concatenate([self._bits[c], np.asarray(new_bits, dtype=np.uint8)])
            local = self._scanned[c] - self._base[c]
            agreements = sliding_agreements(bits[local:], cfg.sync)
            # windows whose payload is not complete yet wait for more bits
            usable = max(0, bits.size - local - cfg.frame_length + 1)
            agreements = agreements[:usable]
            self.windows_examined += usable
            for i in np.flatnonzero(agreements >= cfg.required_matches).tolist():
                start = self._scanned[c] + i
                head = local + i + cfg.sync_length
                data = BitSequence(bits[head:head + cfg.data_length])
                position = self._offsets[c] + start * cfg.symbol_samples
                self._pending.append((position, c, start, int(agreements[i]), data))
            self._scanned[c] += usable
            drop = self._scanned[c] - self._base[c]
            self._bits[c] = bits[drop:]
            self._base[c] = self._scanned[c]
        return self._resolve(final=False)

    def flush(self):
        """Resolve everything still pending; call once at end of stream."""
        self._resolve(final=True)
        return self.results

    def _resolve(self, final):
        span = self._span
        frontier = self._frontier()
        self._pending.sort(key=lambda p: (p[0], p[1]))
        accepted = []
        while self._pending:
            anchor = self._pending[0][0]
            if self._last_accepted is not None and anchor - self._last_accepted < span:
                self._pending.pop(0)
                continue
            if not final and anchor + span > frontier:
                break
            cluster = [p for p in self._pending if p[0] < anchor + span]
            top = max(p[3] for p in cluster)
            tied = [p for p in cluster if p[3] == top]
            # equal scores from neighbouring offsets straddle the true alignment
            best = tied[(len(tied) - 1) // 2]
            self._pending = [p for p in self._pending if p[0] >= anchor + span]
            self._last_accepted = best[0]
            position, c, start, matches, data = best
            result = SyncResult(start, matches / self.cfg.sync_length, c, data, position)
            logger.debug("Frame detected at estimate %d (candidate %d, correlation %.3f)",
                         position, c, result.correlation)
            accepted.append(result)
        self.results.extend(accepted)
        return accepted


def synchronize(streams, cfg):
    """
    Find frames in hard-decision streams.

    Args:
        streams (list): One bit stream per offset candidate of `cfg`.
        cfg (ReceiverConfig): Sync word, threshold and candidate layout.

    Returns:
        list: SyncResults in time order, consecutive ones at least one frame apart.
    """
    synchronizer = StreamSynchronizer(cfg)
    synchronizer.push(streams)
    return synchronizer.flush()
