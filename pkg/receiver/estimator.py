#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Per-slot channel estimation.

The CRS estimator divides each received pilot by its known value and
averages all pilots of a slot into one complex estimate, giving a series
at 2000 estimates per second. The wideband estimator is the traffic
sensitive contrast receiver: root mean received power over every RE of
the slot.
"""

import csv
import logging
from dataclasses import dataclass

import numpy as np

from signals.lte_waveform import (SLOT_DURATION, SYMBOLS_PER_SLOT, ResourceGrid, SampleBuffer,
                                  crs_pilot_values, demodulate_baseband)
from utils.errors import InsufficientDataError, RepresentationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ChannelEstimateSeries:
    """Complex channel estimates, one per slot, starting at slot `first_slot`."""
    estimates: np.ndarray
    rate: float = 1.0 / SLOT_DURATION
    first_slot: int = 0

    def __post_init__(self):
        if np.ndim(self.estimates) != 1:
            raise ValueError("estimates must be one-dimensional")

    def __len__(self):
        return self.estimates.size

    @property
    def start_time(self):
        return self.first_slot / self.rate

    def magnitudes(self):
        return np.abs(self.estimates)

    def append(self, other):
        """Concatenate a series that continues this one."""
        if other.first_slot != self.first_slot + len(self):
            raise ValueError(f"series starting at slot {other.first_slot} does not continue "
                             f"one ending at slot {self.first_slot + len(self)}")
        return ChannelEstimateSeries(np.concatenate([self.estimates, other.estimates]),
                                     self.rate, self.first_slot)

    def to_csv(self, path):
        """Write slot, time, real, imag and magnitude columns."""
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['slot', 'time_s', 'real', 'imag', 'magnitude'])
            for i, h in enumerate(self.estimates.tolist()):
                slot = self.first_slot + i
                writer.writerow([slot, format(slot / self.rate, '.10g'), format(h.real, '.10g'),
                                 format(h.imag, '.10g'), format(abs(h), '.10g')])


def _as_grid(rx):
    if isinstance(rx, SampleBuffer):
        return demodulate_baseband(rx)
    if isinstance(rx, ResourceGrid):
        return rx
    raise RepresentationError(f"cannot estimate a channel from {type(rx).__name__}")


def estimate_channel(rx, crs):
    """
    Least-squares CRS channel estimate per slot.

    Args:
        rx (ResourceGrid | SampleBuffer): Received signal.
        crs (CrsConfig): Pilot placement known to the receiver.

    Returns:
        ChannelEstimateSeries: One estimate per complete slot.

    Raises:
        InsufficientDataError: If rx holds no complete slot.
    """
    grid = _as_grid(rx)
    n_slots = grid.n_slots
    if n_slots < 1:
        raise InsufficientDataError("received signal holds no complete slot")

    subcarriers = crs.subcarriers(grid.n_subcarriers)
    slots = grid.first_slot + np.arange(n_slots)
    total = np.zeros(n_slots, dtype=np.complex128)
    for symbol in crs.symbol_positions:
        columns = np.arange(n_slots) * SYMBOLS_PER_SLOT + symbol
        received = grid.values[np.ix_(subcarriers, columns)].T
        total += (received / crs_pilot_values(crs, slots, symbol, subcarriers)).sum(axis=1)
    estimates = total / (len(crs.symbol_positions) * subcarriers.size)
    return ChannelEstimateSeries(estimates, 1.0 / SLOT_DURATION, grid.first_slot)


def estimate_wideband_power(rx):
    """Root mean received power over all REs of each slot, as a real-valued series."""
    grid = _as_grid(rx)
    n_slots = grid.n_slots
    if n_slots < 1:
        raise InsufficientDataError("received signal holds no complete slot")
    power = (np.abs(grid.values) ** 2).reshape(grid.n_subcarriers, n_slots, SYMBOLS_PER_SLOT)
    amplitude = np.sqrt(power.mean(axis=(0, 2)))
    return ChannelEstimateSeries(amplitude.astype(np.complex128), 1.0 / SLOT_DURATION,
                                 grid.first_slot)
