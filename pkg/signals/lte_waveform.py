#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
LTE-like downlink source.

Builds the frequency-time resource grid of a 10 MHz-class downlink (CRS
pilots plus traffic-dependent data), synthesizes it to complex baseband
with normal cyclic prefix and demodulates baseband back into a grid.

Slot timing: 7 OFDM symbols per 0.5 ms slot, 2 slots per 1 ms subframe.
Traffic occupancy is decided per subframe.
"""

import enum
import logging
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from utils.errors import ConfigError, CrsError, GridError

logger = logging.getLogger(__name__)

SLOT_DURATION = 0.5e-3
SUBFRAME_DURATION = 1e-3
SYMBOLS_PER_SLOT = 7
SLOTS_PER_SUBFRAME = 2
SUBCARRIERS_PER_RB = 12
CRS_RE_POWER = 1.0

GRID_MAGIC = b'AMBCGRD1'
_GRID_HEADER = struct.Struct('<8sIIQIIdddII')

_U64 = np.uint64
_QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / math.sqrt(2.0)


class ReKind(enum.IntEnum):
    """Content class of one resource element."""
    EMPTY = 0
    CRS = 1
    DATA = 2


@dataclass(frozen=True)
class GridConfig:
    """
    Downlink numerology.

    Attributes:
        bandwidth_rb (int): Resource blocks of 12 subcarriers.
        subcarrier_spacing (float): Hz.
        fft_size (int): OFDM FFT length, a multiple of 128.
        sample_rate (float): Must equal fft_size * subcarrier_spacing.
        cp_scheme (str): Only 'normal' is supported.
        carrier_label (float): Nominal carrier frequency in Hz, informational.
    """
    bandwidth_rb: int = 50
    subcarrier_spacing: float = 15000.0
    fft_size: int = 1024
    sample_rate: float = 15360000.0
    cp_scheme: str = 'normal'
    carrier_label: float = 768e6

    def __post_init__(self):
        if self.cp_scheme != 'normal':
            raise ConfigError(f"unsupported cyclic prefix scheme: {self.cp_scheme}")
        if self.bandwidth_rb < 1:
            raise ConfigError("bandwidth_rb must be positive")
        if self.n_subcarriers % 2:
            raise ConfigError("number of subcarriers must be even")
        if self.n_subcarriers >= self.fft_size:
            raise ConfigError(
                f"{self.n_subcarriers} subcarriers do not fit an FFT of {self.fft_size}")
        if self.fft_size % 128:
            raise ConfigError("fft_size must be a multiple of 128 for normal cyclic prefix")
        if not math.isclose(self.sample_rate, self.fft_size * self.subcarrier_spacing,
                            rel_tol=1e-12):
            raise ConfigError("sample_rate must equal fft_size * subcarrier_spacing")

    @property
    def n_subcarriers(self):
        return self.bandwidth_rb * SUBCARRIERS_PER_RB

    @property
    def cp_lengths(self):
        """Cyclic prefix length in samples for each symbol of a slot."""
        first = self.fft_size * 160 // 2048
        other = self.fft_size * 144 // 2048
        return (first,) + (other,) * (SYMBOLS_PER_SLOT - 1)

    @property
    def symbol_offsets(self):
        """Start sample (cyclic prefix included) of each symbol within a slot."""
        offsets, position = [], 0
        for cp in self.cp_lengths:
            offsets.append(position)
            position += cp + self.fft_size
        return tuple(offsets)

    @property
    def slot_samples(self):
        return sum(self.cp_lengths) + SYMBOLS_PER_SLOT * self.fft_size

    @property
    def estimate_rate(self):
        """Rate of one channel estimate per slot, in Hz."""
        return 1.0 / SLOT_DURATION

    def active_bins(self):
        """FFT bin of every subcarrier, lowest frequency first; DC stays empty."""
        half = self.n_subcarriers // 2
        negative = np.arange(self.fft_size - half, self.fft_size)
        positive = np.arange(1, half + 1)
        return np.concatenate([negative, positive])

    def symbol_midpoints(self):
        """Midpoint of each symbol of a slot, in seconds from the slot start."""
        return np.array([(off + (cp + self.fft_size) / 2.0) / self.sample_rate
                         for off, cp in zip(self.symbol_offsets, self.cp_lengths)])


@dataclass(frozen=True)
class CrsConfig:
    """Cell-specific reference signal placement."""
    cell_id: int = 0
    frequency_stride: int = 6
    symbol_positions: tuple = (0, 4)

    def __post_init__(self):
        positions = tuple(sorted({int(p) for p in self.symbol_positions}))
        object.__setattr__(self, 'symbol_positions', positions)
        if not 0 <= self.cell_id <= 503:
            raise ConfigError(f"cell_id must lie in [0, 503], got {self.cell_id}")
        if self.frequency_stride < 1:
            raise ConfigError("frequency_stride must be positive")
        if not positions or any(not 0 <= p < SYMBOLS_PER_SLOT for p in positions):
            raise ConfigError(f"CRS symbol positions must lie in 0..6: {positions}")

    @property
    def frequency_shift(self):
        return self.cell_id % 6

    def subcarriers(self, n_subcarriers):
        """Subcarrier indices carrying CRS in a CRS-bearing symbol."""
        return np.arange(self.frequency_shift % self.frequency_stride, n_subcarriers,
                         self.frequency_stride)

    def pilots_per_slot(self, n_subcarriers):
        return len(self.symbol_positions) * self.subcarriers(n_subcarriers).size


def _mix64(x):
    # splitmix64 finalizer
    with np.errstate(over='ignore'):
        x = x + _U64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> _U64(27))) * _U64(0x94D049BB133111EB)
        return x ^ (x >> _U64(31))


def crs_pilot_values(crs, slots, symbol, subcarriers):
    """
    Pilot values for a set of slots and subcarriers of one CRS symbol.

    Pilots are unit-modulus QPSK points drawn from a counter-based hash of
    (cell_id, slot, symbol, subcarrier), so any slot can be regenerated
    without replaying the ones before it.

    Returns:
        np.ndarray: complex array of shape (len(slots), len(subcarriers)).
    """
    slots = np.atleast_1d(np.asarray(slots, dtype=np.int64)).astype(_U64)
    subcarriers = np.atleast_1d(np.asarray(subcarriers, dtype=np.int64)).astype(_U64)
    with np.errstate(over='ignore'):
        counter = (_U64(crs.cell_id) << _U64(40)) + (slots[:, None] << _U64(16)) \
            + (_U64(symbol) << _U64(12)) + subcarriers[None, :]
    index = (_mix64(counter) >> _U64(62)).astype(np.intp)
    return _QPSK[index]


def generate_crs_symbols(crs, slot, symbol, n_subcarriers=600):
    """
    Pilot (subcarrier, value) pairs of one CRS-bearing symbol.

    Raises:
        CrsError: If `symbol` does not carry CRS.
    """
    if symbol not in crs.symbol_positions:
        raise CrsError(f"symbol {symbol} carries no CRS (positions {crs.symbol_positions})")
    subcarriers = crs.subcarriers(n_subcarriers)
    values = crs_pilot_values(crs, [slot], symbol, subcarriers)[0]
    return [(int(k), complex(v)) for k, v in zip(subcarriers, values)]


@dataclass(frozen=True)
class TrafficModel:
    """
    Downlink traffic occupancy per subframe.

    'constant-load' occupies each data RE independently with probability
    duty_target in every subframe. 'two-state-markov' switches whole
    subframes on and off; its duty cycle is p_off_to_on / (p_on_to_off + p_off_to_on).
    """
    kind: str = 'two-state-markov'
    duty_target: float = 0.5
    p_on_to_off: float = 0.1
    p_off_to_on: float = 0.1
    data_re_power: float = 1.0

    def __post_init__(self):
        if self.kind not in ('constant-load', 'two-state-markov'):
            raise ConfigError(f"unknown traffic kind: {self.kind}")
        for name in ('duty_target', 'p_on_to_off', 'p_off_to_on'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"traffic {name} must lie in [0, 1], got {value}")
        if self.data_re_power < 0:
            raise ConfigError("data_re_power must not be negative")
        if self.kind == 'two-state-markov' and self.p_on_to_off + self.p_off_to_on == 0:
            raise ConfigError("two-state traffic needs at least one nonzero transition probability")
        if not math.isclose(self.stationary_duty, self.duty_target, abs_tol=1e-9):
            raise ConfigError(
                f"two-state traffic with p_on_to_off={self.p_on_to_off} and "
                f"p_off_to_on={self.p_off_to_on} runs at duty {self.stationary_duty:.4g}, "
                f"not duty_target={self.duty_target}")

    @property
    def stationary_duty(self):
        if self.kind == 'constant-load':
            return self.duty_target
        return self.p_off_to_on / (self.p_on_to_off + self.p_off_to_on)

    @classmethod
    def for_duty(cls, duty, kind='two-state-markov', mean_on_subframes=10.0, data_re_power=1.0):
        """
        Model reaching a given duty cycle.

        Duty 0 and 1 always give constant load. Two-state traffic keeps bursts
        of `mean_on_subframes` on average and sets the off-to-on rate to match.
        """
        if duty <= 0.0 or duty >= 1.0 or kind == 'constant-load':
            return cls('constant-load', float(duty), data_re_power=data_re_power)
        p_on_to_off = min(1.0, 1.0 / mean_on_subframes)
        p_off_to_on = duty * p_on_to_off / (1.0 - duty)
        if p_off_to_on > 1.0:
            p_on_to_off /= p_off_to_on
            p_off_to_on = 1.0
        return cls(kind, float(duty), p_on_to_off, p_off_to_on, data_re_power)


@dataclass(frozen=True)
class TrafficState:
    """Traffic process state: `subframe` is the next subframe to be decided."""
    on: bool
    subframe: int = 0
    last_load: float = 0.0


def initial_traffic_state(model, rng):
    """Draw the starting state from the stationary distribution."""
    if model.kind == 'constant-load':
        return TrafficState(on=model.duty_target > 0)
    return TrafficState(on=bool(rng.random() < model.stationary_duty))


def step_traffic(model, state, rng):
    """
    Decide one subframe.

    Returns:
        tuple: (next state, load of the decided subframe in [0, 1])
    """
    if model.kind == 'constant-load':
        load = model.duty_target
        return TrafficState(load > 0, state.subframe + 1, load), load

    load = 1.0 if state.on else 0.0
    if state.on:
        on = not rng.random() < model.p_on_to_off
    else:
        on = bool(rng.random() < model.p_off_to_on)
    return TrafficState(on, state.subframe + 1, load), load


@dataclass(eq=False)
class ResourceGrid:
    """
    Frequency-time grid of resource elements.

    values has shape (n_subcarriers, 7 * n_slots); column c is symbol c % 7 of
    slot first_slot + c // 7. kinds is None for grids recovered by a receiver.
    """
    values: np.ndarray
    grid_config: GridConfig
    crs_config: CrsConfig
    kinds: Optional[np.ndarray] = None
    first_slot: int = 0
    slot_loads: Optional[np.ndarray] = None
    traffic_state: Optional[TrafficState] = None

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != self.grid_config.n_subcarriers:
            raise GridError(f"grid rows {self.values.shape} do not match "
                            f"{self.grid_config.n_subcarriers} subcarriers")
        if self.values.shape[1] % SYMBOLS_PER_SLOT:
            raise GridError(f"grid holds {self.values.shape[1]} symbols, not whole slots")
        if self.kinds is not None and self.kinds.shape != self.values.shape:
            raise GridError("kind mask shape differs from value shape")

    @property
    def n_subcarriers(self):
        return self.values.shape[0]

    @property
    def n_symbols(self):
        return self.values.shape[1]

    @property
    def n_slots(self):
        return self.n_symbols // SYMBOLS_PER_SLOT

    def symbol_times(self):
        """Absolute midpoint time of every column, in seconds."""
        slots = self.first_slot + np.arange(self.n_slots)
        times = slots[:, None] * SLOT_DURATION + self.grid_config.symbol_midpoints()[None, :]
        return times.ravel()

    def crs_columns(self, symbol):
        return np.arange(self.n_slots) * SYMBOLS_PER_SLOT + symbol

    def slot_energy(self):
        """Total RE energy of every slot."""
        energy = (np.abs(self.values) ** 2).sum(axis=0)
        return energy.reshape(self.n_slots, SYMBOLS_PER_SLOT).sum(axis=1)

    def with_values(self, values):
        return replace(self, values=values)


def slot_kind_pattern(cfg, crs):
    """Kind mask of one slot: CRS at the pilot positions, DATA elsewhere."""
    kinds = np.full((cfg.n_subcarriers, SYMBOLS_PER_SLOT), ReKind.DATA, dtype=np.int8)
    subcarriers = crs.subcarriers(cfg.n_subcarriers)
    for symbol in crs.symbol_positions:
        kinds[subcarriers, symbol] = ReKind.CRS
    return kinds


def build_grid(cfg, crs, traffic, duration, rng, start_slot=0, traffic_state=None):
    """
    Build the transmitted resource grid for `duration` seconds.

    Args:
        cfg (GridConfig): Numerology.
        crs (CrsConfig): Pilot placement.
        traffic (TrafficModel): Data occupancy model.
        duration (float): Seconds to cover; truncated to whole slots.
        rng (np.random.Generator): Source for traffic and data symbols.
        start_slot (int): Absolute index of the first slot.
        traffic_state (TrafficState, optional): State carried over from the
            previous grid. A fresh stationary state is drawn if None.

    Returns:
        ResourceGrid: Grid whose traffic_state continues the process.

    Raises:
        GridError: If the duration holds less than one slot.
    """
    n_slots = int(math.floor(duration / SLOT_DURATION + 1e-9))
    if n_slots < 1:
        raise GridError(f"duration {duration} s is shorter than one slot")

    n_sub = cfg.n_subcarriers
    n_sym = n_slots * SYMBOLS_PER_SLOT
    kinds = np.tile(slot_kind_pattern(cfg, crs), (1, n_slots))
    values = np.zeros((n_sub, n_sym), dtype=np.complex128)

    slots = start_slot + np.arange(n_slots)
    subcarriers = crs.subcarriers(n_sub)
    for symbol in crs.symbol_positions:
        pilots = crs_pilot_values(crs, slots, symbol, subcarriers)
        values[np.ix_(subcarriers, np.arange(n_slots) * SYMBOLS_PER_SLOT + symbol)] = pilots.T

    state = traffic_state if traffic_state is not None else initial_traffic_state(traffic, rng)
    if state.subframe == 0 and traffic_state is None:
        state = replace(state, subframe=start_slot // SLOTS_PER_SUBFRAME)
    first_subframe = start_slot // SLOTS_PER_SUBFRAME
    last_subframe = (start_slot + n_slots - 1) // SLOTS_PER_SUBFRAME
    subframe_loads = np.empty(last_subframe - first_subframe + 1)
    for i, subframe in enumerate(range(first_subframe, last_subframe + 1)):
        if subframe < state.subframe:
            subframe_loads[i] = state.last_load
        else:
            state, subframe_loads[i] = step_traffic(traffic, state, rng)
    slot_loads = subframe_loads[slots // SLOTS_PER_SUBFRAME - first_subframe]

    data_res = kinds == ReKind.DATA
    occupied = np.zeros_like(data_res)
    if np.any(slot_loads > 0) and traffic.data_re_power > 0:
        column_loads = np.repeat(slot_loads, SYMBOLS_PER_SLOT)
        occupied = data_res & (column_loads[None, :] > 0)
        partial = (column_loads > 0) & (column_loads < 1)
        if np.any(partial):
            draws = rng.random((n_sub, n_sym))
            occupied &= draws < column_loads[None, :]
        symbols = _QPSK[rng.integers(0, 4, size=(n_sub, n_sym))]
        values[occupied] = math.sqrt(traffic.data_re_power) * symbols[occupied]
    # data REs left without traffic carry nothing
    kinds[data_res & ~occupied] = ReKind.EMPTY

    return ResourceGrid(values, cfg, crs, kinds=kinds, first_slot=start_slot,
                        slot_loads=slot_loads, traffic_state=state)


@dataclass(eq=False)
class SampleBuffer:
    """Complex baseband samples covering whole slots starting at `first_slot`."""
    samples: np.ndarray
    grid_config: GridConfig
    crs_config: CrsConfig
    first_slot: int = 0

    def __post_init__(self):
        if self.samples.ndim != 1 or self.samples.size % self.grid_config.slot_samples:
            raise GridError("sample buffer must hold a whole number of slots")

    @property
    def sample_rate(self):
        return self.grid_config.sample_rate

    @property
    def n_slots(self):
        return self.samples.size // self.grid_config.slot_samples

    @property
    def duration(self):
        return self.samples.size / self.sample_rate

    def sample_indices(self):
        """Absolute sample index of every sample."""
        start = self.first_slot * self.grid_config.slot_samples
        return start + np.arange(self.samples.size, dtype=np.int64)


def ofdm_modulate(bins, cfg):
    """
    Time-domain symbols with cyclic prefix from full FFT-bin columns.

    Args:
        bins (np.ndarray): (fft_size, 7 * n_slots) frequency-domain symbols.
        cfg (GridConfig): Numerology.

    Returns:
        np.ndarray: Concatenated samples, n_slots * slot_samples long.
    """
    n_slots = bins.shape[1] // SYMBOLS_PER_SLOT
    body = np.fft.ifft(bins, axis=0)
    out = np.empty((n_slots, cfg.slot_samples), dtype=np.complex128)
    for symbol, (offset, cp) in enumerate(zip(cfg.symbol_offsets, cfg.cp_lengths)):
        columns = body[:, symbol::SYMBOLS_PER_SLOT].T
        out[:, offset:offset + cp] = columns[:, cfg.fft_size - cp:]
        out[:, offset + cp:offset + cp + cfg.fft_size] = columns
    return out.ravel()


def cyclic_prefix_mask(cfg, n_slots):
    """Boolean mask marking cyclic-prefix samples over n_slots slots."""
    mask = np.zeros(cfg.slot_samples, dtype=bool)
    for offset, cp in zip(cfg.symbol_offsets, cfg.cp_lengths):
        mask[offset:offset + cp] = True
    return np.tile(mask, n_slots)


def synthesize_baseband(grid, cfg):
    """
    OFDM-synthesize a grid: IFFT per symbol plus cyclic prefix.

    The IFFT carries the 1/fft_size normalization, so the energy of each
    symbol body equals the grid energy of the symbol divided by fft_size.

    Raises:
        GridError: If the grid shape disagrees with `cfg`.
    """
    if grid.n_subcarriers != cfg.n_subcarriers:
        raise GridError(f"grid has {grid.n_subcarriers} subcarriers, "
                        f"configuration expects {cfg.n_subcarriers}")
    bins = np.zeros((cfg.fft_size, grid.n_symbols), dtype=np.complex128)
    bins[cfg.active_bins(), :] = grid.values
    return SampleBuffer(ofdm_modulate(bins, cfg), cfg, grid.crs_config, grid.first_slot)


def demodulate_baseband(buffer):
    """Recover the resource grid from samples: drop cyclic prefix, FFT, pick active bins."""
    cfg = buffer.grid_config
    slots = buffer.samples.reshape(buffer.n_slots, cfg.slot_samples)
    values = np.empty((cfg.n_subcarriers, buffer.n_slots * SYMBOLS_PER_SLOT),
                      dtype=np.complex128)
    active = cfg.active_bins()
    for symbol, (offset, cp) in enumerate(zip(cfg.symbol_offsets, cfg.cp_lengths)):
        body = slots[:, offset + cp:offset + cp + cfg.fft_size]
        values[:, symbol::SYMBOLS_PER_SLOT] = np.fft.fft(body, axis=1)[:, active].T
    return ResourceGrid(values, cfg, buffer.crs_config, first_slot=buffer.first_slot)


def export_grid(grid, path):
    """
    Write a grid snapshot.

    Layout (little endian): header of magic 'AMBCGRD1', n_subcarriers u32,
    n_symbols u32, first_slot u64, fft_size u32, bandwidth_rb u32,
    subcarrier_spacing f64, sample_rate f64, carrier_label f64, cell_id u32,
    n_crs_positions u32; then the CRS symbol positions as u32, the frequency
    stride as u32, and the values as interleaved float32 real/imag pairs in
    subcarrier-major order.
    """
    cfg, crs = grid.grid_config, grid.crs_config
    header = _GRID_HEADER.pack(GRID_MAGIC, grid.n_subcarriers, grid.n_symbols, grid.first_slot,
                               cfg.fft_size, cfg.bandwidth_rb, cfg.subcarrier_spacing,
                               cfg.sample_rate, cfg.carrier_label, crs.cell_id,
                               len(crs.symbol_positions))
    positions = struct.pack(f'<{len(crs.symbol_positions)}I', *crs.symbol_positions)
    stride = struct.pack('<I', crs.frequency_stride)
    body = np.empty((grid.n_subcarriers, grid.n_symbols, 2), dtype='<f4')
    body[..., 0] = grid.values.real
    body[..., 1] = grid.values.imag
    with open(path, 'wb') as f:
        f.write(header + positions + stride)
        f.write(body.tobytes())


def load_grid(path):
    """Read a snapshot written by export_grid."""
    with open(path, 'rb') as f:
        raw = f.read()
    (magic, n_sub, n_sym, first_slot, fft_size, bandwidth_rb, spacing, sample_rate,
     carrier, cell_id, n_positions) = _GRID_HEADER.unpack_from(raw)
    if magic != GRID_MAGIC:
        raise GridError(f"{path} is not a grid snapshot")
    offset = _GRID_HEADER.size
    positions = struct.unpack_from(f'<{n_positions}I', raw, offset)
    offset += 4 * n_positions
    (stride,) = struct.unpack_from('<I', raw, offset)
    offset += 4
    body = np.frombuffer(raw, dtype='<f4', offset=offset).reshape(n_sub, n_sym, 2)
    cfg = GridConfig(bandwidth_rb, spacing, fft_size, sample_rate, 'normal', carrier)
    crs = CrsConfig(cell_id, stride, positions)
    values = body[..., 0].astype(np.float64) + 1j * body[..., 1].astype(np.float64)
    return ResourceGrid(values, cfg, crs, first_slot=first_slot)


if __name__ == "__main__":
    # Example usage
    cfg, crs = GridConfig(), CrsConfig()
    grid = build_grid(cfg, crs, TrafficModel(), 0.01, np.random.default_rng(0))
    buffer = synthesize_baseband(grid, cfg)
    print(f"{grid.n_slots} slots, {grid.n_symbols} symbols, {buffer.samples.size} samples")
    print(f"slot energy: {grid.slot_energy()[:4]}")
