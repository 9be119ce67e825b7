#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Two-path channel between the base station and the receiver.

y = (h_d + h_b * s(t)) * x + n

h_d is the direct path, h_b the path scattered by the ZED, s(t) the ZED
reflection coefficient and n circularly symmetric Gaussian noise whose
per-RE variance is calibrated against the direct-path CRS power.
"""

import cmath
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from signals.lte_waveform import (CRS_RE_POWER, SYMBOLS_PER_SLOT, ResourceGrid,
                                  SampleBuffer, cyclic_prefix_mask, ofdm_modulate)
from utils.errors import ConfigError, RepresentationError
from utils.seeding import Stream, derive_rng, seed_sequence

logger = logging.getLogger(__name__)

OBSERVE_ALL = 'all'
OBSERVE_CRS = 'crs'


@dataclass(frozen=True)
class ChannelParams:
    """
    Channel description.

    The backscatter gain is h_direct * 10**(ratio/20) * exp(j*phase) unless
    h_backscatter is given explicitly. target_snr_db None (or +inf) disables noise.
    Block Rayleigh fading multiplies each path by an independent CN(0, 1)
    coefficient per coherence interval.
    """
    h_direct: complex = 1 + 0j
    backscatter_ratio_db: float = -15.0
    backscatter_phase_deg: float = 0.0
    target_snr_db: Optional[float] = None
    fading: str = 'static'
    coherence_interval: float = 0.1
    h_backscatter: Optional[complex] = None

    def __post_init__(self):
        object.__setattr__(self, 'h_direct', complex(self.h_direct))
        if self.h_direct == 0:
            raise ConfigError("direct path gain must be nonzero")
        if self.backscatter_ratio_db > 0:
            raise ConfigError("backscatter path must not be stronger than the direct path")
        if self.fading not in ('static', 'block-rayleigh'):
            raise ConfigError(f"unknown fading model: {self.fading}")
        if self.coherence_interval <= 0:
            raise ConfigError("coherence_interval must be positive")

    @property
    def backscatter_gain(self):
        if self.h_backscatter is not None:
            return complex(self.h_backscatter)
        magnitude = 10.0 ** (self.backscatter_ratio_db / 20.0)
        return self.h_direct * magnitude * cmath.exp(1j * math.radians(self.backscatter_phase_deg))

    @property
    def noise_enabled(self):
        return self.target_snr_db is not None and not math.isinf(self.target_snr_db)


def calibrate_noise(params, crs_re_power=CRS_RE_POWER):
    """
    Per-RE noise variance giving the target SNR on direct-path CRS REs.

    Returns:
        float: |h_d|^2 * crs_re_power / 10**(snr/10), or 0.0 with noise disabled.
    """
    if crs_re_power <= 0:
        raise ConfigError("CRS RE power must be positive")
    if not params.noise_enabled:
        return 0.0
    return abs(params.h_direct) ** 2 * crs_re_power / 10.0 ** (params.target_snr_db / 10.0)


def _complex_normal(rng, shape, variance):
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _path_gains(params, seed, times):
    h_d, h_b = params.h_direct, params.backscatter_gain
    if params.fading == 'static':
        return np.full(times.shape, h_d), np.full(times.shape, h_b)

    blocks = np.floor(times / params.coherence_interval + 1e-9).astype(np.int64)
    unique, inverse = np.unique(blocks, return_inverse=True)
    coefficients = np.empty((unique.size, 2), dtype=np.complex128)
    for i, block in enumerate(unique.tolist()):
        coefficients[i] = _complex_normal(derive_rng(seed, Stream.FADING, block), 2, 1.0)
    return h_d * coefficients[inverse, 0], h_b * coefficients[inverse, 1]


def _grid_noise(grid_config, crs_config, first_slot, n_slots, seed, variance, observe):
    """
    Frequency-domain noise over the active REs of n_slots slots.

    CRS REs and the remaining REs draw from separate streams keyed by the
    first slot, so the CRS realization is the same whichever REs are observed.
    """
    n_sub = grid_config.n_subcarriers
    n_sym = n_slots * SYMBOLS_PER_SLOT
    subcarriers = crs_config.subcarriers(n_sub)
    positions = crs_config.symbol_positions

    if observe == OBSERVE_ALL:
        noise = _complex_normal(derive_rng(seed, Stream.DATA_NOISE, first_slot), (n_sub, n_sym),
                                variance)
    else:
        noise = np.zeros((n_sub, n_sym), dtype=np.complex128)
    pilot_noise = _complex_normal(derive_rng(seed, Stream.PILOT_NOISE, first_slot),
                                  (n_slots, len(positions), subcarriers.size), variance)
    for i, symbol in enumerate(positions):
        columns = np.arange(n_slots) * SYMBOLS_PER_SLOT + symbol
        noise[np.ix_(subcarriers, columns)] = pilot_noise[:, i, :].T
    return noise


def _apply_to_grid(grid, reflection, params, seed, observe):
    times = grid.symbol_times()
    s = reflection.value_at(times) if reflection is not None else np.zeros(times.shape)
    h_d, h_b = _path_gains(params, seed, times)
    values = grid.values * (h_d + h_b * s)[None, :]

    variance = calibrate_noise(params)
    if variance > 0:
        values = values + _grid_noise(grid.grid_config, grid.crs_config, grid.first_slot,
                                      grid.n_slots, seed, variance, observe)
    return replace(grid, values=values)


def _apply_to_samples(buffer, reflection, params, seed):
    cfg = buffer.grid_config
    index = buffer.sample_indices()
    times = index / cfg.sample_rate
    if reflection is not None:
        s = reflection.value_at_samples(index, cfg.sample_rate)
    else:
        s = np.zeros(index.shape)
    h_d, h_b = _path_gains(params, seed, times)
    samples = buffer.samples * (h_d + h_b * s)

    variance = calibrate_noise(params)
    if variance > 0:
        n_slots = buffer.n_slots
        n_sym = n_slots * SYMBOLS_PER_SLOT
        aux = derive_rng(seed, Stream.AUX_NOISE, buffer.first_slot)
        bins = _complex_normal(aux, (cfg.fft_size, n_sym), variance)
        bins[cfg.active_bins(), :] = _grid_noise(cfg, buffer.crs_config, buffer.first_slot,
                                                 n_slots, seed, variance, OBSERVE_ALL)
        noise = ofdm_modulate(bins, cfg)
        prefix = cyclic_prefix_mask(cfg, n_slots)
        noise[prefix] = _complex_normal(aux, int(prefix.sum()), variance / cfg.fft_size)
        samples = samples + noise
    return replace(buffer, samples=samples)


def apply_channel(tx, reflection, params, rng, observe=OBSERVE_ALL):
    """
    Pass a transmitted grid or sample buffer through the channel.

    Args:
        tx (ResourceGrid | SampleBuffer): Transmitted signal.
        reflection (ReflectionWaveform | None): ZED reflection; None means
            the ZED is absent.
        params (ChannelParams): Path gains, SNR and fading.
        rng: Seed (int or np.random.SeedSequence) from which the fading and
            noise streams are derived.
        observe (str): 'all' or 'crs'. With 'crs' only CRS REs of a grid
            receive noise. Sample buffers always get noise everywhere.

    Returns:
        Same representation as `tx`.

    Raises:
        RepresentationError: For unknown representations, or observe='crs' on samples.
    """
    seed = seed_sequence(rng) if rng is not None else seed_sequence(0)
    if observe not in (OBSERVE_ALL, OBSERVE_CRS):
        raise ConfigError(f"unknown observation mask: {observe}")
    if isinstance(tx, ResourceGrid):
        return _apply_to_grid(tx, reflection, params, seed, observe)
    if isinstance(tx, SampleBuffer):
        if observe != OBSERVE_ALL:
            raise RepresentationError("sample buffers cannot restrict noise to CRS REs")
        return _apply_to_samples(tx, reflection, params, seed)
    raise RepresentationError(f"cannot apply the channel to {type(tx).__name__}")

