#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Receiver tests: channel estimation, FSK decisions, frame synchronization
and the staged pipeline.

Usage:
    pytest tests/test_receiver.py
    python tests/test_receiver.py [--estimation] [--detection] [--sync] [--pipeline]
"""

import asyncio
import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from receiver.detector import (ReceiverConfig, StreamingDetector, decide_windows, detect_symbol,
                               hard_decision_streams)
from receiver.estimator import ChannelEstimateSeries, estimate_channel, estimate_wideband_power
from receiver.pipeline import ReceiverPipeline
from receiver.synchronizer import (StreamSynchronizer, compute_ber, false_alarm_probability,
                                   synchronize)
from signals.bitseq import build_frame, default_payload, default_sync_sequence, sliding_agreements
from signals.channel import ChannelParams, apply_channel, calibrate_noise
from signals.lte_waveform import (CrsConfig, GridConfig, TrafficModel, build_grid,
                                  synthesize_baseband)
from signals.zed import FskConfig, modulate_frame, repeat_frames
from tests.log_helpers import log_info, run_test_groups
from utils.errors import (AliasingError, ConfigError, InsufficientDataError, LengthMismatchError,
                          RepresentationError)

CFG = GridConfig()
CRS = CrsConfig()
FRAME = build_frame(default_payload())


def _series_from_reflection(states, depth=0.1, first_slot=0):
    return ChannelEstimateSeries((1.0 + depth * states).astype(np.complex128),
                                 first_slot=first_slot)


def test_receiver_config_from_modulation():
    cfg = ReceiverConfig.from_fsk(FskConfig(), 2000.0)
    assert (cfg.symbol_samples, cfg.bin_f0, cfg.bin_f1) == (80, 5, 20)
    assert cfg.required_matches == 51
    assert cfg.candidate_offsets == (0, 10, 20, 30, 40, 50, 60, 70)
    with pytest.raises(AliasingError):
        ReceiverConfig.from_fsk(FskConfig(), 800.0)
    with pytest.raises(ConfigError):
        ReceiverConfig(threshold=0.0)


def test_crs_estimate_recovers_gain():
    grid = build_grid(CFG, CRS, TrafficModel.for_duty(1.0), 0.01, np.random.default_rng(1))
    rx = grid.with_values(grid.values * (0.3 + 0.4j))
    series = estimate_channel(rx, CRS)
    assert len(series) == 20
    assert np.allclose(series.estimates, 0.3 + 0.4j)
    assert series.rate == 2000.0


def test_crs_estimate_from_samples():
    grid = build_grid(CFG, CRS, TrafficModel.for_duty(0.5), 0.005, np.random.default_rng(2),
                      start_slot=30)
    series = estimate_channel(synthesize_baseband(grid, CFG), CRS)
    assert series.first_slot == 30
    assert np.allclose(series.estimates, 1.0)


def test_crs_estimate_ignores_traffic():
    params = ChannelParams(backscatter_ratio_db=-10.0)
    reflection = repeat_frames(FRAME, FskConfig(), 0.02, 2000.0)
    estimates = []
    for duty in (0.0, 1.0):
        grid = build_grid(CFG, CRS, TrafficModel.for_duty(duty), 0.02, np.random.default_rng(3))
        estimates.append(estimate_channel(apply_channel(grid, reflection, params, 1), CRS))
    assert np.allclose(estimates[0].estimates, estimates[1].estimates)


def test_wideband_power_follows_traffic():
    idle = build_grid(CFG, CRS, TrafficModel.for_duty(0.0), 0.005, np.random.default_rng(4))
    busy = build_grid(CFG, CRS, TrafficModel.for_duty(1.0), 0.005, np.random.default_rng(4))
    assert np.allclose(estimate_wideband_power(idle).magnitudes(), math.sqrt(200 / 4200))
    assert np.allclose(estimate_wideband_power(busy).magnitudes(), 1.0)


def test_series_append_requires_contiguity():
    a = ChannelEstimateSeries(np.ones(4, dtype=complex), first_slot=0)
    b = ChannelEstimateSeries(np.ones(3, dtype=complex), first_slot=4)
    assert len(a.append(b)) == 7
    with pytest.raises(ValueError):
        a.append(ChannelEstimateSeries(np.ones(3, dtype=complex), first_slot=5))


def test_square_wave_decisions():
    cfg = ReceiverConfig()
    states = modulate_frame('01', FskConfig(), 2000.0).states
    series = _series_from_reflection(states)
    bit, confidence = detect_symbol(series, 0, cfg)
    assert bit == 0 and confidence > 0.9
    bit, confidence = detect_symbol(series, 80, cfg)
    assert bit == 1 and confidence > 0.9


def test_decisions_ignore_dc_offset():
    cfg = ReceiverConfig()
    rng = np.random.default_rng(7)
    windows = np.abs(rng.normal(1.0, 0.3, size=(500, 80)))
    bits, confidence = decide_windows(windows, cfg)
    shifted_bits, shifted_confidence = decide_windows(windows + 5.0, cfg)
    assert np.array_equal(bits, shifted_bits)
    assert np.allclose(confidence, shifted_confidence)


def test_flat_window_decides_zero():
    bits, confidence = decide_windows(np.ones((1, 80)), ReceiverConfig())
    assert bits[0] == 0 and confidence[0] == 0.0


def test_window_past_end_rejected():
    series = ChannelEstimateSeries(np.ones(100, dtype=complex))
    with pytest.raises(InsufficientDataError):
        detect_symbol(series, 30, ReceiverConfig())
    with pytest.raises(InsufficientDataError):
        detect_symbol(series, -1, ReceiverConfig())


def test_noiseless_frame_decoded_on_aligned_candidate():
    cfg = ReceiverConfig()
    states = modulate_frame(FRAME, FskConfig(), 2000.0).states
    streams = hard_decision_streams(_series_from_reflection(states), cfg)
    assert np.array_equal(streams[0], FRAME.array)


def test_streaming_detector_matches_batch():
    cfg = ReceiverConfig()
    rng = np.random.default_rng(12)
    magnitudes = 1.0 + 0.1 * rng.standard_normal(3000)
    whole = hard_decision_streams(ChannelEstimateSeries(magnitudes.astype(complex)), cfg)
    detector = StreamingDetector(cfg)
    pieces = [[] for _ in whole]
    for start in range(0, 3000, 230):
        chunk = ChannelEstimateSeries(magnitudes[start:start + 230].astype(complex),
                                      first_slot=start)
        for c, bits in enumerate(detector.push(chunk)):
            pieces[c].append(bits)
    for c, expected in enumerate(whole):
        assert np.array_equal(np.concatenate(pieces[c]), expected)


def test_sync_finds_embedded_frame():
    rng = np.random.default_rng(11)
    cfg = ReceiverConfig(offset_candidates=1)
    stream = np.concatenate([rng.integers(0, 2, 300), FRAME.array, rng.integers(0, 2, 300)])
    results = synchronize([stream.astype(np.uint8)], cfg)
    hits = [r for r in results if r.frame_start == 300]
    assert len(hits) == 1
    assert hits[0].correlation == 1.0
    assert hits[0].data_bits == default_payload()
    assert compute_ber(hits[0], default_payload()) == 0.0


def test_sync_tolerates_twelve_errors():
    cfg = ReceiverConfig(offset_candidates=1)
    damaged = FRAME.flipped(range(0, 60, 5))
    stream = np.concatenate([np.zeros(10, dtype=np.uint8), damaged.array])
    results = synchronize([stream], cfg)
    assert [r.frame_start for r in results] == [10]
    assert results[0].correlation == pytest.approx(51 / 63)


def test_sync_waits_for_complete_payload():
    cfg = ReceiverConfig(offset_candidates=1)
    assert synchronize([FRAME.array[:100]], cfg) == []


def test_sync_keeps_one_detection_per_frame():
    cfg = ReceiverConfig()
    states = repeat_frames(FRAME, FskConfig(), 4 * 4.8, 2000.0).states
    streams = hard_decision_streams(_series_from_reflection(states), cfg)
    results = synchronize(streams, cfg)
    assert len(results) == 4
    positions = [r.position for r in results]
    assert all(b - a >= 9560 for a, b in zip(positions, positions[1:]))
    assert all(abs(p - k * 9600) <= 40 for k, p in enumerate(positions))


def test_streaming_sync_matches_batch():
    cfg = ReceiverConfig()
    rng = np.random.default_rng(13)
    states = repeat_frames(FRAME, FskConfig(), 30.0, 2000.0, start_time=0.37).states
    magnitudes = 1.0 + 0.1 * states + 0.02 * rng.standard_normal(states.size)
    streams = hard_decision_streams(ChannelEstimateSeries(magnitudes.astype(complex)), cfg)
    batch = synchronize(streams, cfg)

    synchronizer = StreamSynchronizer(cfg)
    step = 37
    length = max(len(s) for s in streams)
    for start in range(0, length, step):
        synchronizer.push([s[start:start + step] for s in streams])
    incremental = synchronizer.flush()
    assert [(r.position, r.offset_candidate) for r in incremental] == \
        [(r.position, r.offset_candidate) for r in batch]
    assert synchronizer.windows_examined == sum(max(0, len(s) - 119) for s in streams)


def test_false_alarm_rate_matches_binomial():
    cfg = ReceiverConfig(offset_candidates=1)
    rng = np.random.default_rng(17)
    stream = rng.integers(0, 2, 1_000_000, dtype=np.uint8)
    synchronizer = StreamSynchronizer(cfg)
    synchronizer.push([stream])
    detections = synchronizer.flush()

    windows = synchronizer.windows_examined
    assert windows == stream.size - 119
    agreements = sliding_agreements(stream, default_sync_sequence())[:windows]
    passing = set(np.flatnonzero(agreements >= cfg.required_matches).tolist())
    assert {r.frame_start for r in detections} <= passing

    p = false_alarm_probability()
    expected = windows * p
    sigma = math.sqrt(windows * p * (1 - p))
    log_info(f"{len(detections)} detections, {len(passing)} passing windows, "
             f"expected {expected:.3f} +/- {sigma:.3f}", indent=1)
    assert len(detections) <= expected + 3 * sigma
    assert abs(len(passing) - expected) <= 3 * sigma


def test_sync_threshold_matches_error_count():
    cfg = ReceiverConfig(offset_candidates=1)
    rng = np.random.default_rng(19)
    for errors in range(21):
        positions = rng.choice(63, size=errors, replace=False)
        results = synchronize([FRAME.flipped(positions).array], cfg)
        if errors <= 12:
            assert [r.frame_start for r in results] == [0], f"{errors} errors"
            assert results[0].correlation == pytest.approx((63 - errors) / 63)
        else:
            assert results == [], f"{errors} errors"


def test_crs_estimate_error_variance():
    params = ChannelParams(target_snr_db=10.0, h_backscatter=0.0)
    errors = []
    for k in range(50):
        grid = build_grid(CFG, CRS, TrafficModel.for_duty(0.0), 0.1, np.random.default_rng(k),
                          start_slot=200 * k)
        rx = apply_channel(grid, None, params, 41, observe='crs')
        errors.append(estimate_channel(rx, CRS).estimates - 1.0)
    errors = np.concatenate(errors)
    assert errors.size == 10_000
    expected = calibrate_noise(params) / CRS.pilots_per_slot(CFG.n_subcarriers)
    measured = float(np.mean(np.abs(errors) ** 2))
    log_info(f"estimate error variance {measured:.3e}, expected {expected:.3e}", indent=1)
    assert expected == pytest.approx(1e-1 / 200)
    assert measured == pytest.approx(expected, rel=0.10)


def test_operating_threshold_false_alarm_probability():
    assert false_alarm_probability() == pytest.approx(3.73e-7, rel=0.01)


def test_compute_ber_counts_errors():
    cfg = ReceiverConfig(offset_candidates=1)
    damaged = default_payload().flipped([0, 20, 40])
    stream = (default_sync_sequence() + damaged).array
    result = synchronize([stream], cfg)[0]
    assert compute_ber(result, default_payload()) == pytest.approx(3 / 57)
    with pytest.raises(LengthMismatchError):
        compute_ber(result, '0' * 56)


def test_pipeline_matches_direct_processing():
    cfg = ReceiverConfig()
    duration = 10.0
    reflection = repeat_frames(FRAME, FskConfig(), duration, 2000.0, start_time=0.5)
    params = ChannelParams(backscatter_ratio_db=-10.0)
    def chunks():
        for k, start in enumerate(range(0, 20000, 200)):
            grid = build_grid(CFG, CRS, TrafficModel.for_duty(0.5), 0.1,
                              np.random.default_rng(k), start_slot=start)
            yield apply_channel(grid, reflection, params, 1, observe='crs')

    pipeline = ReceiverPipeline(CRS, cfg, keep_estimates=True)
    result = asyncio.run(pipeline.run(chunks()))
    assert result.chunks == 100 and result.slots == 20000
    assert pipeline.processed == 100
    assert len(result.series) == 20000

    direct = synchronize(hard_decision_streams(result.series, cfg), cfg)
    assert [r.position for r in result.detections] == [r.position for r in direct]
    assert len(result.detections) == 1
    assert abs(result.detections[0].time(2000.0) - 0.5) <= 0.04


def test_pipeline_propagates_stage_errors():
    pipeline = ReceiverPipeline(CRS, ReceiverConfig())
    with pytest.raises(RepresentationError):
        asyncio.run(pipeline.run([np.zeros(4)]))
    with pytest.raises(ConfigError):
        ReceiverPipeline(CRS, ReceiverConfig(), estimator='matched')


if __name__ == "__main__":
    sys.exit(run_test_groups('receiver tests', {
        'estimation': [test_receiver_config_from_modulation, test_crs_estimate_recovers_gain,
                       test_crs_estimate_from_samples, test_crs_estimate_ignores_traffic,
                       test_wideband_power_follows_traffic,
                       test_series_append_requires_contiguity, test_crs_estimate_error_variance],
        'detection': [test_square_wave_decisions, test_decisions_ignore_dc_offset,
                      test_flat_window_decides_zero, test_window_past_end_rejected,
                      test_noiseless_frame_decoded_on_aligned_candidate,
                      test_streaming_detector_matches_batch],
        'sync': [test_sync_finds_embedded_frame, test_sync_tolerates_twelve_errors,
                 test_sync_waits_for_complete_payload, test_sync_keeps_one_detection_per_frame,
                 test_streaming_sync_matches_batch, test_false_alarm_rate_matches_binomial,
                 test_operating_threshold_false_alarm_probability, test_compute_ber_counts_errors,
                 test_sync_threshold_matches_error_count],
        'pipeline': [test_pipeline_matches_direct_processing,
                     test_pipeline_propagates_stage_errors],
    }))
