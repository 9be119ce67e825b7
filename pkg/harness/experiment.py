#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Experiment harness.

Drives transmitter, ZED, channel and receiver for one sweep point at a
time, matches detections against the frames the ZED actually sent and
summarizes the outcome in a DetectionReport. Sweeps run points in order
or on a process pool; every point derives its randomness from
(seed, point index), so the worker count does not change results.
"""

import asyncio
import copy
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from tqdm import tqdm

from harness.report import DetectionReport, FalseAlarmRecord, FrameRecord, SweepPoint
from receiver.detector import ReceiverConfig
from receiver.pipeline import ReceiverPipeline
from receiver.synchronizer import compute_ber
from signals.bitseq import BitSequence, build_frame, default_payload
from signals.channel import OBSERVE_ALL, OBSERVE_CRS, ChannelParams, apply_channel
from signals.lte_waveform import (SLOT_DURATION, CrsConfig, GridConfig, TrafficModel,
                                  build_grid, synthesize_baseband)
from signals.zed import FskConfig, repeat_frames
from utils.config import default_config, merge_defaults, validate_config
from utils.errors import ConfigError
from utils.seeding import Stream, derive_rng, point_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of an experiment, built from a configuration dict."""
    grid: GridConfig = field(default_factory=GridConfig)
    crs: CrsConfig = field(default_factory=CrsConfig)
    traffic: TrafficModel = field(default_factory=TrafficModel)
    fsk: FskConfig = field(default_factory=FskConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)
    payload: BitSequence = field(default_factory=default_payload)
    duration: float = 48.0
    seed: int = 1
    mode: str = 'grid'
    estimator: str = 'crs'
    zed_enabled: bool = True
    zed_start_offset: float = 0.0
    match_window_symbols: float = 1.0
    mean_on_subframes: float = 10.0
    sweep_snr_db: tuple = ()
    sweep_traffic_duty: tuple = ()
    sweep_backscatter_ratio_db: tuple = ()
    trials: int = 1
    workers: int = 1
    chunk_slots: int = 200
    output_dir: str = 'results'

    def __post_init__(self):
        if self.mode not in ('grid', 'waveform'):
            raise ConfigError(f"unknown mode: {self.mode}")
        if self.estimator not in ('crs', 'wideband'):
            raise ConfigError(f"unknown estimator: {self.estimator}")
        if self.duration < SLOT_DURATION:
            raise ConfigError("duration must cover at least one slot")
        if self.chunk_slots < 2 or self.chunk_slots % 2:
            raise ConfigError("chunk_slots must be a positive even number")
        if len(self.payload) != self.receiver.data_length:
            raise ConfigError(f"payload must be {self.receiver.data_length} bits")

    @property
    def estimate_rate(self):
        return self.grid.estimate_rate

    @classmethod
    def from_dict(cls, config=None):
        """
        Build and validate an experiment from a configuration dictionary.

        Missing keys take their defaults. Raises ConfigError on any invalid value.
        """
        config = merge_defaults(copy.deepcopy(config) if config is not None else default_config())
        validate_config(config)
        g, c, t, z = config['grid'], config['crs'], config['traffic'], config['zed']
        ch, rx, sw = config['channel'], config['receiver'], config['sweep']

        grid = GridConfig(g['bandwidth_rb'], float(g['subcarrier_spacing']), g['fft_size'],
                          float(g['sample_rate']), g['cp_scheme'], float(g['carrier_label']))
        crs = CrsConfig(c['cell_id'], c['frequency_stride'], tuple(c['symbol_positions']))
        traffic = TrafficModel(t['kind'], float(t['duty_target']), float(t['p_on_to_off']),
                               float(t['p_off_to_on']), float(t['data_re_power']))
        fsk = FskConfig(float(z['f0']), float(z['f1']), float(z['symbol_duration']),
                        tuple(z['reflection_states']), float(z['inter_frame_gap']),
                        float(z['clock_skew_ppm']))
        snr = ch['target_snr_db']
        channel = ChannelParams(complex(*ch['h_direct']), float(ch['backscatter_ratio_db']),
                                float(ch['backscatter_phase_deg']),
                                None if snr is None else float(snr), ch['fading'],
                                float(ch['coherence_interval']))
        receiver = ReceiverConfig.from_fsk(fsk, grid.estimate_rate,
                                           threshold=float(rx['threshold']),
                                           offset_candidates=rx['offset_candidates'])
        payload = default_payload() if z['payload'] is None else BitSequence(z['payload'])

        return cls(grid=grid, crs=crs, traffic=traffic, fsk=fsk, channel=channel,
                   receiver=receiver, payload=payload, duration=float(config['duration']),
                   seed=config['seed'], mode=config['mode'], estimator=rx['estimator'],
                   zed_enabled=z['enabled'], zed_start_offset=float(z['start_offset']),
                   match_window_symbols=float(rx['match_window_symbols']),
                   mean_on_subframes=float(t['mean_on_subframes']),
                   sweep_snr_db=tuple(float(v) for v in sw['snr_db']),
                   sweep_traffic_duty=tuple(float(v) for v in sw['traffic_duty']),
                   sweep_backscatter_ratio_db=tuple(float(v) for v in sw['backscatter_ratio_db']),
                   trials=config['trials'], workers=config['workers'],
                   chunk_slots=config['chunk_slots'], output_dir=config['output_dir'])

    def points(self):
        """
        Cartesian product of the sweep axes and trials, in a fixed order.

        An empty axis keeps the base value; with every axis empty the sweep
        holds one point per trial.
        """
        axes = [self.sweep_snr_db or (None,), self.sweep_traffic_duty or (None,),
                self.sweep_backscatter_ratio_db or (None,), range(self.trials)]
        return [SweepPoint(index, snr, duty, ratio, trial)
                for index, (snr, duty, ratio, trial) in enumerate(itertools.product(*axes))]

    def at_point(self, point):
        """Configuration with the point's coordinates substituted."""
        channel, traffic = self.channel, self.traffic
        if point.snr_db is not None:
            channel = replace(channel, target_snr_db=point.snr_db)
        if point.backscatter_ratio_db is not None:
            channel = replace(channel, backscatter_ratio_db=point.backscatter_ratio_db)
        if point.traffic_duty is not None:
            traffic = TrafficModel.for_duty(point.traffic_duty, self.traffic.kind,
                                            self.mean_on_subframes, self.traffic.data_re_power)
        return replace(self, channel=channel, traffic=traffic)


def _received_chunks(cfg, reflection, seed):
    """Generate received chunks of cfg.chunk_slots slots covering the duration."""
    total_slots = int(math.floor(cfg.duration / SLOT_DURATION + 1e-9))
    if cfg.mode == 'waveform' or cfg.estimator == 'wideband':
        observe = OBSERVE_ALL
    else:
        observe = OBSERVE_CRS
    state = None
    for k, start in enumerate(range(0, total_slots, cfg.chunk_slots)):
        n_slots = min(cfg.chunk_slots, total_slots - start)
        grid = build_grid(cfg.grid, cfg.crs, cfg.traffic, n_slots * SLOT_DURATION,
                          derive_rng(seed, Stream.TRAFFIC, k), start_slot=start,
                          traffic_state=state)
        state = grid.traffic_state
        tx = synthesize_baseband(grid, cfg.grid) if cfg.mode == 'waveform' else grid
        yield apply_channel(tx, reflection, cfg.channel, seed, observe=observe)


def _nearest_candidate(cfg, reflection):
    """Offset candidate closest to the true symbol alignment."""
    n = cfg.receiver.symbol_samples
    start = reflection.frame_starts[0] * cfg.estimate_rate if reflection.frame_starts else 0.0
    phase = start % n
    distances = [min(abs(phase - o), n - abs(phase - o)) for o in cfg.receiver.candidate_offsets]
    return int(np.argmin(distances))


def _bit_accuracy(cfg, reflection, frame, streams):
    """Agreement between the truth-aligned candidate stream and the bits sent."""
    if not streams or reflection.complete_frames == 0:
        return None
    c = _nearest_candidate(cfg, reflection)
    stream = streams[c]
    n = cfg.receiver.symbol_samples
    offset = cfg.receiver.candidate_offsets[c]
    symbol = n * cfg.fsk.skew_factor
    truth = frame.array
    agree = total = 0
    for start in reflection.frame_starts[:reflection.complete_frames]:
        base = start * cfg.estimate_rate
        j = np.rint((base + np.arange(truth.size) * symbol - offset) / n).astype(np.int64)
        valid = (j >= 0) & (j < stream.size)
        agree += int(np.count_nonzero(stream[j[valid]] == truth[valid]))
        total += int(np.count_nonzero(valid))
    return agree / total if total else None


def build_report(cfg, point, reflection, frame, result):
    """
    Match detections to transmitted frames and summarize.

    A detection within match_window_symbols symbols of a complete frame's
    start, not yet claimed by another detection, detects that frame; every
    other detection is a false alarm.
    """
    rate = cfg.estimate_rate
    origin = result.origin_slot / rate
    window = cfg.match_window_symbols * cfg.fsk.symbol_duration
    starts = list(reflection.frame_starts[:reflection.complete_frames]) if reflection else []

    matched = {}
    alarms = []
    for detection in result.detections:
        t = detection.time(rate, origin)
        ber = compute_ber(detection, cfg.payload)
        r = int(np.argmin([abs(t - s) for s in starts])) if starts else None
        if r is not None and abs(t - starts[r]) <= window + 1e-9 and r not in matched:
            matched[r] = (t, detection, ber)
        else:
            alarms.append(FalseAlarmRecord(t, detection.correlation, ber,
                                           detection.offset_candidate))

    frames = []
    for r, start in enumerate(starts):
        if r in matched:
            t, detection, ber = matched[r]
            frames.append(FrameRecord(r, start, True, t, detection.correlation, ber,
                                      detection.offset_candidate))
        else:
            frames.append(FrameRecord(r, start, False))

    nominal = cfg.fsk.symbol_duration * cfg.receiver.frame_length
    accuracy = _bit_accuracy(cfg, reflection, frame, result.streams) if reflection else None
    return DetectionReport(
        point=point,
        duration=cfg.duration,
        snr_db=cfg.channel.target_snr_db,
        transmitted_frames=len(starts),
        expected_frames=int(math.floor(cfg.duration / nominal + 1e-9)),
        partial_frames=reflection.partial_frames if reflection else 0,
        detected_frames=len(matched),
        missed_frames=len(starts) - len(matched),
        false_alarms=len(alarms),
        frames=tuple(frames),
        false_alarm_records=tuple(alarms),
        bit_accuracy=accuracy,
        windows_examined=result.windows_examined,
    )


async def simulate_point(cfg, point=None, keep_estimates=False):
    """
    Simulate one sweep point inside a running event loop.

    Returns:
        tuple: (DetectionReport, PipelineResult)
    """
    point = point or SweepPoint()
    pcfg = cfg.at_point(point)
    seed = point_seed(cfg.seed, point.index)
    frame = build_frame(pcfg.payload, pcfg.receiver.sync)

    reflection = None
    if pcfg.zed_enabled:
        reflection = repeat_frames(frame, pcfg.fsk, pcfg.duration, pcfg.estimate_rate,
                                   start_time=pcfg.zed_start_offset)

    pipeline = ReceiverPipeline(pcfg.crs, pcfg.receiver, pcfg.estimator,
                                keep_streams=True, keep_estimates=keep_estimates)
    result = await pipeline.run(_received_chunks(pcfg, reflection, seed))
    report = build_report(pcfg, point, reflection, frame, result)
    logger.info("Point %s: %d/%d frames detected, %d false alarms",
                point.label, report.detected_frames, report.transmitted_frames,
                report.false_alarms)
    return report, result


def run_point(cfg, point=None):
    """
    Simulate one sweep point.

    Args:
        cfg (ExperimentConfig): Experiment description.
        point (SweepPoint, optional): Coordinates; the base configuration if None.

    Returns:
        DetectionReport: Outcome of the point.
    """
    report, _ = asyncio.run(simulate_point(cfg, point))
    return report


async def sweep(cfg, progress=True, should_stop=None):
    """
    Simulate every sweep point, in parallel when cfg.workers > 1.

    Args:
        cfg (ExperimentConfig): Experiment description.
        progress (bool): Show a tqdm progress bar.
        should_stop (callable, optional): Polled before each point is started;
            once it returns True no further points are started.

    Returns:
        list: DetectionReports of the finished points, in point order.
    """
    points = cfg.points()
    logger.info("Starting sweep of %d points with %d worker(s)", len(points), cfg.workers)
    bar = tqdm(total=len(points), disable=not progress, desc='sweep', unit='point')
    stopping = should_stop or (lambda: False)
    try:
        if cfg.workers <= 1:
            reports = []
            for point in points:
                if stopping():
                    logger.warning("Sweep stopped after %d of %d points", len(reports), len(points))
                    break
                report, _ = await simulate_point(cfg, point)
                reports.append(report)
                bar.update(1)
            return reports

        loop = asyncio.get_running_loop()
        finished, index_of, pending = {}, {}, set()
        remaining = iter(enumerate(points))
        stopped = False
        with ProcessPoolExecutor(max_workers=cfg.workers) as executor:
            while True:
                # at most one point per worker in flight, so a stop leaves nothing queued
                while not stopped and len(pending) < cfg.workers:
                    item = next(remaining, None)
                    if item is None:
                        break
                    if stopping():
                        stopped = True
                        break
                    future = loop.run_in_executor(executor, run_point, cfg, item[1])
                    index_of[future] = item[0]
                    pending.add(future)
                if not pending:
                    break
                done, pending = await asyncio.wait(pending, return_when=asyncio.FIRST_COMPLETED)
                for future in done:
                    finished[index_of.pop(future)] = future.result()
                    bar.update(1)
        if stopped:
            logger.warning("Sweep stopped after %d of %d points", len(finished), len(points))
        return [finished[i] for i in sorted(finished)]
    finally:
        bar.close()


def run_sweep(cfg, progress=False):
    """Synchronous wrapper around sweep()."""
    return asyncio.run(sweep(cfg, progress=progress))
