#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Fast property checks of the whole chain, run by `ambcsim.py selftest`.
"""

import logging
import time

import numpy as np

from harness.experiment import ExperimentConfig, run_point
from harness.report import DetectionReport, FrameRecord, SweepPoint
from receiver.detector import ReceiverConfig, decide_windows
from receiver.synchronizer import synchronize
from signals.bitseq import (FRAME_LENGTH, LfsrSpec, agreement_correlation, build_frame,
                            circular_autocorrelation, default_payload, default_sync_sequence,
                            generate_m_sequence)

logger = logging.getLogger(__name__)


def check_frame_arithmetic():
    frame = build_frame(default_payload())
    assert len(frame) == FRAME_LENGTH == 120, "frame must hold 120 bits"
    assert abs(FRAME_LENGTH * 0.04 - 4.8) < 1e-12, "frame must last 4.8 s"
    assert int(4171 // 4.8) == 868, "4171 s must hold 868 complete frames"


def check_threshold_equivalence():
    sync = default_sync_sequence()
    assert agreement_correlation(sync.flipped(range(12)), sync) >= 0.8, "12 errors must pass"
    assert agreement_correlation(sync.flipped(range(13)), sync) < 0.8, "13 errors must fail"


def check_m_sequence():
    seq = generate_m_sequence(LfsrSpec())
    assert len(seq) == 63, "period must be 63"
    assert int(seq.array.sum()) == 32, "m-sequence must hold 32 ones"
    acf = circular_autocorrelation(seq)
    assert acf[0] == 63 and np.all(acf[1:] == -1), "autocorrelation must be two-valued"


def check_dc_immunity():
    rng = np.random.default_rng(7)
    cfg = ReceiverConfig()
    windows = np.abs(rng.normal(1.0, 0.2, size=(200, cfg.symbol_samples)))
    bits, _ = decide_windows(windows, cfg)
    shifted, _ = decide_windows(windows + 3.5, cfg)
    assert np.array_equal(bits, shifted), "a constant offset must not change decisions"


def check_sync_on_clean_stream():
    rng = np.random.default_rng(11)
    cfg = ReceiverConfig(offset_candidates=1)
    frame = build_frame(default_payload())
    stream = np.concatenate([rng.integers(0, 2, 500), frame.array, rng.integers(0, 2, 500)])
    results = synchronize([stream.astype(np.uint8)], cfg)
    assert any(r.frame_start == 500 and r.correlation == 1.0 for r in results), \
        "embedded frame must be found at its start"


def check_noiseless_end_to_end():
    report = run_point(ExperimentConfig(duration=48.0))
    assert report.transmitted_frames == 10, "48 s must carry 10 frames"
    assert report.detected_frames == 10, f"detected {report.detected_frames} of 10"
    assert report.mean_data_ber == 0.0, "noiseless payloads must be error free"
    points = report.cdf_points()
    assert points and points[-1][1] == 1.0, "CDF must end at 1"


def check_cdf_normalization():
    bers = [0.2, 0.0, 0.1, 0.1]
    frames = tuple(FrameRecord(frame_index=i, start_time=4.8 * i, detected=True, data_ber=ber)
                   for i, ber in enumerate(bers))
    report = DetectionReport(point=SweepPoint(), duration=19.2, snr_db=None,
                             transmitted_frames=4, expected_frames=4, partial_frames=0,
                             detected_frames=4, missed_frames=0, false_alarms=0, frames=frames)
    probabilities = [p for _, p in report.cdf_points()]
    assert len(probabilities) == 3, "tied BERs must share one CDF point"
    assert probabilities[-1] == 1.0, "CDF must end at 1"
    assert all(a <= b for a, b in zip(probabilities, probabilities[1:])), "CDF must not decrease"
    assert list(report.ber_cdf) == sorted(bers), "CDF must hold every detected frame"


CHECKS = [
    ('frame arithmetic', check_frame_arithmetic),
    ('threshold equivalence', check_threshold_equivalence),
    ('m-sequence properties', check_m_sequence),
    ('DC immunity', check_dc_immunity),
    ('sync on clean stream', check_sync_on_clean_stream),
    ('noiseless end-to-end', check_noiseless_end_to_end),
    ('CDF normalization', check_cdf_normalization),
]


def run_selftest(checks=None):
    """
    Run the property checks.

    Returns:
        tuple: (names passed, names failed)
    """
    passed, failed = [], []
    for name, check in checks or CHECKS:
        started = time.time()
        try:
            check()
        except Exception as e:
            logger.error("FAIL %s: %s", name, e)
            failed.append(name)
        else:
            logger.info("PASS %s (%.1f s)", name, time.time() - started)
            passed.append(name)
    logger.info("Selftest complete. Passed: %d, Failed: %d", len(passed), len(failed))
    return passed, failed


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format='%(asctime)s [%(levelname)s] %(message)s')
    _, failures = run_selftest()
    raise SystemExit(1 if failures else 0)
