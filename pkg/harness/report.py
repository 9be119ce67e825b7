#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Detection reports and their file formats.

emit_report writes, for a list of reports:
    frames.csv        one row per transmitted complete frame
    false_alarms.csv  one row per detection not matched to a frame
    summary.csv       one row per sweep point
    ber_cdf.csv       empirical CDF of the data BER of detected frames
    summary.txt       frames and BER per point, one column per point

Missing values are written as NA. Numbers use a fixed format so equal
reports give byte-identical files.
"""

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from utils.errors import ReportError

logger = logging.getLogger(__name__)

MISSING = 'NA'
FORMATS = ('csv', 'summary-text')


def _fmt(value):
    if value is None:
        return MISSING
    if isinstance(value, (bool, np.bool_)):
        return '1' if value else '0'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), '.10g')


@dataclass(frozen=True)
class SweepPoint:
    """Coordinates of one simulated point; None means the base configuration value."""
    index: int = 0
    snr_db: Optional[float] = None
    traffic_duty: Optional[float] = None
    backscatter_ratio_db: Optional[float] = None
    trial: int = 0

    @property
    def label(self):
        parts = []
        if self.snr_db is not None:
            parts.append(f"snr={_fmt(self.snr_db)}dB")
        if self.traffic_duty is not None:
            parts.append(f"duty={_fmt(self.traffic_duty)}")
        if self.backscatter_ratio_db is not None:
            parts.append(f"ratio={_fmt(self.backscatter_ratio_db)}dB")
        parts.append(f"trial={self.trial}")
        return ','.join(parts)


@dataclass(frozen=True)
class FrameRecord:
    """Fate of one transmitted frame."""
    frame_index: int
    start_time: float
    detected: bool
    detection_time: Optional[float] = None
    correlation: Optional[float] = None
    data_ber: Optional[float] = None
    offset_candidate: Optional[int] = None


@dataclass(frozen=True)
class FalseAlarmRecord:
    """Detection with no transmitted frame within the matching window."""
    detection_time: float
    correlation: float
    data_ber: float
    offset_candidate: int


@dataclass(frozen=True)
class DetectionReport:
    """
    Outcome of one sweep point.

    transmitted_frames counts complete frames; detected_frames + missed_frames
    equals it. partial_frames counts frames cut by the end of the observation.
    expected_frames is the observation time divided by the nominal frame duration.
    """
    point: SweepPoint
    duration: float
    snr_db: Optional[float]
    transmitted_frames: int
    expected_frames: int
    partial_frames: int
    detected_frames: int
    missed_frames: int
    false_alarms: int
    frames: tuple = ()
    false_alarm_records: tuple = ()
    bit_accuracy: Optional[float] = None
    windows_examined: int = 0
    ber_cdf: tuple = field(init=False, default=())

    def __post_init__(self):
        bers = sorted(f.data_ber for f in self.frames if f.detected)
        object.__setattr__(self, 'ber_cdf', tuple(bers))

    @property
    def detection_ratio(self):
        if self.transmitted_frames == 0:
            return 0.0
        return self.detected_frames / self.transmitted_frames

    @property
    def mean_data_ber(self):
        if not self.ber_cdf:
            return None
        return float(np.mean(self.ber_cdf))

    def ber_quantile(self, q):
        """Empirical quantile of the data BER over detected frames, None if none."""
        if not self.ber_cdf:
            return None
        return float(np.quantile(self.ber_cdf, q))

    def cdf_points(self):
        """(ber, P[BER <= ber]) at each distinct BER, the last reaching 1."""
        if not self.ber_cdf:
            return []
        values, counts = np.unique(self.ber_cdf, return_counts=True)
        cumulative = np.cumsum(counts) / len(self.ber_cdf)
        return [(float(ber), float(prob)) for ber, prob in zip(values, cumulative)]


SUMMARY_COLUMNS = [
    'point', 'snr_db', 'traffic_duty', 'backscatter_ratio_db', 'trial',
    'observation_duration_s', 'transmitted_frames', 'expected_frames', 'partial_frames',
    'detected_frames', 'missed_frames', 'false_alarms', 'detection_ratio',
    'mean_data_ber', 'ber_q50', 'ber_q95', 'bit_accuracy', 'windows_examined',
]


def _summary_row(report):
    p = report.point
    return [p.label, _fmt(report.snr_db), _fmt(p.traffic_duty), _fmt(p.backscatter_ratio_db),
            _fmt(p.trial), _fmt(report.duration), _fmt(report.transmitted_frames),
            _fmt(report.expected_frames), _fmt(report.partial_frames),
            _fmt(report.detected_frames), _fmt(report.missed_frames),
            _fmt(report.false_alarms), _fmt(report.detection_ratio),
            _fmt(report.mean_data_ber), _fmt(report.ber_quantile(0.5)),
            _fmt(report.ber_quantile(0.95)), _fmt(report.bit_accuracy),
            _fmt(report.windows_examined)]


def _write_csv(path, header, rows):
    try:
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise ReportError(path, e.strerror or str(e)) from e
    return path


def _write_summary_text(path, reports):
    rows = [
        ('Point', [r.point.label for r in reports]),
        ('Average SNR (dB)', [_fmt(r.snr_db) for r in reports]),
        ('Observation duration (s)', [_fmt(r.duration) for r in reports]),
        ('Transmitted frames', [_fmt(r.transmitted_frames) for r in reports]),
        ('Detected frames', [_fmt(r.detected_frames) for r in reports]),
        ('Detection ratio (%)', [format(100.0 * r.detection_ratio, '.2f') for r in reports]),
        ('Average data BER', [_fmt(r.mean_data_ber) for r in reports]),
    ]
    label_width = max(len(label) for label, _ in rows)
    widths = [max(len(values[i]) for _, values in rows) for i in range(len(reports))]
    lines = []
    for label, values in rows:
        cells = [v.rjust(w) for v, w in zip(values, widths)]
        lines.append('  '.join([label.ljust(label_width)] + cells).rstrip())
    try:
        with open(path, 'w') as f:
            f.write('\n'.join(lines) + '\n')
    except OSError as e:
        raise ReportError(path, e.strerror or str(e)) from e
    return path


def emit_report(reports, output_dir, formats=FORMATS):
    """
    Write report files for a list of DetectionReports.

    Args:
        reports (list): Reports in sweep order.
        output_dir (str): Destination directory, created if missing.
        formats (tuple): Any of 'csv' and 'summary-text'.

    Returns:
        list: Paths written.

    Raises:
        ReportError: If a file cannot be written.
    """
    unknown = set(formats) - set(FORMATS)
    if unknown:
        raise ValueError(f"unknown report formats: {', '.join(sorted(unknown))}")
    output_dir = Path(output_dir)
    try:
        os.makedirs(output_dir, exist_ok=True)
    except OSError as e:
        raise ReportError(output_dir, e.strerror or str(e)) from e

    written = []
    if 'csv' in formats:
        frame_rows = []
        alarm_rows = []
        cdf_rows = []
        for r in reports:
            label = r.point.label
            for f in r.frames:
                frame_rows.append([label, f.frame_index, _fmt(f.start_time), _fmt(f.detected),
                                   _fmt(f.detection_time), _fmt(f.correlation),
                                   _fmt(f.data_ber), _fmt(f.offset_candidate)])
            for a in r.false_alarm_records:
                alarm_rows.append([label, _fmt(a.detection_time), _fmt(a.correlation),
                                   _fmt(a.data_ber), _fmt(a.offset_candidate)])
            for ber, prob in r.cdf_points():
                cdf_rows.append([label, _fmt(ber), _fmt(prob)])

        written.append(_write_csv(output_dir / 'frames.csv',
                                  ['point', 'frame_index', 'start_time_s', 'detected',
                                   'detection_time_s', 'correlation', 'data_ber',
                                   'offset_candidate'], frame_rows))
        written.append(_write_csv(output_dir / 'false_alarms.csv',
                                  ['point', 'detection_time_s', 'correlation', 'data_ber',
                                   'offset_candidate'], alarm_rows))
        written.append(_write_csv(output_dir / 'summary.csv', SUMMARY_COLUMNS,
                                  [_summary_row(r) for r in reports]))
        written.append(_write_csv(output_dir / 'ber_cdf.csv',
                                  ['point', 'data_ber', 'cumulative_probability'], cdf_rows))
    if 'summary-text' in formats:
        written.append(_write_summary_text(output_dir / 'summary.txt', reports))

    for path in written:
        logger.info("Wrote %s", path)
    return written
