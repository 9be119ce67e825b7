#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Ambient Backscatter Link Simulator - Main Application

Simulates a zero-energy device that sends FSK frames by modulating the
reflection of an LTE-like downlink, and a receiver that recovers them from
per-slot CRS channel estimates.

Subcommands:
    run       simulate one point and write its report
    sweep     simulate every point of the configured sweep
    selftest  run the fast property checks
"""

import argparse
import asyncio
import logging
import math
import signal
import sys
from pathlib import Path

from harness.experiment import ExperimentConfig, simulate_point, sweep
from harness.report import SweepPoint, emit_report
from harness.selftest import run_selftest
from signals.bitseq import build_frame
from signals.lte_waveform import SLOT_DURATION, build_grid, export_grid
from signals.zed import repeat_frames
from utils.config import default_config, load_config
from utils.errors import AmbcError, ConfigError
from utils.seeding import Stream, derive_rng, point_seed

logger = logging.getLogger('ambcsim')


class AmbcSimulator:
    """
    Main application class that ties the experiment to its outputs.

    Holds the validated experiment, runs single points or sweeps and writes
    the report files.
    """

    def __init__(self, config):
        """
        Initialize the simulator.

        Args:
            config (dict): Merged and validated configuration dictionary.

        Raises:
            ConfigError: If the configuration does not describe a valid experiment.
        """
        self.config = config
        self.experiment = ExperimentConfig.from_dict(config)
        self.output_dir = Path(self.experiment.output_dir)
        self._shutdown = False

    async def run_single(self, point, debug_dump=False):
        """Simulate one point and write its report files."""
        report, result = await simulate_point(self.experiment, point, keep_estimates=debug_dump)
        paths = emit_report([report], self.output_dir)
        if debug_dump:
            paths += self.write_debug_dump(point, result)
        return report, paths

    async def run_sweep(self, progress=True):
        """Simulate the configured sweep and write the report files."""
        reports = await sweep(self.experiment, progress=progress,
                              should_stop=lambda: self._shutdown)
        paths = emit_report(reports, self.output_dir) if reports else []
        return reports, paths

    def write_debug_dump(self, point, result):
        """Write the estimate series, the ZED reflection and the first transmitted chunk."""
        cfg = self.experiment.at_point(point)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        paths = []

        if result.series is not None:
            path = self.output_dir / 'estimates.csv'
            result.series.to_csv(path)
            paths.append(path)

        if cfg.zed_enabled:
            frame = build_frame(cfg.payload, cfg.receiver.sync)
            reflection = repeat_frames(frame, cfg.fsk, cfg.duration, cfg.estimate_rate,
                                       start_time=cfg.zed_start_offset)
            path = self.output_dir / 'zed_waveform.csv'
            reflection.to_csv(path)
            paths.append(path)

        seed = point_seed(cfg.seed, point.index)
        total_slots = int(math.floor(cfg.duration / SLOT_DURATION + 1e-9))
        n_slots = min(cfg.chunk_slots, total_slots)
        grid = build_grid(cfg.grid, cfg.crs, cfg.traffic, n_slots * SLOT_DURATION,
                          derive_rng(seed, Stream.TRAFFIC, 0))
        path = self.output_dir / 'grid.bin'
        export_grid(grid, path)
        paths.append(path)

        for path in paths:
            logger.info("Wrote %s", path)
        return paths

    def signal_shutdown(self):
        """Signal the application to stop after the points already running."""
        logger.warning("Shutdown signal received, finishing running points...")
        self._shutdown = True


def parse_arguments(argv=None):
    """
    Parse command line arguments for the application.

    Returns:
        argparse.Namespace: Parsed arguments
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", dest="config_file",
                        help="Path to configuration file (defaults are used if omitted)")
    common.add_argument("--seed", type=int, help="Override the run seed")
    common.add_argument("--mode", choices=["grid", "waveform"],
                        help="Simulate in the resource-grid or the sampled-waveform domain")
    common.add_argument("-o", "--output-dir", dest="output_dir",
                        help="Directory for report files")
    common.add_argument("--workers", type=int, help="Worker processes for sweeps")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Only show warnings")
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Show debug messages")

    parser = argparse.ArgumentParser(
        description="Ambient backscatter link simulator over an LTE-like downlink"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", parents=[common], help="Simulate a single point")
    run.add_argument("--snr", type=float, help="Target SNR in dB")
    run.add_argument("--duty", type=float, help="Traffic duty cycle in [0, 1]")
    run.add_argument("--ratio", type=float, help="Backscatter-to-direct power ratio in dB")
    run.add_argument("--debug-dump", action="store_true",
                     help="Also write estimates, ZED reflection and a grid snapshot")

    commands.add_parser("sweep", parents=[common], help="Simulate the configured sweep")
    commands.add_parser("selftest", parents=[common], help="Run the property checks")

    return parser.parse_args(argv)


def build_configuration(args):
    """Load the configuration file (or defaults) and apply command line overrides."""
    config = load_config(args.config_file) if args.config_file else default_config()
    if args.seed is not None:
        config['seed'] = args.seed
    if args.mode is not None:
        config['mode'] = args.mode
    if args.output_dir is not None:
        config['output_dir'] = args.output_dir
    if args.workers is not None:
        config['workers'] = args.workers
    return config


async def main(argv=None):
    """Main entry point for the simulator. Returns the process exit status."""
    args = parse_arguments(argv)
    level = logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s [%(levelname)s] %(name)s: %(message)s')

    if args.command == "selftest":
        # the checks start their own event loops
        _, failed = await asyncio.to_thread(run_selftest)
        return 1 if failed else 0

    try:
        app = AmbcSimulator(build_configuration(args))
    except ConfigError as e:
        print(f"Error loading configuration: {e}", file=sys.stderr)
        return 1

    # A sweep stops gracefully on SIGINT/SIGTERM; a single run keeps the default
    # handlers so Ctrl-C interrupts it.
    previous_handlers = {}
    if args.command == "sweep":
        for sig in (signal.SIGINT, signal.SIGTERM):
            previous_handlers[sig] = signal.signal(sig, lambda sig, frame: app.signal_shutdown())

    try:
        if args.command == "run":
            point = SweepPoint(snr_db=args.snr, traffic_duty=args.duty,
                               backscatter_ratio_db=args.ratio)
            report, _ = await app.run_single(point, debug_dump=args.debug_dump)
            logger.info("Detected %d of %d frames (ratio %.2f%%), mean data BER %s",
                        report.detected_frames, report.transmitted_frames,
                        100.0 * report.detection_ratio,
                        'n/a' if report.mean_data_ber is None else f"{report.mean_data_ber:.4f}")
        else:
            reports, _ = await app.run_sweep(progress=not args.quiet)
            logger.info("Sweep finished with %d point(s)", len(reports))
    except AmbcError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    finally:
        for sig, handler in previous_handlers.items():
            signal.signal(sig, signal.SIG_DFL if handler is None else handler)
    return 0


if __name__ == "__main__":
    try:
        sys.exit(asyncio.run(main()))
    except KeyboardInterrupt:
        print("Interrupted", file=sys.stderr)
        sys.exit(130)
