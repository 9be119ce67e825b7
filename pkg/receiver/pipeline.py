#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Streaming receiver chain.

Received chunks flow through three stages connected by bounded asyncio
queues: channel estimation, FSK hard decisions and frame synchronization.
A None entry marks the end of the stream. Each stage handles its chunks
strictly in order, so the output does not depend on queue sizes.
"""

import asyncio
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from receiver.detector import StreamingDetector
from receiver.estimator import ChannelEstimateSeries, estimate_channel, estimate_wideband_power
from receiver.synchronizer import StreamSynchronizer
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

_END = None


@dataclass
class PipelineResult:
    """Output of one pipeline run."""
    detections: list = field(default_factory=list)
    streams: List[np.ndarray] = field(default_factory=list)
    series: Optional[ChannelEstimateSeries] = None
    origin_slot: int = 0
    chunks: int = 0
    slots: int = 0
    windows_examined: int = 0


class ReceiverPipeline:
    """
    Run estimation, detection and synchronization as concurrent stages.

    Attributes:
        processed (int): Chunks fully handled by the last stage.
    """

    def __init__(self, crs, receiver_config, estimator='crs', max_queue_size=4,
                 keep_streams=True, keep_estimates=False):
        """
        Initialize the pipeline.

        Args:
            crs (CrsConfig): Pilot placement used by the CRS estimator.
            receiver_config (ReceiverConfig): Detection and sync settings.
            estimator (str): 'crs' or 'wideband'.
            max_queue_size (int): Capacity of each inter-stage queue.
            keep_streams (bool): Retain the complete hard-decision streams.
            keep_estimates (bool): Retain the complete estimate series.
        """
        if estimator not in ('crs', 'wideband'):
            raise ConfigError(f"unknown estimator: {estimator}")
        self.crs = crs
        self.receiver_config = receiver_config
        self.estimator = estimator
        self.max_queue_size = max_queue_size
        self.keep_streams = keep_streams
        self.keep_estimates = keep_estimates
        self.processed = 0

    def _estimate(self, rx):
        if self.estimator == 'crs':
            return estimate_channel(rx, self.crs)
        return estimate_wideband_power(rx)

    async def _source_stage(self, source, out_queue):
        for chunk in source:
            await out_queue.put(chunk)
        await out_queue.put(_END)

    async def _estimation_stage(self, in_queue, out_queue, result):
        series = None
        while True:
            rx = await in_queue.get()
            if rx is _END:
                break
            estimates = self._estimate(rx)
            result.chunks += 1
            result.slots += len(estimates)
            if self.keep_estimates:
                series = estimates if series is None else series.append(estimates)
            await out_queue.put(estimates)
        result.series = series
        await out_queue.put(_END)

    async def _detection_stage(self, in_queue, out_queue, result):
        detector = StreamingDetector(self.receiver_config)
        collected = [[] for _ in self.receiver_config.candidate_offsets]
        while True:
            estimates = await in_queue.get()
            if estimates is _END:
                break
            new_bits = detector.push(estimates)
            if self.keep_streams:
                for c, bits in enumerate(new_bits):
                    collected[c].append(bits)
            await out_queue.put(new_bits)
        result.origin_slot = detector.origin_slot or 0
        if self.keep_streams:
            result.streams = [np.concatenate(parts) if parts else np.zeros(0, dtype=np.uint8)
                              for parts in collected]
        await out_queue.put(_END)

    async def _sync_stage(self, in_queue, result):
        synchronizer = StreamSynchronizer(self.receiver_config)
        while True:
            new_bits = await in_queue.get()
            if new_bits is _END:
                break
            synchronizer.push(new_bits)
            self.processed += 1
        result.detections = synchronizer.flush()
        result.windows_examined = synchronizer.windows_examined

    async def run(self, source):
        """
        Drive a chunk source through the chain.

        Args:
            source: Iterable of received ResourceGrid or SampleBuffer chunks
                covering consecutive slots.

        Returns:
            PipelineResult: Detections plus whatever was asked to be kept.
        """
        result = PipelineResult()
        received = asyncio.Queue(maxsize=self.max_queue_size)
        estimated = asyncio.Queue(maxsize=self.max_queue_size)
        decided = asyncio.Queue(maxsize=self.max_queue_size)

        tasks = [
            asyncio.create_task(self._source_stage(source, received)),
            asyncio.create_task(self._estimation_stage(received, estimated, result)),
            asyncio.create_task(self._detection_stage(estimated, decided, result)),
            asyncio.create_task(self._sync_stage(decided, result)),
        ]
        try:
            await asyncio.gather(*tasks)
        except Exception as e:
            logger.error("Receiver pipeline failed: %s", e)
            for task in tasks:
                task.cancel()
            await asyncio.gather(*tasks, return_exceptions=True)
            raise

        logger.debug("Pipeline complete. Chunks: %d, slots: %d, frames: %d",
                     result.chunks, result.slots, len(result.detections))
        return result
