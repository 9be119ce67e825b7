#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Exception hierarchy for the backscatter link simulator.

Every error raised deliberately by the package derives from AmbcError so
callers (the CLI in particular) can report it cleanly and exit nonzero.
"""


class AmbcError(Exception):
    """Base class for all simulator errors."""


class ConfigError(AmbcError, ValueError):
    """Raised when a configuration value is missing, malformed or out of range."""


class InvalidSeedError(AmbcError, ValueError):
    """Raised when a shift register seed cannot produce a sequence (all zeros)."""


class LengthMismatchError(AmbcError, ValueError):
    """Raised when two bit sequences that must align have different lengths."""


class CrsError(AmbcError, ValueError):
    """Raised when pilots are requested for a symbol that carries none."""


class GridError(AmbcError, ValueError):
    """Raised for resource grids whose shape does not match their configuration."""


class AliasingError(AmbcError, ValueError):
    """Raised when a time base is too coarse for the tones it has to carry."""


class RepresentationError(AmbcError, TypeError):
    """Raised when a signal representation does not suit the requested operation."""


class InsufficientDataError(AmbcError, ValueError):
    """Raised when fewer samples are available than an operation needs."""


class ReportError(AmbcError, OSError):
    """Raised when report files cannot be written."""

    def __init__(self, path, reason):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"Cannot write report file {self.path}: {reason}")
